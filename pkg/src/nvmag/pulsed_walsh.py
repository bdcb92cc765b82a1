"""Walsh-coded simultaneous Ramsey protocol (linear-response model).

Eight sequences are run; in sequence n the final pi/2 phase of orientation i
is set by code row i, so the integrated PL is

    S_n = <S> + sum_i c_i(n) (<S> / alpha_i) B_i + noise

and each projection is recovered as B_i = (alpha_i / (8 <S>)) sum_n c_i(n) S_n.
The sequential alternative spends two sequences per orientation,
B_i = (alpha_i / (2 <S>)) (S_1 - S_2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import SensingMatrix
from .errors import InputError

DEFAULT_CODES = np.array(
    [
        [1, -1, 1, -1, 1, -1, 1, -1],
        [1, 1, -1, -1, 1, 1, -1, -1],
        [-1, 1, 1, -1, -1, 1, 1, -1],
        [1, 1, 1, 1, -1, -1, -1, -1],
    ],
    dtype=float,
)


@dataclass(frozen=True)
class WalshCode:
    codes: np.ndarray = field(default_factory=lambda: DEFAULT_CODES.copy())

    def __post_init__(self):
        c = np.asarray(self.codes, dtype=float)
        if c.ndim != 2 or c.shape[0] != 4:
            raise InputError("need four code rows")
        if not np.all(np.abs(c) == 1):
            raise InputError("code entries must be +1 or -1")
        gram = c @ c.T
        if not np.allclose(gram, c.shape[1] * np.eye(4)):
            raise InputError("code rows must be mutually orthogonal")
        object.__setattr__(self, "codes", c)

    @property
    def length(self) -> int:
        return self.codes.shape[1]

    @property
    def balanced(self) -> bool:
        return bool(np.all(self.codes.sum(axis=1) == 0))


@dataclass(frozen=True)
class RamseyConfig:
    t_init: float = 1e-6
    t_sense: float = 1e-6
    t_read: float = 1e-6
    alphas: np.ndarray = field(default_factory=lambda: np.ones(4))
    mean_pl: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float).reshape(4)
        object.__setattr__(self, "alphas", a)
        if not (self.t_init > 0 and self.t_sense > 0 and self.t_read > 0 and self.mean_pl > 0 and np.all(a > 0)):
            raise InputError("Ramsey timings, alphas and mean PL must be positive")

    @property
    def sequence_time(self) -> float:
        return self.t_init + self.t_sense + self.t_read

    def measurement_rate(self, n_sequences: int = 8) -> float:
        """Vector estimates per second for a block of ``n_sequences``."""
        return 1.0 / (n_sequences * self.sequence_time)


def encode_sequence(cfg: RamseyConfig, code: WalshCode, b, noise_std: float = 0.0, seed=None) -> np.ndarray:
    """Integrated PL of the coded block."""
    b = np.asarray(b, dtype=float).reshape(4)
    s = cfg.mean_pl + (code.codes.T * (cfg.mean_pl / cfg.alphas)) @ b
    if noise_std:
        s = s + noise_std * np.random.default_rng(seed).standard_normal(code.length)
    return s


def decode(s, cfg: RamseyConfig, code: WalshCode) -> np.ndarray:
    """Per-orientation field projections from a coded block."""
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != code.length:
        raise InputError(f"expected {code.length} PL values")
    return (cfg.alphas / (code.length * cfg.mean_pl)) * (s @ code.codes.T)


def encode_sequential(cfg: RamseyConfig, b, noise_std: float = 0.0, seed=None) -> np.ndarray:
    """Two sequences per orientation, shape (4, 2): the +/- projections."""
    b = np.asarray(b, dtype=float).reshape(4)
    d = (cfg.mean_pl / cfg.alphas) * b
    s = np.stack([cfg.mean_pl + d, cfg.mean_pl - d], axis=-1)
    if noise_std:
        s = s + noise_std * np.random.default_rng(seed).standard_normal(s.shape)
    return s


def decode_sequential(s, cfg: RamseyConfig) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return (cfg.alphas / (2.0 * cfg.mean_pl)) * (s[..., 0] - s[..., 1])


def decoded_std(cfg: RamseyConfig, noise_std: float, code: WalshCode | None = None) -> np.ndarray:
    """Analytic per-orientation standard deviation; sequential scheme if ``code`` is None."""
    if code is None:
        return cfg.alphas * noise_std / (np.sqrt(2.0) * cfg.mean_pl)
    n = code.length
    return cfg.alphas * noise_std * np.sqrt(n) / (n * cfg.mean_pl)


@dataclass
class SequentialResult:
    estimate: np.ndarray
    snr: np.ndarray  # |B_i| over the analytic per-estimate noise


def sequential_baseline(cfg: RamseyConfig, b, noise_std: float = 0.0, seed=None) -> SequentialResult:
    """Sequential two-sequence estimate for each orientation (same 8-sequence budget)."""
    est = decode_sequential(encode_sequential(cfg, b, noise_std, seed), cfg)
    sd = decoded_std(cfg, noise_std)
    with np.errstate(divide="ignore"):
        snr = np.where(sd > 0, np.abs(np.asarray(b, dtype=float)) / np.where(sd > 0, sd, 1.0), np.inf)
    return SequentialResult(est, snr)


@dataclass
class SnrComparison:
    trials: int
    b: np.ndarray
    mean_simultaneous: np.ndarray
    mean_sequential: np.ndarray
    std_simultaneous: np.ndarray
    std_sequential: np.ndarray

    @property
    def snr_ratio(self) -> np.ndarray:
        """(|B_i|/noise simultaneous) / (|B_i|/noise sequential) per orientation, against the true field."""
        return (np.abs(self.b) / self.std_simultaneous) / (np.abs(self.b) / self.std_sequential)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "b_true": self.b.tolist(),
            "mean_simultaneous": self.mean_simultaneous.tolist(),
            "mean_sequential": self.mean_sequential.tolist(),
            "std_simultaneous": self.std_simultaneous.tolist(),
            "std_sequential": self.std_sequential.tolist(),
            "snr_ratio": self.snr_ratio.tolist(),
        }


def compare_snr(cfg: RamseyConfig, code: WalshCode, b, noise_std: float, trials: int = 10_000, seed: int = 0) -> SnrComparison:
    """Monte-Carlo of both schemes with equal per-sequence noise and equal sequence count."""
    if trials < 2:
        raise InputError("need at least two trials")
    b = np.asarray(b, dtype=float).reshape(4)
    rng_sim, rng_seq = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    clean = encode_sequence(cfg, code, b)
    sim = decode(clean + noise_std * rng_sim.standard_normal((trials, code.length)), cfg, code)
    clean_seq = encode_sequential(cfg, b)
    seq = decode_sequential(clean_seq + noise_std * rng_seq.standard_normal((trials, 4, 2)), cfg)
    return SnrComparison(trials, b, sim.mean(axis=0), seq.mean(axis=0), sim.std(axis=0, ddof=1), seq.std(axis=0, ddof=1))


def default_bridge(m: SensingMatrix) -> np.ndarray:
    """Projections (T) -> line shifts (Hz): gamma times the sign of each row of A along its axis."""
    axes = np.array([l.orientation.axis for l in m.addressed])
    signs = np.sign(np.einsum("ij,ij->i", m.a, axes))
    return np.diag(m.gamma * signs)


def projections_to_field(projections, m: SensingMatrix, bridge=None) -> np.ndarray:
    """Map decoded per-orientation projections to a lab-frame field via A+."""
    bridge = default_bridge(m) if bridge is None else np.asarray(bridge, dtype=float).reshape(4, 4)
    return m.a_pinv @ (bridge @ np.asarray(projections, dtype=float).reshape(4))
