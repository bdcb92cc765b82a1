"""Static calibration: bias-field fit, sensing-matrix linearization, lock-in slopes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .constants import GAMMA_E
from .errors import Degenerate, InputError, PoorLinearity
from .lm import central_jacobian, levenberg_marquardt
from .spin_model import (
    DEFAULT_ADDRESSED,
    LINE_ORDER,
    ORIENTATIONS,
    Branch,
    HamiltonianParams,
    Line,
    line_frequencies,
)

#: Default finite-difference step for linearize: 10 Hz worth of field.
DEFAULT_STEP = 10.0 / GAMMA_E

_B_SCALE = 1e-3  # fit works in mT
_D_SCALE = 1e6  # and MHz offsets


@dataclass(frozen=True)
class OdmrLineCenters:
    """Eight measured line centers (Hz), ordered as ``LINE_ORDER``."""

    frequencies: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float).reshape(-1)
        if f.size != 8:
            raise InputError(f"expected 8 line centers, got {f.size}")
        if not np.all(np.isfinite(f)):
            raise InputError("line centers must be finite")
        if np.any(np.diff(f) <= 0):
            raise InputError("line centers must be strictly increasing")
        if f[0] <= 2.5e9 or f[-1] >= 3.2e9:
            raise InputError("line centers outside (2.5, 3.2) GHz")
        object.__setattr__(self, "frequencies", f)


@dataclass
class BiasFit:
    """Result of :func:`fit_bias`.

    Only the per-orientation splittings D + Mz_i enter the model, so D and
    the four Mz are not separately identifiable. The fit estimates the four
    splittings and reports D as their mean (hence ``mean(Mz) == 0``).
    ``condition_number`` belongs to the 7-column Jacobian actually solved
    (B in mT, splittings in MHz); ``condition_number_full`` is for the
    8-column (B, D, Mz) parameterization and is infinite up to rounding.
    """

    params: HamiltonianParams
    residuals: np.ndarray
    condition_number: float
    condition_number_full: float
    iterations: int
    lines: tuple = LINE_ORDER

    @property
    def residual_rms(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2)))

    def to_dict(self) -> dict:
        full = self.condition_number_full
        return {
            "params": self.params.to_dict(),
            "residuals_hz": self.residuals.tolist(),
            "residual_rms_hz": self.residual_rms,
            "condition_number": self.condition_number,
            "condition_number_full": full if np.isfinite(full) else None,
            "iterations": self.iterations,
            "lines": [str(l) for l in self.lines],
        }


def _pair_indices(lines):
    lines = [Line.parse(l) for l in lines]
    out = []
    for o in ORIENTATIONS:
        lo = lines.index(Line(o, Branch.MINUS))
        hi = lines.index(Line(o, Branch.PLUS))
        out.append((lo, hi))
    return out


def seed_bias(observed, lines=LINE_ORDER, gamma: float = GAMMA_E):
    """Candidate starting points from the linear regime.

    Each orientation's pair splitting is about 2 gamma |B.n_i|. The unknown
    signs are enumerated (global sign fixed to Bz >= 0) and B is recovered
    with the linear-regime pseudoinverse (3/4) sum_i p_i n_i. Candidates are
    returned best-first by how well the projections satisfy sum_i B.n_i = 0.
    Splitting seeds are the per-orientation pair means.
    """
    observed = np.asarray(observed, dtype=float)
    pairs = _pair_indices(lines)
    s = np.array([observed[hi] - observed[lo] for lo, hi in pairs]) / (2.0 * gamma)
    means = np.array([0.5 * (observed[hi] + observed[lo]) for lo, hi in pairs])
    axes = np.array([o.axis for o in ORIENTATIONS])
    cands = []
    for tail in itertools.product((1.0, -1.0), repeat=3):
        sig = np.array((1.0,) + tail)
        proj = sig * s
        b = 0.75 * proj @ axes
        if b[2] < 0:
            b = -b
        cands.append((abs(proj.sum()), b))
    cands.sort(key=lambda c: c[0])
    return [c[1] for c in cands], means


def _unpack(z, d_ref):
    return z[:3] * _B_SCALE, d_ref + z[3:] * _D_SCALE


def fit_bias(
    observed,
    initial_guess: HamiltonianParams | None = None,
    *,
    lines=LINE_ORDER,
    gamma: float = GAMMA_E,
    max_iter: int = 200,
) -> BiasFit:
    """Least-squares fit of B and the per-orientation splittings to 8 line centers.

    With no ``initial_guess`` every linear-regime sign pattern is tried and
    the lowest-cost solution kept. Because B and -B give identical spectra
    the returned sign follows ``initial_guess`` if given, else Bz >= 0.
    """
    if isinstance(observed, OdmrLineCenters):
        observed = observed.frequencies
    observed = np.asarray(observed, dtype=float).reshape(-1)
    lines = tuple(Line.parse(l) for l in lines)
    if observed.size != len(lines) or observed.size != 8:
        raise InputError("fit_bias needs exactly 8 observed lines")
    if not np.all(np.isfinite(observed)):
        raise InputError("observed line centers must be finite")

    d_ref = float(np.mean(observed))

    def model(z):
        b, dsplit = _unpack(z, d_ref)
        return line_frequencies(b, dsplit, lines, gamma)

    def residual(z):
        return model(z) - observed

    if initial_guess is not None:
        b_seeds = [initial_guess.bias_field]
        d_seed = initial_guess.splittings
    else:
        b_seeds, d_seed = seed_bias(observed, lines, gamma)

    best = None
    for b0 in b_seeds:
        z0 = np.concatenate([np.asarray(b0) / _B_SCALE, (d_seed - d_ref) / _D_SCALE])
        j0 = central_jacobian(residual, z0, np.full(7, 1e-4))
        if _condition(j0) > 1e10:
            continue
        res = levenberg_marquardt(residual, z0, fd_step=1e-4, max_iter=max_iter)
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise Degenerate("bias-fit Jacobian is rank deficient at every seed (field too small?)")

    cond = _condition(best.jacobian)
    if cond > 1e10:
        raise Degenerate(f"bias-fit Jacobian is rank deficient (condition number {cond:.3g})")

    b, dsplit = _unpack(best.x, d_ref)
    ref = initial_guess.bias_field if initial_guess is not None else np.array([0.0, 0.0, 1.0])
    if b @ ref < 0:
        b = -b
    d = float(np.mean(dsplit))
    params = HamiltonianParams(b, d, dsplit - d)

    # 8-column Jacobian (B, D, Mz): the D column equals the sum of the Mz columns.
    jb = best.jacobian[:, :3]
    jd = best.jacobian[:, 3:]
    full = np.hstack([jb, jd.sum(axis=1, keepdims=True), jd])
    residuals = line_frequencies(b, dsplit, lines, gamma) - observed
    return BiasFit(params, residuals, cond, _condition(full), best.iterations, lines)


def _condition(j) -> float:
    s = np.linalg.svd(j, compute_uv=False)
    if s[-1] <= 0:
        return float("inf")
    return float(s[0] / s[-1])


def pinv_svd(a, rcond: float = 1e-12):
    """Moore-Penrose pseudoinverse; singular values below rcond * s_max are dropped.

    Returns (pinv, rank).
    """
    a = np.asarray(a, dtype=float)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > rcond * (s[0] if s.size else 0.0)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T, int(keep.sum())


def _canonical_addressed(addressed):
    lines = [Line.parse(l) for l in addressed]
    if len(lines) != 4 or len({l.orientation for l in lines}) != 4:
        raise InputError("addressed must name one line for each of the four orientations")
    return tuple(sorted(lines, key=lambda l: l.orientation.index))


@dataclass
class SensingMatrix:
    """Linear map from lab-frame field (T) to addressed line shifts (Hz).

    Rows follow orientation order (lambda, chi, phi, kappa).
    ``linearization_point`` is None for the idealized linear-regime matrix.
    """

    a: np.ndarray
    a_pinv: np.ndarray
    addressed: tuple
    linearization_point: HamiltonianParams | None = None
    gamma: float = GAMMA_E

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(4, 3)
        self.a_pinv = np.asarray(self.a_pinv, dtype=float).reshape(3, 4)
        self.addressed = tuple(Line.parse(l) for l in self.addressed)

    @property
    def dimensionless(self) -> np.ndarray:
        """A in units of gamma (the form quoted for the device)."""
        return self.a / self.gamma

    @property
    def dimensionless_pinv(self) -> np.ndarray:
        return self.a_pinv * self.gamma

    def to_dict(self) -> dict:
        return {
            "a_hz_per_t": self.a.tolist(),
            "a_pinv_t_per_hz": self.a_pinv.tolist(),
            "a_dimensionless": self.dimensionless.tolist(),
            "a_pinv_dimensionless": self.dimensionless_pinv.tolist(),
            "addressed": [[l.orientation.value, l.branch.value] for l in self.addressed],
            "linearization_point": None if self.linearization_point is None else self.linearization_point.to_dict(),
            "gamma_hz_per_t": self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensingMatrix":
        lp = d.get("linearization_point")
        return cls(
            np.array(d["a_hz_per_t"]),
            np.array(d["a_pinv_t_per_hz"]),
            tuple(Line.parse(x) for x in d["addressed"]),
            None if lp is None else HamiltonianParams.from_dict(lp),
            d.get("gamma_hz_per_t", GAMMA_E),
        )


def linearize(
    point: HamiltonianParams,
    addressed=DEFAULT_ADDRESSED,
    step: float = DEFAULT_STEP,
    gamma: float = GAMMA_E,
) -> SensingMatrix:
    """Central-difference sensing matrix at ``point`` and its pseudoinverse."""
    if not (step > 0 and np.isfinite(step)):
        raise InputError("step must be positive")
    lines = _canonical_addressed(addressed)
    b0 = point.bias_field
    fields = np.concatenate([b0 + step * np.eye(3), b0 - step * np.eye(3)])
    f = line_frequencies(fields, point.splittings, lines, gamma)
    a = ((f[:3] - f[3:]) / (2.0 * step)).T
    a_pinv, rank = pinv_svd(a)
    if rank < 3:
        raise Degenerate(f"sensing matrix has column rank {rank} < 3")
    return SensingMatrix(a, a_pinv, lines, point, gamma)


def linear_signs(point: HamiltonianParams, addressed=DEFAULT_ADDRESSED) -> np.ndarray:
    """Row signs of the linear-regime matrix: branch sign times sign(B0 . n_i)."""
    lines = _canonical_addressed(addressed)
    return np.array([l.branch.sign * np.sign(point.bias_field @ l.orientation.axis) for l in lines])


def linear_regime_matrix(addressed=DEFAULT_ADDRESSED, signs=(1, -1, -1, 1), gamma: float = GAMMA_E) -> SensingMatrix:
    """A_lin = gamma * diag(signs) N, with the closed-form pseudoinverse (3/4) A_lin^T / gamma^2."""
    lines = _canonical_addressed(addressed)
    signs = np.asarray(signs, dtype=float).reshape(4)
    if not np.all(np.abs(signs) == 1):
        raise InputError("signs must be +1 or -1")
    a = gamma * signs[:, None] * np.array([l.orientation.axis for l in lines])
    return SensingMatrix(a, 0.75 * a.T / gamma**2, lines, None, gamma)


@dataclass
class SlopeCalibration:
    """Per-channel lock-in slopes (V/Hz), orientation order (lambda, chi, phi, kappa).

    A positive slope means the demodulated output rises when the addressed
    resonance moves up in frequency. ``phases`` are the demodulation
    reference phases (rad) that produce that in-phase response.
    """

    slopes: np.ndarray
    fit_residual: np.ndarray = field(default_factory=lambda: np.zeros(4))
    phases: np.ndarray = field(default_factory=lambda: np.zeros(4))
    poor_linearity: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=bool))

    def __post_init__(self):
        self.slopes = np.asarray(self.slopes, dtype=float).reshape(4)
        self.fit_residual = np.asarray(self.fit_residual, dtype=float).reshape(4)
        self.phases = np.asarray(self.phases, dtype=float).reshape(4)
        self.poor_linearity = np.asarray(self.poor_linearity, dtype=bool).reshape(4)

    def to_dict(self) -> dict:
        return {
            "slopes_v_per_hz": self.slopes.tolist(),
            "fit_residual_v": self.fit_residual.tolist(),
            "phases_rad": self.phases.tolist(),
            "poor_linearity": self.poor_linearity.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlopeCalibration":
        return cls(
            d["slopes_v_per_hz"],
            d.get("fit_residual_v", [0.0] * 4),
            d.get("phases_rad", [0.0] * 4),
            d.get("poor_linearity", [False] * 4),
        )


def sweep_detuning(n: int, span: float) -> np.ndarray:
    """Detuning axis of a linear sweep of ``n`` samples covering [-span/2, span/2]."""
    if n < 2:
        raise InputError("a sweep needs at least two samples")
    return -0.5 * span + span * np.arange(n) / (n - 1)


def fit_line(x, y):
    """Ordinary least-squares line; returns (slope, intercept, residual RMS)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm = x - x.mean()
    slope = float(xm @ (y - y.mean()) / (xm @ xm))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    return slope, intercept, float(np.sqrt(np.mean(resid**2)))


def calibrate_slopes(
    chirp_sweeps, span: float = 20e3, *, phases=None, detuning=None, strict: bool = True
) -> SlopeCalibration:
    """Fit a line to each demodulated sweep against detuning.

    Each sweep is a stream (or array) whose samples are evenly spaced over a
    line-shift-equivalent detuning of [-span/2, span/2]. If the sweeps went
    through further linear processing (e.g. notches), pass the equally
    processed detuning axis as ``detuning`` so the regression stays exact. A channel is
    flagged when its residual RMS is not below 10% of the fitted excursion
    |slope| * span; with ``strict`` a flagged channel raises PoorLinearity
    carrying the full result.
    """
    if len(chirp_sweeps) != 4:
        raise InputError("need one sweep per channel (4)")
    if not span > 0:
        raise InputError("span must be positive")
    slopes, resid, flags = [], [], []
    for sweep in chirp_sweeps:
        y = np.asarray(getattr(sweep, "samples", sweep), dtype=float)
        x = sweep_detuning(y.size, span) if detuning is None else np.asarray(detuning, dtype=float)
        if x.shape != y.shape:
            raise InputError("detuning axis and sweep differ in length")
        s, _, rms = fit_line(x, y)
        slopes.append(s)
        resid.append(rms)
        flags.append(not (rms < 0.1 * abs(s) * span))
    result = SlopeCalibration(slopes, resid, np.zeros(4) if phases is None else phases, flags)
    if strict and result.poor_linearity.any():
        bad = [o.value for o, f in zip(ORIENTATIONS, flags) if f]
        raise PoorLinearity(f"sweep not linear enough for channels {bad}", result)
    return result
