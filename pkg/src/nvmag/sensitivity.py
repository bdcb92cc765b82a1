"""Shot-noise-limited sensitivity and its empirical counterpart.

Conventions: ``bandwidth`` is a single-sided noise bandwidth Δf, the SNR=1
minimum detectable shift is R_sig sqrt(2 q I_sig Δf) / slope, and the
sensitivity is η = σ_B sqrt(T) with T = 1 / (2 Δf).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import SensingMatrix, SlopeCalibration
from .constants import I_REF, I_SIG, Q_E, R_SIG
from .errors import EmptyStream, InputError
from .streams import SampleStream, Unit


@dataclass(frozen=True)
class NoiseBudget:
    slopes: np.ndarray  # V/Hz, orientation order
    bandwidth: float = 0.5
    i_sig: float = I_SIG
    i_ref: float = I_REF
    r_sig: float = R_SIG

    def __post_init__(self):
        s = self.slopes.slopes if isinstance(self.slopes, SlopeCalibration) else self.slopes
        s = np.asarray(s, dtype=float).reshape(4)
        object.__setattr__(self, "slopes", s)
        if not (self.i_sig > 0 and self.i_ref > 0 and self.r_sig > 0):
            raise InputError("currents and termination must be positive")
        if not self.bandwidth >= 0:
            raise InputError("bandwidth must be non-negative")
        if np.any(s == 0) or not np.all(np.isfinite(s)):
            raise InputError("slopes must be finite and non-zero")

    @property
    def reference_factor(self) -> float:
        """F_ref = sqrt(1 + I_sig / I_ref), the noise penalty of subtracting the reference."""
        return float(np.sqrt(1.0 + self.i_sig / self.i_ref))

    @property
    def measurement_time(self) -> float:
        return float("inf") if self.bandwidth == 0 else 1.0 / (2.0 * self.bandwidth)


def min_detectable_shift(budget: NoiseBudget, include_reference: bool = True) -> np.ndarray:
    """SNR = 1 line shift (Hz) per channel."""
    v = budget.r_sig * np.sqrt(2.0 * Q_E * budget.i_sig * budget.bandwidth)
    dnu = v / np.abs(budget.slopes)
    if include_reference:
        dnu = dnu * budget.reference_factor
    return dnu


def propagate_covariance(dnu_min, m: SensingMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Σ_B = A+ diag(dnu^2) A+^T and the per-axis standard deviations."""
    dnu = np.asarray(dnu_min, dtype=float).reshape(4)
    cov = (m.a_pinv * dnu**2) @ m.a_pinv.T
    cov = 0.5 * (cov + cov.T)
    return cov, np.sqrt(np.diag(cov))


def monte_carlo_covariance(dnu_min, m: SensingMatrix, n: int = 10_000, seed: int = 0) -> np.ndarray:
    """Empirical Σ_B from ``n`` reconstructed frames of i.i.d. Gaussian shift noise."""
    rng = np.random.default_rng(seed)
    shifts = rng.standard_normal((n, 4)) * np.asarray(dnu_min, dtype=float)
    b = shifts @ m.a_pinv.T
    return np.cov(b, rowvar=False)


@dataclass
class SensitivityReport:
    dnu_min: np.ndarray
    sigma_b: np.ndarray
    eta: np.ndarray
    covariance_b: np.ndarray
    bandwidth: float
    measurement_time: float
    include_reference: bool
    excess_noise_factor: float | None = None

    @property
    def eta_with_excess(self) -> np.ndarray | None:
        if self.excess_noise_factor is None:
            return None
        return self.eta * self.excess_noise_factor

    def to_dict(self) -> dict:
        ex = self.eta_with_excess
        return {
            "dnu_min_hz": self.dnu_min.tolist(),
            "sigma_b_t": self.sigma_b.tolist(),
            "eta_t_per_rthz": self.eta.tolist(),
            "covariance_b_t2": self.covariance_b.tolist(),
            "bandwidth_hz": self.bandwidth,
            "measurement_time_s": self.measurement_time,
            "include_reference": self.include_reference,
            "excess_noise_factor": self.excess_noise_factor,
            "eta_with_excess_t_per_rthz": None if ex is None else ex.tolist(),
            "convention": "single-sided bandwidth; SNR = 1; eta = sigma_B * sqrt(T), T = 1/(2 bandwidth)",
        }


def sensitivity_report(
    budget: NoiseBudget,
    m: SensingMatrix,
    include_reference: bool = True,
    excess_noise_factor: float | None = None,
) -> SensitivityReport:
    """Shot-noise sensitivity for a budget and sensing matrix.

    ``excess_noise_factor`` is reported separately (``eta_with_excess``) and
    never folded into ``eta``.
    """
    if budget.bandwidth <= 0:
        raise InputError("sensitivity needs a positive bandwidth")
    dnu = min_detectable_shift(budget, include_reference)
    cov, sigma = propagate_covariance(dnu, m)
    t = budget.measurement_time
    return SensitivityReport(dnu, sigma, sigma * np.sqrt(t), cov, budget.bandwidth, t, include_reference, excess_noise_factor)


def lockin_prediction(budget: NoiseBudget, m: SensingMatrix, enbw: float, include_reference: bool = True) -> np.ndarray:
    """Expected empirical sensitivity (T/sqrt(Hz)) of the demodulation pipeline.

    Mixing white noise of single-sided density N0 with a unit-amplitude
    sinusoid leaves density N0/2, so a chain of noise bandwidth ``enbw``
    yields the same field scatter as a budget with Δf = enbw/2. The
    empirical estimator divides that scatter by sqrt(2 enbw).
    """
    b = NoiseBudget(budget.slopes, enbw / 2.0, budget.i_sig, budget.i_ref, budget.r_sig)
    _, sigma = propagate_covariance(min_detectable_shift(b, include_reference), m)
    return sigma / np.sqrt(2.0 * enbw)


def empirical_sensitivity(zero_signal_b, enbw: float) -> np.ndarray:
    """Per-axis η_j = std(B_j) / sqrt(2 enbw) from a run with no applied field."""
    streams = list(zero_signal_b)
    if len(streams) != 3:
        raise InputError("need three field streams")
    if not enbw > 0:
        raise InputError("enbw must be positive")
    out = []
    for s in streams:
        if isinstance(s, SampleStream):
            s.require_unit(Unit.TESLA)
            x = s.samples
        else:
            x = np.asarray(s, dtype=float)
        if x.size == 0:
            raise EmptyStream("zero-signal stream is empty")
        out.append(np.std(x) / np.sqrt(2.0 * enbw))
    return np.array(out)
