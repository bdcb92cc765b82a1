"""Vector-field reconstruction from four ODMR line shifts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import SensingMatrix, _canonical_addressed
from .constants import GAMMA_E
from .errors import InputError, LengthMismatch
from .lm import levenberg_marquardt
from .spin_model import DEFAULT_ADDRESSED, HamiltonianParams, line_frequencies
from .streams import SampleStream, Unit, check_compatible

#: Shifts beyond this magnitude (Hz) leave the linearization's validity range.
SHIFT_LIMIT = 10e6


@dataclass(frozen=True)
class ShiftFrame:
    """Line shifts (Hz) in orientation order (lambda, chi, phi, kappa)."""

    shifts: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.shifts, dtype=float).reshape(4)
        if not np.all(np.isfinite(s)):
            raise InputError("shifts must be finite")
        object.__setattr__(self, "shifts", s)

    @property
    def out_of_range(self) -> bool:
        return bool(np.any(np.abs(self.shifts) > SHIFT_LIMIT))


@dataclass(frozen=True)
class VectorFieldFrame:
    """Lab-frame field (T) at ``timestamp``; ``out_of_range`` mirrors the input flag."""

    b: np.ndarray
    timestamp: float = 0.0
    out_of_range: bool = False


def reconstruct_linear(shifts: ShiftFrame, m: SensingMatrix) -> VectorFieldFrame:
    """b = A+ . shifts."""
    if not isinstance(shifts, ShiftFrame):
        shifts = ShiftFrame(shifts)
    return VectorFieldFrame(m.a_pinv @ shifts.shifts, shifts.timestamp, shifts.out_of_range)


def reconstruct_linear_batch(shifts, m: SensingMatrix) -> np.ndarray:
    """Vectorized form for an (N, 4) array of shifts; returns (N, 3)."""
    shifts = np.asarray(shifts, dtype=float)
    return shifts @ m.a_pinv.T


def reconstruct_oracle(
    shifts: ShiftFrame,
    point: HamiltonianParams,
    addressed=DEFAULT_ADDRESSED,
    gamma: float = GAMMA_E,
) -> VectorFieldFrame:
    """Exact inverse: find B_sens so the addressed lines at B0 + B_sens sit at ν(B0) + shifts.

    D and Mz stay fixed at ``point``. Solved by Levenberg-Marquardt from
    B_sens = 0, working in microtesla.
    """
    if not isinstance(shifts, ShiftFrame):
        shifts = ShiftFrame(shifts)
    lines = _canonical_addressed(addressed)
    b0 = point.bias_field
    split = point.splittings
    base = line_frequencies(b0, split, lines, gamma)

    def residual(b):
        # subtract the bias-point lines first so the large common term cancels exactly
        return (line_frequencies(b0 + b, split, lines, gamma) - base) - shifts.shifts

    res = levenberg_marquardt(residual, np.zeros(3), scale=np.full(3, 1e-6), fd_step=1e-4, max_iter=200)
    return VectorFieldFrame(res.x, shifts.timestamp, shifts.out_of_range)


def reconstruct_stream(shift_streams, m: SensingMatrix) -> list[SampleStream]:
    """Apply the linear reconstruction sample by sample; returns (Bx, By, Bz) streams in tesla."""
    shift_streams = list(shift_streams)
    if len(shift_streams) != 4:
        raise InputError("need four shift streams")
    for s in shift_streams:
        s.require_unit(Unit.HERTZ)
    if len({len(s) for s in shift_streams}) != 1:
        raise LengthMismatch(f"shift streams differ in length: {[len(s) for s in shift_streams]}")
    check_compatible(shift_streams)
    first = shift_streams[0]
    data = np.stack([s.samples for s in shift_streams], axis=-1)
    b = reconstruct_linear_batch(data, m)
    return [SampleStream(b[:, j], first.rate, Unit.TESLA, first.t0) for j in range(3)]


def out_of_range_mask(shift_streams) -> np.ndarray:
    """Per-sample flag for shifts beyond the linearization guard."""
    data = np.stack([np.asarray(getattr(s, "samples", s)) for s in shift_streams], axis=-1)
    return np.any(np.abs(data) > SHIFT_LIMIT, axis=-1)
