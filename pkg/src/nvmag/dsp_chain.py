"""Lock-in demodulation chain.

signal (202.8 kSa/s) -> laser-noise cancellation -> 1690 Hz high-pass ->
per-channel mixing with a unit sinusoid at f_i -> 5-210 Hz band-pass ->
75x decimation (no averaging) -> 1 Hz FFT notches -> divide by slope (Hz).

All IIR stages are Butterworth designs applied causally as second-order
sections.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .calibration import SlopeCalibration
from .constants import BAND_EDGES, HIGHPASS_CUTOFF, NOTCH_FREQS, SAMPLE_RATE
from .errors import InputError, LengthMismatch, MissingSlope, RateMismatch, UnstableFilter, ZeroReference
from .streams import SampleStream, Unit

FILTER_KINDS = ("highpass", "lowpass", "bandpass", "notch", "brickwall")


@dataclass(frozen=True)
class FilterSpec:
    """A filter stage.

    IIR kinds (highpass, lowpass, bandpass) are Butterworth designs of
    prototype ``order`` (a bandpass therefore has 2 * order poles). ``notch``
    zeroes a ``width``-wide band around each edge frequency and
    ``brickwall`` keeps only [edges[0], edges[1]]; both act on FFT blocks of
    ``block`` seconds.
    """

    kind: str
    order: int = 0
    edges: tuple = ()
    width: float = 1.0
    block: float = 1.0

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise InputError(f"unknown filter kind {self.kind!r}")
        object.__setattr__(self, "edges", tuple(float(e) for e in np.atleast_1d(self.edges)))
        if self.kind in ("highpass", "lowpass") and len(self.edges) != 1:
            raise InputError(f"{self.kind} needs one edge")
        if self.kind in ("bandpass", "brickwall") and (len(self.edges) != 2 or self.edges[0] >= self.edges[1]):
            raise InputError(f"{self.kind} needs two increasing edges")
        if self.kind in ("highpass", "lowpass", "bandpass") and self.order < 1:
            raise InputError("IIR order must be positive")
        if any(e < 0 for e in self.edges):
            raise InputError("edges must be non-negative")

    @property
    def is_iir(self) -> bool:
        return self.kind in ("highpass", "lowpass", "bandpass")

    def validate(self, rate: float) -> None:
        if any(e >= rate / 2 for e in self.edges):
            raise InputError(f"{self.kind} edge {max(self.edges)} Hz not below Nyquist {rate / 2} Hz")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "edges_hz": list(self.edges)}
        if self.is_iir:
            d.update(order=self.order, design="butterworth", structure="sos", causal=True)
        else:
            d.update(width_hz=self.width, block_s=self.block, method="fft_mask")
        return d


def design_sos(spec: FilterSpec, rate: float) -> np.ndarray:
    spec.validate(rate)
    if spec.kind == "bandpass":
        sos = sps.butter(spec.order, spec.edges, btype="bandpass", fs=rate, output="sos")
    else:
        sos = sps.butter(spec.order, spec.edges[0], btype=spec.kind, fs=rate, output="sos")
    check_stability(sos)
    return sos


def check_stability(sos, tol: float = 1e-9) -> None:
    for k, sec in enumerate(np.atleast_2d(sos)):
        poles = np.roots(sec[3:])
        if poles.size and np.max(np.abs(poles)) > 1.0 + tol:
            raise UnstableFilter(f"section {k} has a pole at radius {np.max(np.abs(poles)):.12g}")


def response(spec: FilterSpec, freqs, rate: float) -> np.ndarray:
    """Complex frequency response of one stage at ``freqs`` (Hz)."""
    freqs = np.asarray(freqs, dtype=float)
    if spec.is_iir:
        _, h = sps.sosfreqz(design_sos(spec, rate), worN=freqs, fs=rate)
        return h
    if spec.kind == "notch":
        h = np.ones(freqs.shape, dtype=complex)
        for f0 in spec.edges:
            h[np.abs(freqs - f0) <= 0.5 * spec.width] = 0.0
        return h
    lo, hi = spec.edges
    return ((freqs >= lo) & (freqs <= hi)).astype(complex)


def _fft_mask(x: np.ndarray, rate: float, spec: FilterSpec) -> np.ndarray:
    n_block = max(1, int(round(spec.block * rate)))
    out = np.empty_like(x)
    for start in range(0, x.size, n_block):
        seg = x[start:start + n_block]
        spec_f = np.fft.rfft(seg)
        f = np.fft.rfftfreq(seg.size, 1.0 / rate)
        if spec.kind == "notch":
            df = f[1] - f[0] if f.size > 1 else rate
            for f0 in spec.edges:
                hit = np.abs(f - f0) <= 0.5 * spec.width + 1e-9 * df
                if not hit.any():
                    hit = np.abs(f - f0) == np.min(np.abs(f - f0))
                spec_f[hit] = 0.0
        else:
            lo, hi = spec.edges
            spec_f[(f < lo) | (f > hi)] = 0.0
        out[start:start + seg.size] = np.fft.irfft(spec_f, seg.size)
    return out


def filter_samples(x: np.ndarray, spec: FilterSpec, rate: float) -> np.ndarray:
    if x.size == 0:
        return x.copy()
    if spec.is_iir:
        return sps.sosfilt(design_sos(spec, rate), x)
    spec.validate(rate)
    return _fft_mask(x, rate, spec)


def apply_filter(stream: SampleStream, spec: FilterSpec) -> SampleStream:
    """Causal SOS filtering for IIR stages, block FFT masking for notch/brickwall."""
    return stream.with_samples(filter_samples(stream.samples, spec, stream.rate))


def enbw(chain: Sequence[FilterSpec], rate: float, n_points: int | None = None) -> float:
    """Equivalent noise bandwidth: integral of |H|^2 over [0, rate/2] divided by peak |H|^2.

    Evaluated on a uniform grid with at least 2**16 points and spacing no
    coarser than 0.05 Hz.
    """
    chain = list(chain)
    if not chain:
        raise InputError("chain must contain at least one filter")
    nyq = rate / 2.0
    n = n_points or max(2**16, int(np.ceil(nyq / 0.05)) + 1)
    f = np.linspace(0.0, nyq, n)
    p = np.ones(n)
    for spec in chain:
        p *= np.abs(response(spec, f, rate)) ** 2
    peak = p.max()
    if peak <= 0:
        return 0.0
    return float(np.trapezoid(p, f) / peak) if hasattr(np, "trapezoid") else float(np.trapz(p, f) / peak)


@functools.lru_cache(maxsize=32)
def _cached_enbw(stages: tuple, rate: float) -> float:
    return enbw(stages, rate)


def group_delay(spec: FilterSpec, freq: float, rate: float) -> float:
    """Group delay (s) of an IIR stage at ``freq`` from the phase slope."""
    if not spec.is_iir:
        return 0.0
    df = 1e-3
    _, h = sps.sosfreqz(design_sos(spec, rate), worN=np.array([freq - df, freq + df]), fs=rate)
    dphi = np.angle(h[1] / h[0])
    return float(-dphi / (2.0 * np.pi * 2.0 * df))


def cancel_laser_noise(signal: SampleStream, reference: SampleStream, window: float = 1.0) -> SampleStream:
    """Scale and subtract the reference per window: sig_AC - (mean sig / mean ref) ref_AC."""
    if len(signal) != len(reference):
        raise LengthMismatch("signal and reference differ in length")
    if signal.rate != reference.rate:
        raise RateMismatch("signal and reference differ in rate")
    if not window > 0:
        raise InputError("window must be positive")
    x, r = signal.samples, reference.samples
    n_win = max(1, int(round(window * signal.rate)))
    out = np.empty_like(x)
    for start in range(0, x.size, n_win):
        xs, rs = x[start:start + n_win], r[start:start + n_win]
        ms, mr = xs.mean(), rs.mean()
        if mr == 0 or abs(mr) <= 1e-9 * np.sqrt(np.mean(rs * rs)):
            raise ZeroReference("reference mean is zero in a cancellation window")
        out[start:start + xs.size] = (xs - ms) - (ms / mr) * (rs - mr)
    return signal.with_samples(out)


@dataclass(frozen=True)
class DemodChain:
    input_rate: float = SAMPLE_RATE
    highpass: FilterSpec = field(default_factory=lambda: FilterSpec("highpass", 10, (HIGHPASS_CUTOFF,)))
    bandpass: FilterSpec = field(default_factory=lambda: FilterSpec("bandpass", 10, BAND_EDGES))
    #: Used instead of the band-pass when the response near DC is wanted (slope calibration).
    lowpass: FilterSpec = field(default_factory=lambda: FilterSpec("lowpass", 10, (BAND_EDGES[1],)))
    decimation: int = 75
    notch: FilterSpec | None = field(default_factory=lambda: FilterSpec("notch", 0, NOTCH_FREQS, width=1.0, block=1.0))

    @property
    def output_rate(self) -> float:
        return self.input_rate / self.decimation

    def post_mix_stages(self, mode: str = "bandpass") -> list[FilterSpec]:
        stages = [self.bandpass if mode == "bandpass" else self.lowpass]
        if self.notch is not None:
            stages.append(self.notch)
        return stages

    def enbw(self, mode: str = "bandpass") -> float:
        return _cached_enbw(tuple(self.post_mix_stages(mode)), self.input_rate)

    def report(self) -> dict:
        centre = float(np.sqrt(self.bandpass.edges[0] * self.bandpass.edges[1]))
        return {
            "input_rate_sa_s": self.input_rate,
            "output_rate_sa_s": self.output_rate,
            "highpass": self.highpass.to_dict(),
            "bandpass": self.bandpass.to_dict(),
            "calibration_lowpass": self.lowpass.to_dict(),
            "decimation": {"factor": self.decimation, "method": "keep every Nth sample, no averaging"},
            "notch": None if self.notch is None else self.notch.to_dict(),
            "enbw_hz": self.enbw(),
            "enbw_convention": "single-sided, integral |H|^2 df / peak |H|^2 over the post-mixing stages",
            "group_delay_s": {
                "bandpass_at_geometric_centre": group_delay(self.bandpass, centre, self.input_rate),
                "centre_hz": centre,
            },
            "reference": "unit-amplitude sin(2 pi f_i t + phase_i)",
        }


@dataclass
class DemodResult:
    shifts: list  # 4 SampleStreams (Hz)
    enbw: float
    chain: dict
    raw: list | None = None  # demodulated volts before slope conversion


def _check_pl(pl: SampleStream, chain: DemodChain):
    if pl.rate != chain.input_rate:
        raise RateMismatch(f"stream rate {pl.rate} Sa/s does not match chain input rate {chain.input_rate} Sa/s")
    pl.require_unit(Unit.VOLTS)


def mix_and_filter(
    pl: SampleStream,
    freqs,
    phases,
    chain: DemodChain = DemodChain(),
    *,
    mode: str = "bandpass",
    settle: float = 0.0,
    taper: float | None = None,
    notch: bool = True,
) -> list[SampleStream]:
    """Shared lock-in core; returns demodulated volts at the output rate.

    The first ``taper`` seconds of input (default ``settle / 2``) are faded
    in with a raised cosine so the abrupt start does not ring the filters;
    that stretch lies inside the discarded ``settle`` interval.
    """
    _check_pl(pl, chain)
    if mode not in ("bandpass", "lowpass"):
        raise InputError("mode must be 'bandpass' or 'lowpass'")
    if settle < 0:
        raise InputError("settle must be non-negative")
    taper = 0.5 * settle if taper is None else taper
    if taper > settle:
        raise InputError("taper must lie within the settle interval")
    x = pl.samples
    n_taper = min(int(round(taper * pl.rate)), x.size)
    if n_taper > 0:
        x = x.copy()
        x[:n_taper] *= 0.5 - 0.5 * np.cos(np.pi * np.arange(n_taper) / n_taper)
    x = filter_samples(x, chain.highpass, pl.rate)
    t = pl.times
    post = chain.bandpass if mode == "bandpass" else chain.lowpass
    out_rate = chain.output_rate
    skip = int(round(settle * out_rate))
    outs = []
    for f, ph in zip(freqs, phases):
        if f >= pl.rate / 2:
            raise InputError(f"reference frequency {f} Hz above Nyquist")
        y = x * np.sin(2.0 * np.pi * f * t + ph)
        y = filter_samples(y, post, pl.rate)[:: chain.decimation][skip:]
        if notch and chain.notch is not None:
            y = filter_samples(y, chain.notch, out_rate)
        outs.append(SampleStream(y, out_rate, Unit.VOLTS, pl.t0 + skip / out_rate))
    return outs


def demodulate(
    pl: SampleStream,
    channels,
    slopes: SlopeCalibration,
    chain: DemodChain = DemodChain(),
    *,
    settle: float = 0.0,
    mode: str = "bandpass",
) -> DemodResult:
    """Four-channel lock-in: returns line-shift streams (Hz) at the decimated rate.

    ``settle`` seconds of output are dropped before notching so the IIR
    start-up transient does not enter the FFT blocks.
    """
    if slopes is None:
        raise MissingSlope("slope calibration required")
    s = np.asarray(slopes.slopes, dtype=float)
    if s.shape != (4,) or not np.all(np.isfinite(s)) or np.any(s == 0):
        raise MissingSlope("every channel needs a finite non-zero slope")
    raw = mix_and_filter(pl, [ch.mod_freq for ch in channels], slopes.phases, chain, mode=mode, settle=settle)
    shifts = [r.with_samples(r.samples / si, unit=Unit.HERTZ) for r, si in zip(raw, s)]
    return DemodResult(shifts, chain.enbw(mode), chain.report(), raw)
