"""Forward simulation of the frequency-multiplexed CW measurement.

Four FM microwave tones each address one ODMR line. Photoluminescence (PL)
from all orientations lands on one detector, so the signal stream is

    V_sig(t) = R_sig I_sig (1 + rin(t)) (1 - sum_i C_i L_i(nu_i(t) - nu_line_i(t))) + shot

with nu_i(t) = carrier_i + deviation_i sin(2 pi f_i t) and the line centers
following the instantaneous field B0 + B_coil(t) (quasi-static response).
A reference photodiode sees the same laser intensity noise:

    V_ref(t) = R_ref I_ref (1 + rin(t)) + shot.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .constants import (
    COIL_FREQS,
    COIL_RMS,
    CARRIERS,
    DEVIATIONS,
    HYPERFINE_SPLITTING,
    I_REF,
    I_SIG,
    MOD_FREQS,
    Q_E,
    R_REF,
    R_SIG,
    SAMPLE_RATE,
)
from .errors import InputError
from .spin_model import DEFAULT_ADDRESSED, HamiltonianParams, Line, line_frequencies
from .streams import SampleStream, Unit

NOISE_MODES = ("none", "shot", "shot+laser")
_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class CoilSignal:
    """B_axis(t) = sqrt(2) * rms * sin(2 pi f t + phase)."""

    axis: str
    freq: float
    rms_amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        if self.axis not in _AXIS_INDEX:
            raise InputError(f"coil axis must be x, y or z, got {self.axis!r}")
        if not self.rms_amplitude >= 0:
            raise InputError("rms_amplitude must be >= 0")
        if not (np.isfinite(self.freq) and np.isfinite(self.phase)):
            raise InputError("coil frequency and phase must be finite")


def default_coils(phases=(0.0, 0.0, 0.0)) -> list[CoilSignal]:
    """The three test fields: 67/32/18 Hz at 8.12/9.56/9.86 nT RMS on x/y/z."""
    return [CoilSignal(ax, float(f), float(a), float(p)) for ax, f, a, p in zip("xyz", COIL_FREQS, COIL_RMS, phases)]


def coil_field(t, coils: Sequence[CoilSignal]) -> np.ndarray:
    """Field from the coils at times ``t``; shape ``t.shape + (3,)``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (3,))
    for c in coils:
        out[..., _AXIS_INDEX[c.axis]] += np.sqrt(2.0) * c.rms_amplitude * np.sin(2.0 * np.pi * c.freq * t + c.phase)
    return out


def lineshape(detuning, linewidth: float, hyperfine_splitting: float = HYPERFINE_SPLITTING):
    """Three unit-peak Lorentzian dips (FWHM ``linewidth``) at 0 and +-hyperfine_splitting."""
    if not linewidth > 0:
        raise InputError("linewidth must be positive")
    d = np.asarray(detuning, dtype=float)
    g2 = (0.5 * linewidth) ** 2
    out = g2 / (d * d + g2)
    out = out + g2 / ((d - hyperfine_splitting) ** 2 + g2)
    out = out + g2 / ((d + hyperfine_splitting) ** 2 + g2)
    return out


@dataclass(frozen=True)
class ChannelConfig:
    """One addressed line and its FM drive."""

    line: Line
    carrier: float
    mod_freq: float
    deviation: float
    contrast: float = 0.008
    linewidth: float = 1e6

    def __post_init__(self):
        object.__setattr__(self, "line", Line.parse(self.line))
        for name in ("carrier", "mod_freq", "linewidth"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if not (self.deviation >= 0 and self.contrast >= 0):
            raise InputError("deviation and contrast must be non-negative")


def default_channels(**overrides) -> list[ChannelConfig]:
    """Reference channel settings in orientation order (lambda, chi, phi, kappa)."""
    return [
        ChannelConfig(line, float(c), float(f), float(d), **overrides)
        for line, c, f, d in zip(DEFAULT_ADDRESSED, CARRIERS, MOD_FREQS, DEVIATIONS)
    ]


def validate_channels(channels: Sequence[ChannelConfig], sample_rate: float) -> None:
    if len(channels) != 4:
        raise InputError("exactly four channels are required")
    if len({ch.line for ch in channels}) != 4:
        raise InputError("channels must address distinct lines")
    freqs = [ch.mod_freq for ch in channels]
    for i, a in enumerate(freqs):
        ratio = sample_rate / a
        if abs(ratio - round(ratio)) > 1e-9:
            raise InputError(f"modulation frequency {a} Hz does not divide the sample rate")
        for j, b in enumerate(freqs):
            if i != j and b > a and abs(b / a - round(b / a)) < 1e-9:
                raise InputError(f"modulation frequency {b} Hz is a multiple of {a} Hz")
            if i != j and a == b:
                raise InputError("modulation frequencies must be distinct")
    if not sample_rate > 10.0 * max(freqs):
        raise InputError("sample rate must exceed 10x the highest modulation frequency")


@dataclass(frozen=True)
class RinProfile:
    """Laser relative intensity noise, single-sided PSD level**2 * (ref_freq/f)**exponent.

    ``level`` is the fractional amplitude density (1/sqrt(Hz)) at ``ref_freq``.
    Below ``f_min`` the spectrum is held flat.
    """

    level: float = 0.0
    ref_freq: float = 1000.0
    exponent: float = 1.0
    f_min: float = 1.0

    def psd(self, f):
        f = np.maximum(np.abs(np.asarray(f, dtype=float)), self.f_min)
        return self.level**2 * (self.ref_freq / f) ** self.exponent


def rin_for_excess(excess: float, current: float = I_SIG, band=(2000.0, 6000.0), ref_freq: float = 1000.0) -> RinProfile:
    """1/f RIN whose band-averaged amplitude density is ``excess`` times the signal shot noise.

    Matches band power: level**2 * ref_freq * ln(f2/f1) = excess**2 * 2 q I (f2 - f1) / I**2.
    """
    f1, f2 = band
    level2 = excess**2 * 2.0 * Q_E * (f2 - f1) / (current * ref_freq * np.log(f2 / f1))
    return RinProfile(float(np.sqrt(level2)), ref_freq, 1.0)


@dataclass(frozen=True)
class SynthConfig:
    sample_rate: float = SAMPLE_RATE
    duration: float = 1.0
    hyperfine_splitting: float = HYPERFINE_SPLITTING
    pl_mean_current: float = I_SIG
    ref_mean_current: float = I_REF
    sig_termination: float = R_SIG
    ref_termination: float = R_REF
    noise: str = "shot"
    laser_rin: RinProfile = field(default_factory=RinProfile)
    #: Center each carrier on the computed bias-point line (the nominal carriers are rounded to 1 MHz).
    lock_carriers: bool = True
    #: "sum" adds the channel dips; "product" multiplies (1 - C_i L_i), adding weak intermodulation.
    pl_model: str = "sum"

    def __post_init__(self):
        if self.noise not in NOISE_MODES:
            raise InputError(f"noise must be one of {NOISE_MODES}")
        if self.pl_model not in ("sum", "product"):
            raise InputError("pl_model must be 'sum' or 'product'")
        for name in ("sample_rate", "duration", "pl_mean_current", "ref_mean_current", "sig_termination", "ref_termination"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if not self.hyperfine_splitting >= 0:
            raise InputError("hyperfine_splitting must be >= 0")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def shot_std(self, which: str = "sig") -> float:
        """Per-sample shot-noise standard deviation (V): R sqrt(q I F_s)."""
        if which == "sig":
            r, i = self.sig_termination, self.pl_mean_current
        else:
            r, i = self.ref_termination, self.ref_mean_current
        return r * np.sqrt(Q_E * i * self.sample_rate)


def carrier_frequencies(params: HamiltonianParams, channels, cfg: SynthConfig) -> np.ndarray:
    """Carriers actually used: bias-point line centers when locking, else the configured values."""
    if cfg.lock_carriers:
        return line_frequencies(params.bias_field, params.splittings, [ch.line for ch in channels])
    return np.array([ch.carrier for ch in channels])


def laser_noise(n: int, rate: float, profile: RinProfile, rng: np.random.Generator) -> np.ndarray:
    """Gaussian fractional intensity noise with the profile's single-sided PSD (FFT shaping)."""
    if profile.level == 0 or n == 0:
        return np.zeros(n)
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, 1.0 / rate)
    gain = np.sqrt(profile.psd(f) * rate / 2.0)
    gain[0] = 0.0
    return np.fft.irfft(spec * gain, n)


def channel_suppression(params, channels, coils, cfg: SynthConfig, t, carrier_offsets=None, b_offset=None) -> np.ndarray:
    """Per-channel PL suppression C_i L_i(t); shape (4, len(t))."""
    b = params.bias_field + coil_field(t, coils)
    if b_offset is not None:
        b = b + np.asarray(b_offset, dtype=float)
    lines = [ch.line for ch in channels]
    nu_line = line_frequencies(b, params.splittings, lines)  # (N, 4)
    carriers = carrier_frequencies(params, channels, cfg)
    out = np.empty((4, t.size))
    for i, ch in enumerate(channels):
        nu = carriers[i] + ch.deviation * np.sin(2.0 * np.pi * ch.mod_freq * t)
        if carrier_offsets is not None:
            nu = nu + np.asarray(carrier_offsets[i], dtype=float)
        out[i] = ch.contrast * lineshape(nu - nu_line[:, i], ch.linewidth, cfg.hyperfine_splitting)
    return out


def synthesize(
    params: HamiltonianParams,
    channels: Sequence[ChannelConfig] | None = None,
    coils: Sequence[CoilSignal] = (),
    cfg: SynthConfig | None = None,
    seed: int = 0,
    *,
    carrier_offsets=None,
    b_offset=None,
) -> tuple[SampleStream, SampleStream]:
    """Generate (signal, reference) voltage streams.

    ``carrier_offsets`` (4 scalars or 4 arrays of length N) shifts each MW
    carrier, e.g. for slope-calibration chirps. ``b_offset`` adds a static
    field on top of the bias. Noise sources draw from independent child
    streams of ``seed`` so enabling one does not reshuffle another.
    """
    cfg = cfg or SynthConfig()
    channels = list(channels) if channels is not None else default_channels()
    validate_channels(channels, cfg.sample_rate)
    n = cfg.n_samples
    t = np.arange(n) / cfg.sample_rate
    supp = channel_suppression(params, channels, coils, cfg, t, carrier_offsets, b_offset)
    if cfg.pl_model == "sum":
        pl = 1.0 - supp.sum(axis=0)
    else:
        pl = np.prod(1.0 - supp, axis=0)

    shot_sig, shot_ref, rin_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    rin = np.zeros(n)
    if cfg.noise == "shot+laser":
        rin = laser_noise(n, cfg.sample_rate, cfg.laser_rin, rin_rng)
    sig = cfg.sig_termination * cfg.pl_mean_current * (1.0 + rin) * pl
    ref = cfg.ref_termination * cfg.ref_mean_current * (1.0 + rin)
    if cfg.noise != "none":
        sig = sig + cfg.shot_std("sig") * shot_sig.standard_normal(n)
        ref = ref + cfg.shot_std("ref") * shot_ref.standard_normal(n)
    return SampleStream(sig, cfg.sample_rate, Unit.VOLTS), SampleStream(ref, cfg.sample_rate, Unit.VOLTS)


def chirp_offsets(n: int, span: float, n_channels: int = 4) -> np.ndarray:
    """Carrier offsets for a linear sweep whose line-shift-equivalent detuning runs -span/2 -> +span/2.

    Moving the carrier down by x is equivalent to moving the line up by x.
    """
    x = -0.5 * span + span * np.arange(n) / (n - 1)
    return np.tile(-x, (n_channels, 1))


def predicted_slope(channel: ChannelConfig, cfg: SynthConfig | None = None, n_phase: int = 4096) -> float:
    """Quasi-static lock-in slope (V/Hz) for a unit-amplitude in-phase reference.

    Demodulating with sin(theta + phase) and low-pass filtering keeps the
    cycle average of PL * sin(theta + phase); the magnitude of its derivative
    with respect to a line shift is returned.
    """
    cfg = cfg or SynthConfig()
    th = 2.0 * np.pi * np.arange(n_phase) / n_phase
    x = channel.deviation * np.sin(th)
    h = 1.0
    amp = cfg.sig_termination * cfg.pl_mean_current * channel.contrast

    def avg(shift):
        pl = -amp * lineshape(x - shift, channel.linewidth, cfg.hyperfine_splitting)
        return np.array([np.mean(pl * np.sin(th)), np.mean(pl * np.cos(th))])

    d = (avg(h) - avg(-h)) / (2.0 * h)
    return float(np.hypot(*d))


def contrast_for_slope(channel: ChannelConfig, target_slope: float, cfg: SynthConfig | None = None) -> float:
    """Contrast giving ``target_slope`` under :func:`predicted_slope` (which is linear in contrast)."""
    unit = replace(channel, contrast=1.0)
    return float(abs(target_slope) / predicted_slope(unit, cfg))
