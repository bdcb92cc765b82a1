"""End-to-end runs: calibrate slopes, synthesize, demodulate, reconstruct, report."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import signal as sps

from .calibration import SensingMatrix, SlopeCalibration, calibrate_slopes, fit_line, linearize, sweep_detuning
from .dsp_chain import DemodChain, cancel_laser_noise, demodulate, filter_samples, mix_and_filter
from .errors import InputError
from .reconstruction import reconstruct_stream
from .sensitivity import NoiseBudget, empirical_sensitivity, lockin_prediction
from .signal_synth import SynthConfig, coil_field, default_channels, synthesize
from .spin_model import HamiltonianParams
from .streams import SampleStream

AXES = ("x", "y", "z")


def calibrate_channel_slopes(
    params: HamiltonianParams,
    channels=None,
    cfg: SynthConfig | None = None,
    chain: DemodChain = DemodChain(),
    *,
    span: float = 20e3,
    sweep_time: float = 1.0,
    settle: float = 1.0,
    seed: int = 0,
    strict: bool = True,
) -> SlopeCalibration:
    """Chirp every carrier through ``span`` and fit demodulated I and Q against detuning.

    The carriers hold at the start of the sweep for ``settle`` seconds, then
    ramp linearly so that decimated output sample k sits at detuning
    -span/2 + span k/(n-1). Demodulation uses the low-pass (DC-coupled)
    variant of the chain. The reference phase is atan2(slope_Q, slope_I),
    which makes the in-phase slope positive and maximal.
    """
    cfg = cfg or SynthConfig(noise="none")
    channels = list(channels) if channels is not None else default_channels()
    out_rate = chain.output_rate
    n_out = int(round(sweep_time * out_rate))
    cfg = replace(cfg, duration=settle + sweep_time)
    t = np.arange(cfg.n_samples) / cfg.sample_rate
    ramp_t = (n_out - 1) / out_rate
    x = np.clip(-0.5 * span + span * (t - settle) / ramp_t, -0.5 * span, 0.5 * span)
    offsets = np.tile(-x, (4, 1))
    sig, _ = synthesize(params, channels, (), cfg, seed, carrier_offsets=offsets)
    freqs = [ch.mod_freq for ch in channels]
    i_out = mix_and_filter(sig, freqs, [0.0] * 4, chain, mode="lowpass", settle=settle)
    q_out = mix_and_filter(sig, freqs, [0.5 * np.pi] * 4, chain, mode="lowpass", settle=settle)
    det = sweep_detuning(len(i_out[0]), span)
    if chain.notch is not None:
        det = filter_samples(det, chain.notch, out_rate)
    phases = []
    sweeps = []
    for i_s, q_s in zip(i_out, q_out):
        si = fit_line(det, i_s.samples)[0]
        sq = fit_line(det, q_s.samples)[0]
        ph = float(np.arctan2(sq, si))
        phases.append(ph)
        sweeps.append(i_s.with_samples(np.cos(ph) * i_s.samples + np.sin(ph) * q_s.samples))
    return calibrate_slopes(sweeps, span, phases=phases, detuning=det, strict=strict)


def periodogram(stream: SampleStream, method: str = "periodogram"):
    """Single-sided amplitude spectral density (unit/sqrt(Hz)) and frequencies.

    ``periodogram`` uses one rectangular window over the whole record;
    ``welch`` uses 1 s Hann segments.
    """
    x = stream.samples
    if method == "periodogram":
        f, p = sps.periodogram(x, fs=stream.rate, window="boxcar", detrend=False, scaling="density")
    elif method == "welch":
        f, p = sps.welch(x, fs=stream.rate, nperseg=min(x.size, int(round(stream.rate))), detrend=False)
    else:
        raise InputError(f"unknown spectral method {method!r}")
    return f, np.sqrt(p)


def tone_rms(stream: SampleStream, freq: float) -> float:
    """RMS amplitude of a sinusoid at ``freq`` from the nearest DFT bin (rectangular window)."""
    x = stream.samples
    n = x.size
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(n, 1.0 / stream.rate)
    k = int(np.argmin(np.abs(f - freq)))
    return float(np.sqrt(2.0) * np.abs(spec[k]) / n)


def detect_tones(stream: SampleStream, band=(5.0, 210.0), factor: float = 5.0, method: str = "periodogram") -> list[dict]:
    """Bins whose ASD exceeds ``factor`` times the median ASD inside ``band``."""
    f, asd = periodogram(stream, method)
    sel = (f >= band[0]) & (f <= band[1])
    floor = float(np.median(asd[sel]))
    hits = np.nonzero(sel & (asd > factor * floor))[0]
    return [{"freq_hz": float(f[k]), "asd": float(asd[k]), "floor_asd": floor} for k in hits]


@dataclass
class PipelineResult:
    field: list  # Bx, By, Bz SampleStreams (T)
    shifts: list  # four line-shift SampleStreams (Hz)
    slopes: SlopeCalibration
    matrix: SensingMatrix
    enbw: float
    chain: dict
    spectral_method: str
    coil_tones: list
    detected_tones: dict
    eta_empirical: np.ndarray
    eta_predicted: np.ndarray

    def spectra(self):
        return {ax: periodogram(s, self.spectral_method) for ax, s in zip(AXES, self.field)}

    def summary(self) -> dict:
        return {
            "enbw_hz": self.enbw,
            "slopes": self.slopes.to_dict(),
            "sensing_matrix": self.matrix.to_dict(),
            "chain": self.chain,
            "spectral_method": self.spectral_method,
            "coil_tones": self.coil_tones,
            "detected_tones": self.detected_tones,
            "eta_empirical_t_per_rthz": self.eta_empirical.tolist(),
            "eta_predicted_shot_t_per_rthz": self.eta_predicted.tolist(),
            "eta_convention": "std(B_j) / sqrt(2 * enbw); prediction uses the lock-in noise bandwidth enbw/2",
        }


def run_pipeline(
    params: HamiltonianParams,
    channels=None,
    coils=(),
    cfg: SynthConfig | None = None,
    seed: int = 0,
    *,
    chain: DemodChain = DemodChain(),
    settle: float = 1.0,
    cancel: bool = True,
    slopes: SlopeCalibration | None = None,
    matrix: SensingMatrix | None = None,
    spectral_method: str = "periodogram",
) -> PipelineResult:
    """Synthesize ``settle + cfg.duration`` seconds, keep the last ``cfg.duration`` after demodulation.

    The warm-up lets the causal filters reach steady state, as in a
    continuously running instrument.
    """
    cfg = cfg or SynthConfig()
    channels = list(channels) if channels is not None else default_channels()
    coils = list(coils)
    if slopes is None:
        slopes = calibrate_channel_slopes(params, channels, replace(cfg, noise="none"), chain, seed=seed)
    if matrix is None:
        matrix = linearize(params, [ch.line for ch in channels])
    run_cfg = replace(cfg, duration=settle + cfg.duration)
    sig, ref = synthesize(params, channels, coils, run_cfg, seed)
    pl = cancel_laser_noise(sig, ref) if cancel else sig
    demod = demodulate(pl, channels, slopes, chain, settle=settle)
    field = reconstruct_stream(demod.shifts, matrix)

    coil_tones = []
    for c in coils:
        j = AXES.index(c.axis)
        coil_tones.append(
            {"axis": c.axis, "freq_hz": c.freq, "applied_rms_t": c.rms_amplitude, "measured_rms_t": tone_rms(field[j], c.freq)}
        )
    detected = {ax: detect_tones(s, method=spectral_method) for ax, s in zip(AXES, field)}
    budget = NoiseBudget(slopes, demod.enbw / 2.0, cfg.pl_mean_current, cfg.ref_mean_current, cfg.sig_termination)
    pred = lockin_prediction(budget, matrix, demod.enbw, include_reference=cancel)
    emp = empirical_sensitivity(field, demod.enbw)
    return PipelineResult(field, demod.shifts, slopes, matrix, demod.enbw, demod.chain, spectral_method, coil_tones, detected, emp, pred)


def applied_field(coils, stream: SampleStream) -> np.ndarray:
    """Coil field sampled on a stream's time base, shape (N, 3)."""
    return coil_field(stream.times, coils)
