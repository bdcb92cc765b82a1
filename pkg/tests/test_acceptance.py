"""Acceptance criteria 1-9 at their stated tolerances, one test per criterion."""

import json
import time

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from nvmag.calibration import fit_bias, linear_regime_matrix, linearize
from nvmag.cli import run
from nvmag.constants import (
    COIL_RMS,
    I_REF,
    I_SIG,
    LOCKIN_SLOPES,
    MIN_SHIFTS,
    ODMR_LINE_CENTERS,
    Q_E,
    R_SIG,
    SENSING_MATRIX,
    SENSING_PINV,
)
from nvmag.dsp_chain import cancel_laser_noise, demodulate
from nvmag.pipeline import calibrate_channel_slopes, run_pipeline
from nvmag.pulsed_walsh import RamseyConfig, WalshCode, compare_snr, decode, encode_sequence
from nvmag.reconstruction import reconstruct_linear, reconstruct_oracle
from nvmag.sensitivity import NoiseBudget, min_detectable_shift, monte_carlo_covariance, propagate_covariance
from nvmag.signal_synth import SynthConfig, default_channels, default_coils, rin_for_excess, synthesize
from nvmag.spin_model import ORIENTATIONS, HamiltonianParams, hamiltonian, line_frequencies

ETA_SHOT = np.array([18.1e-12, 18.4e-12, 17.5e-12])


def fail_lines(checks):
    return "; ".join(name for name, ok in checks if not ok) or "all sub-checks met"


def test_criterion_1_bias_fit(criterion):
    t = time.perf_counter()
    fit = fit_bias(ODMR_LINE_CENTERS)
    elapsed = time.perf_counter() - t
    p = fit.params
    db = np.abs(p.bias_field - np.array([3.54e-3, 1.73e-3, 6.95e-3]))
    dd = abs(p.zfs_d - 2.8692e9)
    dm = np.abs(p.strain_mz - np.array([-20e3, -60e3, 50e3, 30e3]))
    checks = [
        ("B0 within 0.01 mT", np.all(db <= 1e-5)),
        ("D within 0.1 MHz", dd <= 1e5),
        ("Mz within 10 kHz", np.all(dm <= 1e4)),
        ("runtime < 5 s", elapsed < 5.0),
    ]
    detail = (
        f"max|dB|={db.max() * 1e3:.4f} mT, |dD|={dd / 1e3:.1f} kHz, "
        f"Mz={np.round(p.strain_mz / 1e3, 1).tolist()} kHz (max dev {dm.max() / 1e3:.1f} kHz), "
        f"{elapsed:.2f} s; unmet: {fail_lines(checks)}"
    )
    assert criterion(1, all(ok for _, ok in checks), detail), detail


def test_criterion_2_linearization(criterion, fitted):
    t = time.perf_counter()
    m = linearize(fitted.params)
    elapsed = time.perf_counter() - t
    da = np.abs(m.dimensionless - SENSING_MATRIX).max()
    dp = np.abs(m.dimensionless_pinv - SENSING_PINV).max()
    ok = da <= 1e-4 and dp <= 1e-4 and elapsed < 1.0
    detail = f"max|dA|={da:.2e}, max|dA+|={dp:.2e} (tol 1e-4), {elapsed * 1e3:.1f} ms"
    assert criterion(2, ok, detail), detail


def test_criterion_3_robustness(criterion, fitted, matrix):
    p = fitted.params

    def rel(other):
        return float(np.max(np.abs(other.a_pinv - matrix.a_pinv) / np.abs(matrix.a_pinv)))

    bias = max(
        rel(linearize(HamiltonianParams(p.bias_field + s * 10e-6 * np.eye(3)[k], p.zfs_d, p.strain_mz)))
        for k in range(3)
        for s in (1, -1)
    )
    zfs = max(rel(linearize(HamiltonianParams(p.bias_field, p.zfs_d + s * 150e3, p.strain_mz))) for s in (1, -1))
    strain = rel(linearize(HamiltonianParams(p.bias_field, p.zfs_d, 2 * p.strain_mz)))
    checks = [("bias < 1%", bias < 0.01), ("D <= 0.01%", zfs <= 1e-4), ("Mz x2 < 1%", strain < 0.01)]
    detail = f"bias {bias:.3%}, D {zfs:.4%}, Mz x2 {strain:.4%}; unmet: {fail_lines(checks)}"
    assert criterion(3, all(ok for _, ok in checks), detail), detail


def _ball(n, radius, rng):
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius * rng.uniform(0, 1, (n, 1)) ** (1 / 3)


def test_criterion_4_oracle_equivalence(criterion, fitted, matrix):
    p = fitted.params
    base = line_frequencies(p.bias_field, p.splittings, matrix.addressed)
    rng = np.random.default_rng(2024)
    worst = {}
    for label, radius in (("100 nT", 100e-9), ("100 uT", 100e-6)):
        w = 0.0
        for b in _ball(1000, radius, rng):
            s = line_frequencies(p.bias_field + b, p.splittings, matrix.addressed) - base
            lin = reconstruct_linear(s, matrix).b
            ora = reconstruct_oracle(s, p).b
            w = max(w, np.linalg.norm(lin - ora) / np.linalg.norm(ora))
        worst[label] = w
    s = line_frequencies(p.bias_field + np.array([30e-9, -20e-9, 40e-9]), p.splittings, matrix.addressed) - base
    n_lin, n_ora = 5000, 20
    t = time.perf_counter()
    for _ in range(n_lin):
        reconstruct_linear(s, matrix)
    t_lin = (time.perf_counter() - t) / n_lin
    t = time.perf_counter()
    for _ in range(n_ora):
        reconstruct_oracle(s, p)
    t_ora = (time.perf_counter() - t) / n_ora
    speed = t_ora / t_lin
    ok = worst["100 nT"] < 1e-5 and worst["100 uT"] < 3e-3 and speed >= 1000
    detail = f"worst rel diff {worst['100 nT']:.2e} (<=100 nT), {worst['100 uT']:.2e} (<=100 uT); speedup {speed:.0f}x"
    assert criterion(4, ok, detail), detail


def test_criterion_5_shot_noise(criterion, fitted):
    t = time.perf_counter()
    m = linearize(fitted.params)
    budget = NoiseBudget(LOCKIN_SLOPES, 0.5)
    dnu = min_detectable_shift(budget)
    _, sigma = propagate_covariance(dnu, m)
    eta = sigma * np.sqrt(budget.measurement_time)
    elapsed = time.perf_counter() - t
    e_dnu = np.max(np.abs(dnu / MIN_SHIFTS - 1))
    e_eta = np.max(np.abs(eta / ETA_SHOT - 1))
    ok = e_dnu <= 0.005 and e_eta <= 0.02 and elapsed < 1.0
    detail = f"dnu={np.round(dnu, 4).tolist()} Hz ({e_dnu:.2%}), eta={np.round(eta * 1e12, 2).tolist()} pT/rtHz ({e_eta:.2%}), {elapsed:.2f} s"
    assert criterion(5, ok, detail), detail


def test_criterion_6_round_trip(criterion, ref_point):
    t = time.perf_counter()
    res = run_pipeline(ref_point, coils=default_coils(), cfg=SynthConfig(duration=1.0, noise="shot"), seed=0)
    elapsed = time.perf_counter() - t
    measured = np.array([c["measured_rms_t"] for c in res.coil_tones])
    err = np.max(np.abs(measured / COIL_RMS - 1))
    ok = err <= 0.02 and abs(res.enbw / 203.0 - 1) <= 0.05 and elapsed < 60.0
    detail = f"RMS={np.round(measured * 1e9, 3).tolist()} nT (max err {err:.2%}), ENBW={res.enbw:.2f} Hz, {elapsed:.1f} s"
    assert criterion(6, ok, detail), detail


def test_criterion_7_noise_cancellation(criterion, ref_point):
    from scipy import signal as sps

    cfg = SynthConfig(noise="shot+laser", laser_rin=rin_for_excess(30.0))
    sig, ref = synthesize(ref_point, None, default_coils(), cfg, seed=0)
    out = cancel_laser_noise(sig, ref)

    def band_asd(x):
        f, p = sps.welch(x, fs=cfg.sample_rate, nperseg=20280)
        sel = (f >= 2000) & (f <= 6000)
        return float(np.median(np.sqrt(p[sel])))

    shot = R_SIG * np.sqrt(2 * Q_E * I_SIG)
    combined = shot * np.sqrt(1 + I_SIG / I_REF)
    before, after = band_asd(sig.samples) / shot, band_asd(out.samples) / combined
    ok = before >= 20 and after <= 1.5
    detail = f"2-6 kHz ASD {before:.1f}x shot before, {after:.3f}x combined shot floor after (limit 1.5)"
    assert criterion(7, ok, detail), detail


def test_criterion_8_walsh(criterion):
    cfg = RamseyConfig(alphas=np.full(4, 1e-6))
    code = WalshCode()
    b = np.array([1e-8, -2e-8, 1.5e-8, 5e-9])
    rt = np.max(np.abs(decode(encode_sequence(cfg, code, b), cfg, code) - b))
    ratio = compare_snr(cfg, code, b, noise_std=0.01, trials=10_000, seed=0).snr_ratio
    offsets = np.random.default_rng(8).uniform(-1e3, 1e3, 1000)
    immune = all(np.all(decode(np.full(8, c), cfg, code) == 0.0) for c in offsets) and code.balanced
    ok = rt <= 1e-12 and np.all(np.abs(ratio - 2.0) <= 0.1) and immune
    detail = f"round trip {rt:.1e}, SNR ratio {np.round(ratio, 3).tolist()}, constant offsets decode to exact zero: {immune}"
    assert criterion(8, ok, detail), detail


def _rotate(v, axis, angle):
    return v * np.cos(angle) + np.cross(axis, v) * np.sin(angle) + axis * (axis @ v) * (1 - np.cos(angle))


def test_criterion_9_property_suites(criterion, ref_point, matrix, tmp_path):
    results = {}

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-0.05, 0.05), min_size=3, max_size=3).map(np.array),
        st.floats(2.8e9, 2.95e9),
        st.floats(0, 2 * np.pi),
    )
    def basis_invariance(b, d, angle):
        for o in ORIENTATIONS:
            n = o.axis
            x = np.cross(n, [1.0, 0, 0])
            x /= np.linalg.norm(x)
            y = np.cross(n, x)
            xr, yr = _rotate(x, n, angle), _rotate(y, n, angle)
            e0 = np.linalg.eigvalsh(hamiltonian([b @ x, b @ y, b @ n], d))
            e1 = np.linalg.eigvalsh(hamiltonian([b @ xr, b @ yr, b @ n], d))
            assert np.max(np.abs(e0 - e1)) < 1e-5

    basis_invariance()
    results["basis invariance"] = True

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.sampled_from([1, -1]), min_size=4, max_size=4))
    def pinv_identity(signs):
        m = linear_regime_matrix(signs=signs)
        assert np.max(np.abs(m.a_pinv @ m.a - np.eye(3))) < 1e-12

    pinv_identity()
    results["A_lin+ A_lin = I3"] = True

    slopes = calibrate_channel_slopes(ref_point)
    leak = 0.0
    for i in range(4):
        chans = [c.__class__(c.line, c.carrier, c.mod_freq, c.deviation, c.contrast if j == i else 0.0, c.linewidth) for j, c in enumerate(default_channels())]
        sig, _ = synthesize(ref_point, chans, default_coils(), SynthConfig(duration=2.0, noise="none"))
        r = np.array([np.std(s.samples) for s in demodulate(sig, default_channels(), slopes, settle=1.0).shifts])
        leak = max(leak, np.max(np.delete(r, i) / r[i]))
    results["channel isolation < 1%"] = leak < 0.01

    dnu = min_detectable_shift(NoiseBudget(LOCKIN_SLOPES))
    cov, _ = propagate_covariance(dnu, matrix)
    scale = np.sqrt(np.outer(np.diag(cov), np.diag(cov)))
    mc_err = max(np.max(np.abs(monte_carlo_covariance(dnu, matrix, 10_000, seed) - cov) / scale) for seed in range(10))
    results["covariance MC <= 5%"] = mc_err <= 0.05

    assert run(["pipeline", "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    assert run(["pipeline", "--config", str(tmp_path / "a" / "pipeline.json"), "--out", str(tmp_path / "b")]) == 0
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in ("pipeline.json", "field.csv", "spectra.csv"))
    json.loads((tmp_path / "b" / "pipeline.json").read_text())
    results["bit-identical rerun"] = same

    ok = all(results.values())
    detail = f"isolation leak {leak:.1e}, covariance MC max dev {mc_err:.3f}; " + ", ".join(f"{k}: {'ok' if v else 'FAIL'}" for k, v in results.items())
    assert criterion(9, ok, detail), detail
