from dataclasses import replace

import numpy as np
import pytest

from nvmag.constants import COIL_FREQS, COIL_RMS, LOCKIN_SLOPES
from nvmag.pipeline import (
    applied_field,
    calibrate_channel_slopes,
    detect_tones,
    periodogram,
    run_pipeline,
    tone_rms,
)
from nvmag.signal_synth import (
    SynthConfig,
    contrast_for_slope,
    default_channels,
    default_coils,
    predicted_slope,
)
from nvmag.streams import SampleStream, Unit


@pytest.fixture(scope="module")
def slopes(ref_point):
    return calibrate_channel_slopes(ref_point)


@pytest.fixture(scope="module")
def default_run(ref_point, slopes):
    return run_pipeline(ref_point, coils=default_coils(), seed=0, slopes=slopes)


def test_calibrated_slopes_match_quasistatic_prediction(slopes):
    pred = [predicted_slope(c) for c in default_channels()]
    np.testing.assert_allclose(slopes.slopes, pred, rtol=1e-3)
    assert not slopes.poor_linearity.any()


def test_default_slopes_near_nominal_magnitude(slopes):
    ratio = slopes.slopes / LOCKIN_SLOPES
    assert np.all(ratio > 0.2) and np.all(ratio < 5.0)


def test_contrast_can_reproduce_nominal_slopes(ref_point):
    chans = [replace(c, contrast=contrast_for_slope(c, s)) for c, s in zip(default_channels(), LOCKIN_SLOPES)]
    cal = calibrate_channel_slopes(ref_point, chans)
    np.testing.assert_allclose(cal.slopes, LOCKIN_SLOPES, rtol=0.01)


def test_round_trip_amplitudes(default_run):
    measured = [t["measured_rms_t"] for t in default_run.coil_tones]
    np.testing.assert_allclose(measured, COIL_RMS, rtol=0.02)
    assert [t["freq_hz"] for t in default_run.coil_tones] == COIL_FREQS.tolist()


def test_round_trip_enbw_and_streams(default_run):
    assert default_run.enbw == pytest.approx(203.0, rel=0.05)
    assert len(default_run.field) == 3
    for s in default_run.field:
        assert s.unit is Unit.TESLA and s.rate == 2704.0 and len(s) == 2704


def test_coil_tones_detected_on_their_axes(default_run):
    for ax, f in zip("xyz", COIL_FREQS):
        assert any(abs(d["freq_hz"] - f) < 0.5 for d in default_run.detected_tones[ax])


def test_summary_is_serializable(default_run):
    import json

    json.dumps(default_run.summary())
    spectra = default_run.spectra()
    assert set(spectra) == {"x", "y", "z"}


def test_seed_changes_noise_not_amplitudes(ref_point, slopes, default_run):
    other = run_pipeline(ref_point, coils=default_coils(), seed=9, slopes=slopes)
    a = [t["measured_rms_t"] for t in default_run.coil_tones]
    b = [t["measured_rms_t"] for t in other.coil_tones]
    np.testing.assert_allclose(a, b, rtol=0.02)
    assert not np.array_equal(default_run.field[0].samples, other.field[0].samples)


@pytest.fixture(scope="module")
def quiet_run(ref_point, slopes):
    return run_pipeline(ref_point, coils=(), cfg=SynthConfig(duration=4.0), seed=1, slopes=slopes)


def test_zero_field_run_has_no_tones(quiet_run):
    assert all(not v for v in quiet_run.detected_tones.values())
    assert quiet_run.coil_tones == []


def test_empirical_sensitivity_matches_prediction(quiet_run):
    np.testing.assert_allclose(quiet_run.eta_empirical / quiet_run.eta_predicted, 1.0, atol=0.1)


def test_tone_helpers():
    rate = 2704.0
    t = np.arange(int(rate)) / rate
    s = SampleStream(3e-9 * np.sqrt(2) * np.sin(2 * np.pi * 40 * t), rate, Unit.TESLA)
    assert tone_rms(s, 40.0) == pytest.approx(3e-9, rel=1e-9)
    noisy = s.with_samples(s.samples + 1e-12 * np.random.default_rng(0).standard_normal(len(s)))
    hits = detect_tones(noisy)
    assert [h["freq_hz"] for h in hits] == [40.0]
    for method in ("periodogram", "welch"):
        f, asd = periodogram(noisy, method)
        assert f.shape == asd.shape
    assert applied_field(default_coils(), s).shape == (len(s), 3)
