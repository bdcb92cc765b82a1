import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvmag.calibration import linear_regime_matrix
from nvmag.errors import InputError
from nvmag.pulsed_walsh import (
    DEFAULT_CODES,
    RamseyConfig,
    WalshCode,
    compare_snr,
    decode,
    decode_sequential,
    decoded_std,
    default_bridge,
    encode_sequence,
    encode_sequential,
    projections_to_field,
    sequential_baseline,
)

CODE = WalshCode()
MICRO = RamseyConfig(alphas=np.full(4, 1e-6))
field4 = st.lists(st.floats(-1e-6, 1e-6), min_size=4, max_size=4).map(np.array)
alphas = st.lists(st.floats(1e-7, 1e-4), min_size=4, max_size=4).map(np.array)


def test_default_codes_orthogonal_and_balanced():
    np.testing.assert_array_equal(DEFAULT_CODES @ DEFAULT_CODES.T, 8 * np.eye(4))
    assert CODE.balanced and CODE.length == 8


def test_code_validation():
    with pytest.raises(InputError):
        WalshCode(DEFAULT_CODES[:3])
    with pytest.raises(InputError):
        WalshCode(np.where(DEFAULT_CODES > 0, 2.0, -1.0))
    bad = DEFAULT_CODES.copy()
    bad[1] = bad[0]
    with pytest.raises(InputError):
        WalshCode(bad)
    with pytest.raises(InputError):
        RamseyConfig(t_sense=0.0)


@settings(max_examples=200)
@given(field4, alphas, st.floats(0.1, 10.0))
def test_noiseless_round_trip(b, a, mean_pl):
    cfg = RamseyConfig(alphas=a, mean_pl=mean_pl)
    np.testing.assert_allclose(decode(encode_sequence(cfg, CODE, b), cfg, CODE), b, rtol=0, atol=1e-12 * max(1e-6, np.abs(b).max()))


@settings(max_examples=100)
@given(field4, alphas)
def test_decode_matches_direct_inversion(b, a):
    cfg = RamseyConfig(alphas=a)
    s = encode_sequence(cfg, CODE, b) + np.random.default_rng(0).normal(0, 0.01, 8)
    design = CODE.codes.T * (cfg.mean_pl / cfg.alphas)
    direct = np.linalg.lstsq(design, s - cfg.mean_pl, rcond=None)[0]
    np.testing.assert_allclose(decode(s, cfg, CODE), direct, rtol=1e-9, atol=1e-15 * a.max())


@settings(max_examples=200)
@given(st.floats(-1e6, 1e6, allow_subnormal=False))
def test_constant_input_decodes_to_zero(c):
    assert np.all(decode(np.full(8, c), RamseyConfig(), CODE) == 0.0)


@settings(max_examples=100)
@given(field4, st.floats(-100.0, 100.0))
def test_offset_immunity(b, c):
    cfg = RamseyConfig()
    s = encode_sequence(cfg, CODE, b)
    np.testing.assert_allclose(decode(s + c, cfg, CODE), decode(s, cfg, CODE), rtol=0, atol=1e-13 * (1 + abs(c)))


def test_decode_rejects_wrong_length():
    with pytest.raises(InputError):
        decode(np.zeros(7), RamseyConfig(), CODE)


def test_decoded_std_formulas():
    cfg = RamseyConfig(alphas=np.full(4, 2e-6), mean_pl=0.5)
    np.testing.assert_allclose(decoded_std(cfg, 0.01, CODE), 2e-6 * 0.01 / (np.sqrt(8) * 0.5))
    np.testing.assert_allclose(decoded_std(cfg, 0.01), 2e-6 * 0.01 / (np.sqrt(2) * 0.5))
    np.testing.assert_allclose(decoded_std(cfg, 0.01) / decoded_std(cfg, 0.01, CODE), 2.0)


def test_snr_ratio_monte_carlo():
    b = np.array([1e-8, -2e-8, 1.5e-8, 5e-9])
    cfg = MICRO
    cmp = compare_snr(cfg, CODE, b, noise_std=0.01, trials=20_000, seed=0)
    np.testing.assert_allclose(cmp.snr_ratio, 2.0, atol=0.1)
    np.testing.assert_allclose(cmp.std_simultaneous, decoded_std(cfg, 0.01, CODE), rtol=0.03)
    np.testing.assert_allclose(cmp.std_sequential, decoded_std(cfg, 0.01), rtol=0.03)
    np.testing.assert_allclose(cmp.mean_simultaneous, b, atol=4 * decoded_std(cfg, 0.01, CODE)[0] / np.sqrt(20_000))
    assert set(cmp.to_dict()) >= {"snr_ratio", "trials"}
    with pytest.raises(InputError):
        compare_snr(cfg, CODE, b, 0.01, trials=1)


def test_sequential_baseline():
    cfg = MICRO
    b = np.array([1e-8, -2e-8, 1.5e-8, 5e-9])
    s = encode_sequential(cfg, b)
    assert s.shape == (4, 2)
    np.testing.assert_allclose(decode_sequential(s, cfg), b, rtol=1e-12)
    res = sequential_baseline(cfg, b, noise_std=0.01, seed=1)
    np.testing.assert_allclose(res.snr, np.abs(b) / decoded_std(cfg, 0.01))
    assert np.all(np.isinf(sequential_baseline(cfg, b).snr))


def test_noise_draws_are_seeded():
    cfg = RamseyConfig()
    a = encode_sequence(cfg, CODE, np.zeros(4), 0.1, seed=3)
    np.testing.assert_array_equal(a, encode_sequence(cfg, CODE, np.zeros(4), 0.1, seed=3))
    assert not np.array_equal(a, encode_sequence(cfg, CODE, np.zeros(4), 0.1, seed=4))


def test_measurement_rate():
    cfg = RamseyConfig(1e-6, 2e-6, 1e-6)
    assert cfg.sequence_time == pytest.approx(4e-6)
    assert cfg.measurement_rate() == pytest.approx(1 / 32e-6)


def test_projections_to_field():
    m = linear_regime_matrix()
    bridge = default_bridge(m)
    np.testing.assert_allclose(np.abs(np.diag(bridge)), m.gamma)
    b = np.array([3e-9, -1e-9, 2e-9])
    proj = np.array([l.orientation.axis for l in m.addressed]) @ b
    np.testing.assert_allclose(projections_to_field(proj, m), b, rtol=1e-12)
