import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ppp_coverage.model import NetworkConfig
from ppp_coverage.montecarlo import max_sir_samples
from ppp_coverage.zf import (
    SingularChannelError,
    desired_power,
    distortion_powers,
    estimate_coverage_channel,
    interference_power,
    ks_suite,
    max_sir_samples_channel,
    orthonormal_precoder,
    random_channels,
    zf_draws,
    zf_precoder,
)


def test_single_antenna_worked_example():
    h = np.array([[3 + 4j]])
    w = zf_precoder(h)
    assert w[0, 0] == pytest.approx(0.6 + 0.8j)
    assert desired_power(h, w, 0) == pytest.approx(25.0)


def test_single_user_is_matched_filter():
    h = np.array([[1.0, 1j]])
    np.testing.assert_allclose(zf_precoder(h)[:, 0], h[0] / np.sqrt(2))
    assert desired_power(h, zf_precoder(h), 0) == pytest.approx(2.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 5), st.integers(0, 2**31))
def test_zero_forcing_and_unit_columns(k, extra, seed):
    m = k + extra
    h = random_channels(k, m, np.random.default_rng(seed))
    w = zf_precoder(h)
    gram = np.conj(h) @ w                       # entries h_j^H w_k
    off = gram - np.diag(np.diag(gram))
    assert np.max(np.abs(off)) < 1e-9 * np.max(np.abs(np.diag(gram)))
    np.testing.assert_allclose(np.linalg.norm(w, axis=0), 1.0, rtol=1e-12)


def test_matches_gram_inverse_formula():
    h = random_channels(3, 5, np.random.default_rng(1))
    hb = np.conj(h / np.linalg.norm(h, axis=1, keepdims=True))
    w = hb.conj().T @ np.linalg.inv(hb @ hb.conj().T)
    w /= np.linalg.norm(w, axis=0)
    np.testing.assert_allclose(zf_precoder(h), w, atol=1e-12)


def test_batched_equals_loop():
    h = random_channels(2, 4, np.random.default_rng(2), (7,))
    w = zf_precoder(h)
    for i in range(7):
        np.testing.assert_allclose(w[i], zf_precoder(h[i]), atol=1e-12)


def test_singular_and_invalid_channels():
    h = np.array([[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(SingularChannelError):
        zf_precoder(h)
    with pytest.raises(SingularChannelError):
        zf_precoder(np.zeros((1, 2)))
    with pytest.raises(ValueError, match="K <= M"):
        zf_precoder(np.ones((3, 2)))
    assert issubclass(SingularChannelError, np.linalg.LinAlgError)


def test_orthonormal_precoder_columns():
    w = orthonormal_precoder(np.random.default_rng(0), 5, 3, (4,))
    for wi in w:
        np.testing.assert_allclose(wi.conj().T @ wi, np.eye(3), atol=1e-12)


def test_interference_power_is_gamma_k_with_orthonormal_streams():
    _, ip = zf_draws(4, 2, 50_000, np.random.default_rng(3), interferer="orthonormal")
    assert stats.kstest(ip, stats.gamma(2).cdf).pvalue > 0.01


def test_zf_interferer_mean_is_k_but_law_is_not_gamma_k():
    # unit-norm but non-orthogonal ZF columns keep E = K, inflate the variance
    _, ip = zf_draws(6, 6, 50_000, np.random.default_rng(4))
    assert ip.mean() == pytest.approx(6.0, rel=0.02)
    assert ip.var() > 1.5 * 6.0


def test_distortion_powers_follow_channel_norm():
    cfg = NetworkConfig(1, 3, 4, 2, delta_t=0.1, delta_r=0.2, power=10.0)
    h = random_channels(2, 4, np.random.default_rng(5))
    dt, dr = distortion_powers(h, cfg, 0)
    n2 = np.linalg.norm(h[0]) ** 2
    assert dt == pytest.approx(10 * 0.01 * n2)
    assert dr == pytest.approx(10 * 0.04 * n2)


def test_unknown_interferer_kind():
    with pytest.raises(ValueError):
        zf_draws(2, 1, 10, np.random.default_rng(0), interferer="mrt")


def test_ks_suite_small_sample_desired_power():
    res = ks_suite([(4, 2)], n=20_000, seed=2)
    assert [r.quantity for r in res] == ["desired_power", "interference_power[zf]"]
    assert res[0].passed
    assert "PASS" in res[0].line() or "FAIL" in res[0].line()


def test_interference_power_direct():
    g = np.array([1.0, 1j])
    w = np.eye(2)
    assert interference_power(g, w) == pytest.approx(2.0)


def test_channel_level_reproducible():
    cfg = NetworkConfig(3, 3, 4, 2, power=200.0)
    a = max_sir_samples_channel(cfg, trials=300, seed=3)
    np.testing.assert_array_equal(a, max_sir_samples_channel(cfg, trials=300, seed=3))


@pytest.mark.parametrize("m, k", [(1, 1), (6, 1)])
def test_channel_level_agrees_with_distribution_level(m, k):
    # for K = 1 the two engines have the same law: one precoder column, exact Gamma powers
    cfg = NetworkConfig(3, 3, m, k, delta_t=0.15, power=200.0, target_sir=3.16,
                        correlated_distortion=True)
    p_ch, ci_ch = estimate_coverage_channel(cfg, trials=6000, seed=5)
    p_mc = float(np.mean(max_sir_samples(cfg, trials=20_000, seed=6) > cfg.target_sir))
    ci_mc = 1.96 * np.sqrt(p_mc * (1 - p_mc) / 20_000)
    assert abs(p_ch - p_mc) < 1.5 * np.hypot(ci_ch, ci_mc)


def test_channel_level_orthonormal_interferers_match_sdma_model():
    cfg = NetworkConfig(3, 3, 4, 2, power=200.0, target_sir=1.0, correlated_distortion=True)
    p_ch, ci_ch = estimate_coverage_channel(cfg, trials=6000, seed=7, interferer="orthonormal")
    p_mc = float(np.mean(max_sir_samples(cfg, trials=20_000, seed=8) > 1.0))
    ci_mc = 1.96 * np.sqrt(p_mc * (1 - p_mc) / 20_000)
    assert abs(p_ch - p_mc) < 1.5 * np.hypot(ci_ch, ci_mc)


@pytest.mark.parametrize("m, k, mean, tol", [(6, 1, 6.0, 0.05), (6, 6, 1.0, 0.02), (1, 1, 1.0, 0.02)])
def test_desired_power_means(m, k, mean, tol):
    h = random_channels(k, m, np.random.default_rng(31), (100_000,))
    assert abs(desired_power(h, zf_precoder(h), 0).mean() - mean) < tol


def test_desired_power_single_antenna_is_channel_power():
    h = random_channels(1, 1, np.random.default_rng(32), (10,))
    np.testing.assert_allclose(desired_power(h, zf_precoder(h), 0), np.abs(h[:, 0, 0]) ** 2)


def test_interference_power_examples():
    _, ip = zf_draws(1, 1, 100_000, np.random.default_rng(33))
    assert abs(ip.mean() - 1.0) < 0.02
    assert interference_power(np.zeros(3), np.eye(3)[:, :2]) == 0.0


@pytest.mark.parametrize("m, power, field, delta, mean, tol", [
    (6, 1.0, "delta_t", 0.15, 0.135, 0.002),
    (1, 199.53, "delta_r", 0.15, 199.53 * 0.0225, 0.05),
])
def test_distortion_power_means(m, power, field, delta, mean, tol):
    cfg = NetworkConfig(1, 3, m, 1, power=power, **{field: delta})
    h = random_channels(1, m, np.random.default_rng(34), (100_000,))
    tx, rx = distortion_powers(h, cfg, 0)
    got = tx if field == "delta_t" else rx
    assert abs(got.mean() - mean) < tol
    if field == "delta_r":
        assert np.all(tx == 0)
