import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import digamma

from scalable_abc.core import ContractViolation, DomainError, RngStream
from scalable_abc.models import (BoxPrior, GaussianQuantileModel, SVModel, equally_spaced_alphas,
                                 lag1_autocorrelation, prior_density, prior_sample,
                                 sample_quantile)

THETA0 = np.array([1.0, np.sqrt(2.0)])


def test_box_prior_draws_inside(rng):
    for model in (GaussianQuantileModel([0.5], 100), SVModel(100)):
        draws = model.prior.sample(1000, rng)
        assert np.all(model.prior.contains(draws))
        assert model.prior.contains(prior_sample(model, rng))
        assert prior_density(model, model.prior.mean) == pytest.approx(1 / model.prior.volume)
        assert prior_density(model, model.prior.upper + 1) == 0.0


def test_tiny_box_concentrates(rng):
    prior = BoxPrior([1.0, 2.0], [1.0 + 1e-9, 2.0 + 1e-9])
    assert np.allclose(prior.sample(100, rng), [1.0, 2.0], atol=1e-8)


def test_box_prior_rejects_bad_bounds():
    with pytest.raises(ContractViolation):
        BoxPrior([0.0], [0.0])
    with pytest.raises(ContractViolation):
        BoxPrior([0.0, 1.0], [1.0])


@pytest.mark.parametrize("data,alpha,expected", [
    ([1, 2, 3, 4, 5], 0.5, 3.0),
    ([1, 2, 3, 4], 0.5, 2.5),
    ([7], 0.3, 7.0),
    ([7], 0.9, 7.0),
])
def test_sample_quantile(data, alpha, expected):
    assert sample_quantile(data, alpha) == expected


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.floats(0.01, 0.99))
def test_sample_quantile_matches_numpy(data, alpha):
    assert sample_quantile(data, alpha) == pytest.approx(np.quantile(data, alpha), abs=1e-6)


def test_lag1_autocorrelation():
    assert lag1_autocorrelation([1, -1, 1, -1]) == pytest.approx(-0.75)
    assert lag1_autocorrelation(3.0 + np.array([1, -1] * 10)) < 0
    with pytest.raises(ContractViolation):
        lag1_autocorrelation([2.0, 2.0, 2.0])


def test_lag1_autocorrelation_iid(rng):
    assert abs(lag1_autocorrelation(rng.standard_normal(100_000))) < 0.02


def test_equally_spaced_alphas():
    assert np.allclose(equally_spaced_alphas(9), np.arange(1, 10) / 10)
    assert np.allclose(equally_spaced_alphas(19), np.arange(1, 20) / 20)


def test_gaussian_limit_values():
    m = GaussianQuantileModel([0.5], 10**6)
    s = m.simulate_summary(THETA0, RngStream(1).generator())
    assert s[0] == pytest.approx(np.exp(0.5), abs=5e-3)
    s = m.simulate_summary([0.0, 1.0], RngStream(2).generator())
    assert s[0] == pytest.approx(1.0, abs=5e-3)


def test_gaussian_determinism():
    m = GaussianQuantileModel(equally_spaced_alphas(4), 1000)
    a = m.simulate_summaries(np.tile(THETA0, (5, 1)), RngStream(3).generator())
    b = m.simulate_summaries(np.tile(THETA0, (5, 1)), RngStream(3).generator())
    assert np.array_equal(a, b)


def test_gaussian_domain():
    m = GaussianQuantileModel([0.5], 100)
    with pytest.raises(DomainError):
        m.simulate_summary([0.0, -1.0], RngStream(0).generator())
    with pytest.raises(ContractViolation):
        GaussianQuantileModel([0.5, 0.5], 100)
    with pytest.raises(ContractViolation):
        m.simulate_summary([0.0, 1.0, 2.0], RngStream(0).generator())


@pytest.mark.parametrize("n,alphas", [(7, [0.2, 0.5, 0.9]), (50, [0.1, 0.25, 0.75])])
def test_fast_quantile_simulation_matches_brute_force(n, alphas):
    # the order-statistic shortcut must have the law of summary(simulate_data(...))
    m = GaussianQuantileModel(alphas, n)
    g = RngStream(4).generator()
    fast = m.simulate_summaries(np.tile(THETA0, (20_000, 1)), g)
    slow = np.array([m.summary(m.simulate_data(THETA0, g)) for _ in range(20_000)])
    for j in range(len(alphas)):
        assert stats.ks_2samp(fast[:, j], slow[:, j]).pvalue > 1e-3
    assert np.allclose(np.corrcoef(fast.T), np.corrcoef(slow.T), atol=0.04)


def test_sv_degenerate_volatility():
    # sigma_eta -> 0: y* iid with mean 2 log sigma_bar + E log chi2_1
    m = SVModel(200_000)
    s = m.simulate_summary([0.5, 1e-8, -4.1], RngStream(5).generator())
    e_log_chi2 = digamma(0.5) + np.log(2.0)
    assert e_log_chi2 == pytest.approx(-1.27036, abs=1e-5)
    assert s[2] == pytest.approx(2 * -4.1 + e_log_chi2, abs=0.02)
    assert abs(s[1]) < 0.01
    assert s[0] == pytest.approx(np.pi ** 2 / 2, rel=0.03)  # var of log chi2_1


def test_sv_scalar_and_vector_paths_agree():
    m = SVModel(300)
    th = np.array([0.9, 0.675, -4.1])
    a = m.simulate_summary(th, RngStream(6).generator())
    b = m.summary(m.simulate_data(th, RngStream(6).generator()))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_sv_determinism_and_domain():
    m = SVModel(100)
    th = np.tile([0.9, 0.675, -4.1], (3, 1))
    assert np.array_equal(m.simulate_summaries(th, RngStream(7).generator()),
                          m.simulate_summaries(th, RngStream(7).generator()))
    with pytest.raises(DomainError):
        m.simulate_summary([1.0, 0.5, -4.0], RngStream(0).generator())


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(0.1, 3.0), st.floats(-10, -1))
def test_sv_summaries_finite_on_prior(phi, s_eta, log_sbar):
    s = SVModel(200).simulate_summary([phi, s_eta, log_sbar], RngStream(8).generator())
    assert np.all(np.isfinite(s))
    assert s[0] >= 0 and -1 <= s[1] <= 1
