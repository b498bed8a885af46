import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from scalable_abc.core import ContractViolation, Kernel, RngStream
from scalable_abc.diagnostics import (efficiency_ratio, ess, estimator_report, is_variance_hat,
                                      mc_variance_hat, mse_ratio, mse_table, posterior_mean)
from scalable_abc.models import GaussianQuantileModel, equally_spaced_alphas
from scalable_abc.samplers import BandwidthRule, rejection_abc

from conftest import make_sample

weights_st = arrays(float, st.integers(2, 30), elements=st.floats(1e-3, 1e3))


def test_posterior_mean_examples():
    assert posterior_mean(make_sample([0.0, 2.0], [1.0, 1.0]))[0] == 1.0
    assert posterior_mean(make_sample([0.0, 4.0], [3.0, 1.0]))[0] == 1.0
    assert posterior_mean(make_sample([[0.0, 1.0]], [1.0]), h=lambda t: t ** 2).tolist() == [0, 1]


@given(weights_st, st.floats(1e-3, 1e3))
def test_posterior_mean_scale_invariant(w, c):
    theta = np.arange(w.size, dtype=float)
    a = posterior_mean(make_sample(theta, w))
    b = posterior_mean(make_sample(theta, c * w))
    assert a == pytest.approx(b, rel=1e-10)


def test_ess_examples():
    assert ess(make_sample(np.zeros(7), np.full(7, 0.3))) == 7
    assert ess(make_sample(np.zeros(3), [0.0, 2.0, 0.0])) == 1
    assert ess(make_sample([0.0, 1.0], [2.0, 1.0])) == pytest.approx(1.8)


@given(weights_st)
def test_ess_bounds(w):
    e = ess(make_sample(np.zeros(w.size), w))
    assert 1.0 <= e <= w.size
    if e == w.size:
        assert np.allclose(w, w[0], rtol=1e-6)


def test_is_variance_hat_examples():
    assert is_variance_hat(make_sample([0.0, 2.0], [1.0, 1.0]))[0] == pytest.approx(1.0)
    x = np.array([0.3, 1.7, 2.2, 5.0])
    assert is_variance_hat(make_sample(x, np.ones(4)))[0] == pytest.approx(np.var(x))
    dom = is_variance_hat(make_sample([1.0, 50.0], [1e12, 1.0]))
    assert dom[0] < 1e-6
    with pytest.raises(ContractViolation):
        is_variance_hat(make_sample([1.0], [1.0]))


def test_mc_variance_and_efficiency():
    assert mc_variance_hat(1.0, 0.1, 100) == pytest.approx(0.1)
    assert mc_variance_hat(1.0, 0.1, 200) == pytest.approx(0.05)
    assert efficiency_ratio(2.0, 2.0, 0.0) == 1.0
    assert efficiency_ratio(2.0, 2.0, 2.0) == 0.5
    with pytest.raises(ContractViolation):
        mc_variance_hat(1.0, 0.0, 10)


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0, 10))
def test_efficiency_ratio_decreases_with_mcv(av_mles, av_hat, mcv):
    assert efficiency_ratio(av_mles, av_hat, mcv) <= av_mles / av_hat * (1 + 1e-12)


def test_mc_variance_matches_replication():
    # spread of the ABC estimate over independent Monte Carlo seeds, one dataset
    n, N = 1000, 20_000
    m = GaussianQuantileModel(equally_spaced_alphas(2), n)
    s_obs = m.simulate_summary([1.0, np.sqrt(2.0)], RngStream(21).generator())
    rule = BandwidthRule.rate(0.05)
    est, mcv = [], []
    for seed in range(200):
        s = rejection_abc(m, Kernel(), s_obs, rule, N, RngStream(22, (seed,)))
        rep = estimator_report(s)
        est.append(rep.h_hat)
        mcv.append(rep.mcv_hat)
    ratio = np.var(est, axis=0) / np.mean(mcv, axis=0)
    assert np.all((ratio > 0.5) & (ratio < 2.0))


def test_mse_table():
    assert np.all(mse_table([[1.0, 2.0], [1.0, 2.0]], [1.0, 2.0], 10)["mse"] == 0)
    out = mse_table([[2.0, 0.0], [0.0, 0.0]], [1.0, 0.0], 10)
    assert out["mse"].tolist() == [1.0, 0.0] and out["mse_times_n"][0] == 10.0
    assert mse_ratio([0.5], [0.5])[0] == 1.0
    with pytest.raises(ContractViolation):
        mse_table([[1.0, 2.0]], [1.0, 2.0], 10)
