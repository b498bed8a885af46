import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from scalable_abc.core import (ContractViolation, EmptyAcceptanceError, Kernel, PosteriorSample,
                               RngStream, derive_stream, kernel_eval, lambda_norm,
                               scaled_kernel_eval)

from conftest import make_sample


@pytest.mark.parametrize("family,v,expected", [
    ("uniform", (0.5, 0.0), 1.0),
    ("uniform", (1.5, 0.0), 0.0),
    ("uniform", (1.0, 0.0), 1.0),
    ("gaussian", (0.0, 0.0), 1.0),
    ("gaussian", (1.0, 1.0), np.exp(-1.0)),
    ("epanechnikov", (0.5, 0.0), 0.75),
    ("epanechnikov", (2.0, 0.0), 0.0),
])
def test_kernel_values(family, v, expected):
    assert kernel_eval(Kernel.identity(family, 2), v) == pytest.approx(expected, rel=1e-15)


def test_scaled_kernel():
    assert scaled_kernel_eval(Kernel("uniform"), 2.0, (1.5, 0.0)) == 1.0
    assert scaled_kernel_eval(Kernel("gaussian"), 1.0, (0.0, 0.0)) == 1.0
    x = np.array([2.0, 2.0])  # |x|^2 = 8
    assert scaled_kernel_eval(Kernel("gaussian"), 2.0, x) == pytest.approx(np.exp(-1.0))


@pytest.mark.parametrize("eps", [0.0, -1.0])
def test_scaled_kernel_rejects_bad_bandwidth(eps):
    with pytest.raises(ContractViolation):
        scaled_kernel_eval(Kernel(), eps, (1.0,))


def test_lambda_norm():
    assert lambda_norm(Kernel.identity("uniform", 2), (3.0, 4.0)) == 5.0
    assert lambda_norm(Kernel("uniform", (4.0, 1.0)), (1.0, 0.0)) == 2.0
    assert lambda_norm(Kernel("uniform", (4.0, 1.0)), (0.0, 0.0)) == 0.0


def test_dimension_mismatch():
    with pytest.raises(ContractViolation):
        kernel_eval(Kernel.identity("uniform", 2), (1.0, 2.0, 3.0))


def test_invalid_kernel_config():
    with pytest.raises(ContractViolation):
        Kernel("triangle")
    with pytest.raises(ContractViolation):
        Kernel("uniform", (1.0, 0.0))


@given(st.sampled_from(["uniform", "gaussian", "epanechnikov"]),
       arrays(float, 3, elements=st.floats(-1e3, 1e3)),
       arrays(float, 3, elements=st.floats(0.01, 100)))
def test_kernel_bounded_by_one(family, v, lam):
    k = Kernel(family, lam)
    val = kernel_eval(k, v)
    assert 0.0 <= val <= 1.0
    assert kernel_eval(k, np.zeros(3)) == 1.0


@given(arrays(float, 4, elements=st.floats(-100, 100)), st.floats(0.1, 10))
def test_lambda_norm_homogeneous(v, c):
    k = Kernel("uniform", (1.0, 2.0, 0.5, 3.0))
    assert lambda_norm(k, c * v) == pytest.approx(c * lambda_norm(k, v), rel=1e-12, abs=1e-12)


def test_rng_streams():
    a = derive_stream(42, 0).generator().random(5)
    b = derive_stream(42, 0).generator().random(5)
    c = derive_stream(42, 1).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert derive_stream(42, 7).stream_id == 7
    assert RngStream(42, (1,)).spawn(2) == RngStream(42, (1, 2))


def test_rng_stream_thread_independent():
    ref = derive_stream(42, 7).generator().random(100)
    out = [None] * 8

    def work(i):
        out[i] = derive_stream(42, 7).generator().random(100)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(np.array_equal(ref, o) for o in out)


def test_posterior_sample_contract():
    s = make_sample([[0.0], [1.0]], [1.0, 3.0], n_proposed=10)
    assert s.n_accepted == 2 and s.acceptance_rate == 0.2
    assert s.particles[1].weight == 3.0
    with pytest.raises(EmptyAcceptanceError):
        PosteriorSample(np.empty((0, 2)), [], [], 10, 1.0, 0, Kernel())
    with pytest.raises(ContractViolation):
        make_sample([[0.0], [1.0]], [1.0, -1.0])
    with pytest.raises(ContractViolation):
        make_sample([[0.0], [1.0]], [1.0])
