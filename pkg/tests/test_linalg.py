import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slgbm.linalg import SingularMatrixError, gram, log_det, matrix_exp, trace_power

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def square(n):
    return arrays(np.float64, (n, n), elements=finite)


def test_gram_is_exactly_symmetric():
    F = np.random.default_rng(0).standard_normal((5, 5))
    G = gram(F)
    assert np.array_equal(G, G.T)
    np.testing.assert_allclose(G, F.T @ F, rtol=1e-14)


@given(st.integers(2, 6).flatmap(square))
@settings(max_examples=60, deadline=None)
def test_trace_of_gram_is_frobenius(F):
    assert trace_power(gram(F), 1) == pytest.approx(np.sum(F * F), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3, 5, 8])
def test_trace_power_methods_agree(p):
    F = np.random.default_rng(p).standard_normal((4, 4))
    G = gram(F)
    a = trace_power(G, p, "product")
    b = trace_power(G, p, "eigen")
    assert a == pytest.approx(b, rel=1e-10)
    assert a == pytest.approx(np.trace(np.linalg.matrix_power(G, p)), rel=1e-12)


def test_trace_power_rejects_bad_input():
    with pytest.raises(ValueError):
        trace_power(np.eye(3), 0)
    with pytest.raises(ValueError):
        trace_power(np.eye(3), 2, "magic")
    with pytest.raises(ValueError):
        trace_power(np.ones((2, 3)), 1)
    with pytest.raises(ValueError):
        trace_power(np.array([[1.0, np.nan], [0, 1]]), 1)
    with pytest.raises(ValueError):
        gram(np.ones((1, 1)))


def test_exp_of_zero_is_identity_exactly():
    for n in (2, 3, 7):
        assert np.array_equal(matrix_exp(np.zeros((n, n))), np.eye(n))


@given(st.integers(2, 5).flatmap(square))
@settings(max_examples=80, deadline=None)
def test_exp_matches_scipy(M):
    ref = scipy.linalg.expm(M)
    got = matrix_exp(M)
    scale = max(1.0, np.max(np.abs(ref)))
    assert np.max(np.abs(got - ref)) <= 1e-10 * scale * max(1.0, np.sum(np.abs(M)))


def test_exp_of_traceless_has_unit_determinant():
    r = np.random.default_rng(3)
    for _ in range(20):
        M = r.standard_normal((4, 4))
        M -= np.trace(M) / 4 * np.eye(4)
        assert abs(log_det(matrix_exp(M))) < 1e-12


def test_exp_inverse_and_tolerance_guard():
    M = np.random.default_rng(1).standard_normal((3, 3))
    np.testing.assert_allclose(matrix_exp(M) @ matrix_exp(-M), np.eye(3), atol=1e-12)
    with pytest.raises(ValueError):
        matrix_exp(M, tol=1e-3)


def test_log_det():
    F = np.diag([2.0, 0.5, 3.0])
    assert log_det(F) == pytest.approx(np.log(3.0), rel=1e-15)
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert log_det(P) == 0.0
    with pytest.raises(SingularMatrixError):
        log_det(np.array([[1.0, 2.0], [2.0, 4.0]]))


@given(st.integers(2, 6).flatmap(square))
@settings(max_examples=60, deadline=None)
def test_log_det_matches_slogdet(F):
    sign, ref = np.linalg.slogdet(F)
    if sign == 0 or ref < -30:
        return
    assert log_det(F) == pytest.approx(ref, abs=1e-9)
