import itertools

import numpy as np
import pytest

from slgbm.moments import (
    MomentRangeError,
    exact_moments,
    generator_matrix,
    intermittency_exponent,
    moment_bounds,
    pair_closed_form,
    pair_eigenvalues,
    pair_matrix,
    partitions,
)
from slgbm.noise import noise_coefficients


def brute_partitions(p):
    out = set()
    for k in range(1, p + 1):
        for combo in itertools.product(range(1, p + 1), repeat=k):
            if sum(combo) == p:
                out.add(tuple(sorted(combo, reverse=True)))
    return out


@pytest.mark.parametrize("p", range(1, 9))
def test_partitions_complete_and_ordered(p):
    got = partitions(p)
    assert set(got) == brute_partitions(p)
    assert len(got) == len(set(got))
    assert got == sorted(got, reverse=True)
    assert len(got) == [1, 2, 3, 5, 7, 11, 15, 22][p - 1]


def test_partitions_range():
    for bad in (0, 9, 2.5):
        with pytest.raises(ValueError):
            partitions(bad)


def full_covariance(n):
    """Exact Cov(dB) at dt = 1 as an (n^2, n^2) matrix."""
    c = noise_coefficients(n)
    Ls, La = np.zeros((n * n, n * n)), np.zeros((n * n, n * n))
    for a in range(n):
        for b in range(n):
            W = np.zeros((n, n))
            W[a, b] = 1.0
            Ls[:, a * n + b] = c.c_sym * (0.5 * (W + W.T) - np.trace(W) / n * np.eye(n)).ravel()
            La[:, a * n + b] = c.c_skew * (0.5 * (W - W.T)).ravel()
    return Ls @ Ls.T + La @ La.T


def monomial(G, lam):
    out = 1.0
    for q in lam:
        out = out * np.trace(np.linalg.matrix_power(G, q))
    return out


def ito_generator(G, lam):
    """dt-coefficient of E m((id + dB)^T G (id + dB)), computed exactly.

    Equals 1/2 sum_e k_e f_e''(0) over the eigenpairs of Cov(dB), where
    f_e(s) = m((id + s v_e)^T G (id + s v_e)) is a polynomial of degree 2|lam|;
    its s^2 coefficient is read off from values at complex roots of unity.
    """
    n = G.shape[0]
    k, V = np.linalg.eigh(full_covariance(n))
    M = 2 * sum(lam) + 1
    w = np.exp(2j * np.pi * np.arange(M) / M)
    total = 0.0
    for ke, v in zip(k, V.T):
        if ke < 1e-14:
            continue
        X = v.reshape(n, n)
        vals = [monomial((np.eye(n) + s * X).T @ G @ (np.eye(n) + s * X), lam) for s in w]
        c2 = np.sum(np.array(vals) * w ** -2) / M
        total += ke * c2.real  # 1/2 * f'' = c2
    return total


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_generator_rows_match_ito_generator(n, p):
    r = np.random.default_rng(10 * n + p)
    A = r.standard_normal((n, n)) / np.sqrt(n)
    G = A.T @ A + 0.1 * np.eye(n)
    gen = generator_matrix(n, p)
    m = np.array([monomial(G, lam) for lam in gen.basis])
    for row, lam in enumerate(gen.basis):
        assert gen.entries[row] @ m == pytest.approx(ito_generator(G, lam), rel=1e-9)


def test_generator_examples():
    for n in (2, 3, 7):
        assert generator_matrix(n, 1).entries.tolist() == [[1.0]]
    g = generator_matrix(3, 2)
    assert g.basis == ((2,), (1, 1))
    np.testing.assert_allclose(g.entries, [[2.2, 0.6], [1.2, 1.6]], rtol=1e-14)
    g = generator_matrix(2, 3)
    row = g.entries[g.index((1, 1, 1))]
    assert row[g.index((1, 1, 1))] == pytest.approx(0.0, abs=1e-14)
    assert row[g.index((2, 1))] == pytest.approx(6.0, rel=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 9])
def test_generator_specialises_to_pair_system(n):
    g = generator_matrix(n, 2).entries
    perm = [1, 0]  # pair basis is (tr^2 G, tr G^2)
    np.testing.assert_allclose(g[np.ix_(perm, perm)], pair_matrix(n), rtol=0, atol=1e-14)
    ev = np.sort(np.linalg.eigvals(pair_matrix(n)).real)
    np.testing.assert_allclose(ev, sorted(pair_eigenvalues(n)), rtol=1e-13)


def test_exact_moment_examples():
    for n in (2, 3, 5):
        for p in (1, 3, 6):
            t = exact_moments(n, p, 0.0)
            for lam in partitions(p):
                assert t[lam] == n ** len(lam)
    t = exact_moments(3, 2, 1.0)
    assert t[(1, 1)] == pytest.approx(93.0964, abs=5e-5)
    assert t[(2,)] == pytest.approx(76.7867, abs=5e-5)
    for tau in (0.3, 1.0, 4.0):
        t = exact_moments(2, 2, tau)
        assert t[(1, 1)] - t[(2,)] == pytest.approx(2.0, rel=1e-10)


def test_pair_closed_form_examples():
    assert pair_closed_form(3, 0.0) == pytest.approx((9.0, 3.0), rel=1e-15)
    a, b = pair_closed_form(2, 1.0)
    assert a == pytest.approx((8 * np.e ** 3 + 4) / 3, rel=1e-14)
    assert b == pytest.approx((8 * np.e ** 3 - 2) / 3, rel=1e-14)


def test_first_moment_is_exponential():
    for n in (2, 4):
        for tau in (0.5, 3.0):
            assert exact_moments(n, 1, tau)[(1,)] == pytest.approx(n * np.exp(tau), rel=1e-13)


def test_range_guard_names_maximal_tau():
    with pytest.raises(MomentRangeError, match="maximal admissible tau is 23.02"):
        exact_moments(3, 8, 100.0)
    with pytest.raises(MomentRangeError, match="maximal admissible tau"):
        moment_bounds(3, 8, 100.0)
    with pytest.raises(ValueError):
        exact_moments(3, 2, -1.0)


def test_intermittency_exponent_examples():
    assert intermittency_exponent(5, 1) == 1
    assert intermittency_exponent(2, 2) == 3 == pair_eigenvalues(2)[0]
    assert intermittency_exponent(3, 4) == pytest.approx(8.8)
    for n in range(2, 8):
        assert intermittency_exponent(n, 2) == pytest.approx(pair_eigenvalues(n)[0])


def test_top_generator_eigenvalue_is_intermittency_exponent():
    for n in (2, 3, 4, 6):
        for p in range(1, 9):
            top = np.max(np.linalg.eigvals(generator_matrix(n, p).entries).real)
            assert top == pytest.approx(intermittency_exponent(n, p), rel=1e-10)


def test_bounds_examples():
    lo, hi = moment_bounds(4, 1, 2.0)
    assert lo == hi == pytest.approx(4 * np.exp(2.0))
    lo, hi = moment_bounds(3, 2, 1.0)
    assert lo == pytest.approx(49.334, abs=1e-3) and hi == pytest.approx(148.0, abs=1e-2)
    assert moment_bounds(3, 3, 0.0) == (3.0, 27.0)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_sandwich_and_convexity(n):
    for p in range(1, 7):
        for tau in (0.0, 0.5, 1.0, 2.0, 5.0):
            t = exact_moments(n, p, tau)
            lo, hi = moment_bounds(n, p, tau)
            assert lo * (1 - 1e-9) <= t[(p,)] <= t[(1,) * p] * (1 + 1e-9)
            assert t[(1,) * p] <= hi * (1 + 1e-9)
            assert min(t.values.values()) >= n * (1 - 1e-12)
