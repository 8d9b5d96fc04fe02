"""Exact expectations of trace monomials of the Gram matrix ``G = F^T F``.

A trace monomial ``m_lam = prod_i tr G^{p_i}`` is indexed by an integer
partition ``lam = (p_1 >= p_2 >= ...)`` of its degree ``p``.  Ito's formula
with the isotropic covariations of the symmetric noise part shows that
``d E[m_lam] / dtau`` is a linear combination of expectations of monomials of
the same degree:

* each part ``p_i`` contributes ``(p_i + p_i (p_i - 1)(n - 2)/alpha_n) m_lam``
  plus ``p_i n / alpha_n`` times the monomials with ``p_i`` split into
  ``(q, p_i - q)``, ``q = 1..p_i-1``;
* each unordered pair of parts contributes
  ``4 p_i p_j / alpha_n (n m_merged - m_lam)``.

The resulting generator is exponentiated to give the moments at any time.
For ``p = 2`` it reduces to the classical 2x2 system for ``(E tr^2 G, E tr G^2)``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .linalg import _expm
from .noise import noise_coefficients

__all__ = [
    "MAX_DEGREE",
    "MomentRangeError",
    "GeneratorMatrix",
    "MomentTable",
    "partitions",
    "generator_matrix",
    "pair_matrix",
    "pair_eigenvalues",
    "exact_moments",
    "pair_closed_form",
    "intermittency_exponent",
    "ratio_exponent",
    "moment_bounds",
]

MAX_DEGREE = 8
MAX_EXPONENT = 700.0


class MomentRangeError(OverflowError):
    """The requested time would overflow double precision."""


def _check_degree(p):
    if int(p) != p or not 1 <= p <= MAX_DEGREE:
        raise ValueError(f"degree must be an integer in 1..{MAX_DEGREE}, got {p!r}")
    return int(p)


@lru_cache(maxsize=None)
def _partitions(p, largest):
    if p == 0:
        return ((),)
    out = []
    for first in range(min(p, largest), 0, -1):
        for rest in _partitions(p - first, first):
            out.append((first,) + rest)
    return tuple(out)


def partitions(p):
    """All partitions of ``p`` as non-increasing tuples, reverse-lexicographic.

    >>> partitions(4)
    [(4,), (3, 1), (2, 2), (2, 1, 1), (1, 1, 1, 1)]
    """
    p = _check_degree(p)
    return list(_partitions(p, p))


def _canon(parts):
    return tuple(sorted(parts, reverse=True))


@dataclass(frozen=True)
class GeneratorMatrix:
    n: int
    p: int
    basis: tuple
    entries: np.ndarray

    def index(self, lam):
        return self.basis.index(_canon(lam))


@lru_cache(maxsize=None)
def _generator(n, p):
    alpha = noise_coefficients(n).alpha_n
    basis = tuple(partitions(p))
    pos = {lam: k for k, lam in enumerate(basis)}
    A = np.zeros((len(basis), len(basis)))
    for row, lam in enumerate(basis):
        for i, pi in enumerate(lam):
            A[row, row] += pi + pi * (pi - 1) * (n - 2) / alpha
            rest = lam[:i] + lam[i + 1:]
            for q in range(1, pi):
                A[row, pos[_canon(rest + (q, pi - q))]] += pi * n / alpha
        for i in range(len(lam)):
            for j in range(i + 1, len(lam)):
                c = 4.0 * lam[i] * lam[j] / alpha
                rest = tuple(x for k, x in enumerate(lam) if k not in (i, j))
                A[row, pos[_canon(rest + (lam[i] + lam[j],))]] += c * n
                A[row, row] -= c
    A.setflags(write=False)
    return GeneratorMatrix(n, p, basis, A)


def generator_matrix(n, p):
    """Rates ``d E[m_lam]/dtau = sum_mu A[lam, mu] E[m_mu]`` over ``partitions(p)``."""
    n = noise_coefficients(n).n
    return _generator(n, _check_degree(p))


def pair_matrix(n):
    """The degree-2 system written in the basis ``(tr^2 G, tr G^2)``."""
    alpha = noise_coefficients(n).alpha_n
    return (2 - 4 / alpha) * np.eye(2) + (2 * n / alpha) * np.array([[0.0, 2.0], [1.0, 1.0]])


def pair_eigenvalues(n):
    """``(lambda_1, lambda_2) = (2 + 4/(n+2), 2 - 2/(n-1))``."""
    n = noise_coefficients(n).n
    return 2 + 4 / (n + 2), 2 - 2 / (n - 1)


@dataclass(frozen=True)
class MomentTable:
    n: int
    tau: float
    values: dict

    def __getitem__(self, lam):
        return self.values[_canon(lam)]


def _initial(n, basis):
    return np.array([float(n) ** len(lam) for lam in basis])


def _growth_rate(gen):
    return float(np.max(np.linalg.eigvals(gen.entries).real))


def max_tau(n, p):
    """Largest admissible time for degree ``p`` (growth exponent at most 700)."""
    return MAX_EXPONENT / _growth_rate(generator_matrix(n, p))


def _check_tau(n, p, tau, rate):
    if not np.isfinite(tau) or tau < 0:
        raise ValueError(f"tau must be finite and >= 0, got {tau!r}")
    if rate * tau > MAX_EXPONENT:
        raise MomentRangeError(
            f"tau={tau} overflows for n={n}, p={p}; maximal admissible tau is {MAX_EXPONENT / rate:.6g}"
        )


def _ode_moments(gen, tau, rtol=1e-13):
    m0 = _initial(gen.n, gen.basis)
    if tau == 0:
        return m0
    sol = solve_ivp(lambda t, y: gen.entries @ y, (0.0, tau), m0, method="DOP853",
                    rtol=rtol, atol=0.0)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[:, -1]


def exact_moments(n, p, tau, cross_check=True, rtol=1e-10):
    """Exact ``E[m_lam](tau)`` for every partition ``lam`` of ``p``.

    The primary value is ``exp(tau A) m(0)`` by scaling and squaring; when
    ``cross_check`` is set an adaptive ODE integration of the same system must
    agree to ``rtol`` relative, otherwise ``ArithmeticError`` is raised.
    """
    gen = generator_matrix(n, p)
    tau = float(tau)
    _check_tau(gen.n, gen.p, tau, _growth_rate(gen))
    m0 = _initial(gen.n, gen.basis)
    # the public matrix_exp insists on n >= 2; the p = 1 generator is 1x1
    vals = _expm(np.ascontiguousarray(tau * gen.entries), 1e-15) @ m0
    if cross_check:
        ode = _ode_moments(gen, tau)
        err = np.max(np.abs(ode - vals) / np.abs(vals))
        if err > rtol:
            raise ArithmeticError(f"exponential and ODE paths disagree by {err:.3g} relative")
    return MomentTable(gen.n, tau, {lam: float(v) for lam, v in zip(gen.basis, vals)})


def pair_closed_form(n, tau):
    """``(E tr^2 G, E tr G^2)`` from the eigen-decomposition of the 2x2 system.

    With left eigenvectors ``(1, 2)`` and ``(1, -1)``::

        E tr^2 G + 2 E tr G^2 = (n^2 + 2n) exp(lambda_1 tau)
        E tr^2 G -   E tr G^2 = n(n - 1) exp(lambda_2 tau)
    """
    l1, l2 = pair_eigenvalues(n)
    _check_tau(n, 2, float(tau), l1)
    a = (n * n + 2 * n) * np.exp(l1 * tau)
    b = n * (n - 1) * np.exp(l2 * tau)
    return (a + 2 * b) / 3, (a - b) / 3


def intermittency_exponent(n, p):
    """Growth rate ``p + 2p(p-1)/(n+2)`` of the 2p-th moment of ``|F|``."""
    n = noise_coefficients(n).n
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return p + 2 * p * (p - 1) / (n + 2)


def ratio_exponent(n, p):
    """``1 + (n+4)(p-1)/(n+2)``, the linearisation of the growth rate at ``p = 1``."""
    return 1 + (n + 4) * (p - 1) / (n + 2)


def moment_bounds(n, p, tau):
    """``(n e^{r tau}, n^p e^{r tau})`` bracketing ``E tr G^p <= E tr^p G``."""
    r = intermittency_exponent(n, p)
    if not np.isfinite(tau) or tau < 0:
        raise ValueError(f"tau must be finite and >= 0, got {tau!r}")
    if r * tau + p * np.log(n) > MAX_EXPONENT:
        raise MomentRangeError(
            f"bounds overflow for n={n}, p={p}, tau={tau}; "
            f"maximal admissible tau is {(MAX_EXPONENT - p * np.log(n)) / r:.6g}"
        )
    g = np.exp(r * tau)
    return n * g, n ** p * g
