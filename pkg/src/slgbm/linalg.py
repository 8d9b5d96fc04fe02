"""Dense small-matrix helpers: Gram matrix, trace powers, exponential, log-det.

Matrices are plain ``numpy.ndarray`` objects of shape ``(n, n)`` and dtype
``float64``.  The public functions validate their input and delegate to
numba-compiled kernels that are also called from inside the trajectory
integrator, so the stepping code and the library API share one implementation.
"""

import numba as nb
import numpy as np

__all__ = [
    "SingularMatrixError",
    "as_square",
    "gram",
    "trace_power",
    "matrix_exp",
    "log_det",
]

PIVOT_FLOOR = 1e-300


class SingularMatrixError(ArithmeticError):
    """Raised when an LU pivot falls below ``PIVOT_FLOOR``."""


def as_square(M, name="matrix"):
    """Return ``M`` as a finite float64 ``(n, n)`` array with ``n >= 2``."""
    a = np.asarray(M, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] < 2:
        raise ValueError(f"{name} must have dimension n >= 2, got n={a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@nb.njit(cache=True)
def _matmul(A, B):
    n = A.shape[0]
    C = np.zeros((n, n))
    for i in range(n):
        for k in range(n):
            a = A[i, k]
            if a != 0.0:
                for j in range(n):
                    C[i, j] += a * B[k, j]
    return C


@nb.njit(cache=True)
def _gram(F):
    n = F.shape[0]
    G = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            s = 0.0
            for k in range(n):
                s += F[k, i] * F[k, j]
            G[i, j] = s
            G[j, i] = s
    return G


@nb.njit(cache=True)
def _trace_powers(G, p_max, out):
    # out[k-1] = tr G^k for k = 1..p_max
    n = G.shape[0]
    P = G.copy()
    for k in range(p_max):
        if k > 0:
            P = _matmul(P, G)
        t = 0.0
        for i in range(n):
            t += P[i, i]
        out[k] = t


@nb.njit(cache=True)
def _norm1(M):
    n = M.shape[0]
    best = 0.0
    for j in range(n):
        s = 0.0
        for i in range(n):
            s += abs(M[i, j])
        if s > best:
            best = s
    return best


@nb.njit(cache=True)
def _matmul_into(A, B, out):
    n = A.shape[0]
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += A[i, k] * B[k, j]
            out[i, j] = s


@nb.njit(cache=True)
def _taylor_terms(x, tol):
    # smallest K with tail sum_{j>K} x^j/j! <= x^{K+1}/(K+1)! / (1 - x/(K+2)) <= tol
    k = 0
    tail = x
    while tail / (1.0 - x / (k + 2)) > tol and k < 40:
        k += 1
        tail *= x / (k + 1)
    return k


@nb.njit(cache=True)
def _expm_into(M, tol, out, work, tmp):
    """Write ``exp(M)`` into ``out``; ``work`` and ``tmp`` are scratch."""
    n = M.shape[0]
    norm = _norm1(M)
    s = 0
    scale = 1.0
    while norm * scale > 0.5:
        scale *= 0.5
        s += 1
    K = _taylor_terms(norm * scale, tol)
    # Horner: P_K = id, P_j = id + (scale M) P_{j+1} / (j+1), exp ~ P_0
    for i in range(n):
        for j in range(n):
            out[i, j] = 1.0 if i == j else 0.0
    for j in range(K, 0, -1):
        c = scale / j
        _matmul_into(M, out, work)
        for i in range(n):
            for l in range(n):
                out[i, l] = work[i, l] * c
            out[i, i] += 1.0
    for _ in range(s):
        _matmul_into(out, out, tmp)
        for i in range(n):
            for l in range(n):
                out[i, l] = tmp[i, l]


@nb.njit(cache=True)
def _expm(M, tol):
    n = M.shape[0]
    out = np.empty((n, n))
    _expm_into(M, tol, out, np.empty((n, n)), np.empty((n, n)))
    return out


@nb.njit(cache=True)
def _log_abs_det(F):
    # LU with partial pivoting; returns (log|det|, smallest |pivot|)
    n = F.shape[0]
    U = F.copy()
    logdet = 0.0
    min_pivot = np.inf
    for c in range(n):
        p = c
        best = abs(U[c, c])
        for r in range(c + 1, n):
            if abs(U[r, c]) > best:
                best = abs(U[r, c])
                p = r
        if best < min_pivot:
            min_pivot = best
        if best < PIVOT_FLOOR:
            return -np.inf, best
        if p != c:
            for j in range(n):
                tmp = U[c, j]
                U[c, j] = U[p, j]
                U[p, j] = tmp
        piv = U[c, c]
        logdet += np.log(abs(piv))
        for r in range(c + 1, n):
            f = U[r, c] / piv
            if f != 0.0:
                for j in range(c, n):
                    U[r, j] -= f * U[c, j]
    return logdet, min_pivot


def gram(F):
    """Gram matrix ``F^T F``, exactly symmetric.

    >>> gram(np.array([[1.0, 1.0], [0.0, 1.0]]))
    array([[1., 1.],
           [1., 2.]])
    """
    return _gram(as_square(F, "F"))


def trace_power(G, p, method="product"):
    """Return ``tr(G^p)`` for a symmetric matrix ``G``.

    Parameters
    ----------
    G : array_like, shape (n, n)
        Symmetric matrix.
    p : int
        Positive integer power.
    method : {"product", "eigen"}
        ``"product"`` forms ``p - 1`` matrix products, ``"eigen"`` sums the
        p-th powers of the eigenvalues.  Both agree to about 1e-10 relative
        on well-conditioned input.
    """
    G = as_square(G, "G")
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    p = int(p)
    if method == "product":
        out = np.empty(p)
        _trace_powers(G, p, out)
        return float(out[-1])
    if method == "eigen":
        w = np.linalg.eigvalsh(0.5 * (G + G.T))
        return float(np.sum(w ** p))
    raise ValueError(f"unknown method {method!r}")


def matrix_exp(M, tol=1e-12):
    """Matrix exponential by scaling and squaring with a truncated Taylor series.

    ``M`` is scaled by ``2**-s`` until its 1-norm is at most 1/2, the series
    is summed until the tail bound drops below ``tol``, and the result is
    squared ``s`` times.  ``matrix_exp(0)`` is the identity exactly.
    """
    M = as_square(M, "M")
    if not 0.0 < tol <= 1e-6:
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol}")
    return _expm(M, tol)


def log_det(F):
    """``ln|det F|`` via LU factorisation with partial pivoting."""
    F = as_square(F, "F")
    value, pivot = _log_abs_det(F)
    if pivot < PIVOT_FLOOR:
        raise SingularMatrixError(f"matrix is singular (pivot {pivot:.3g})")
    return float(value)
