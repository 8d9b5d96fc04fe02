"""Isotropic Brownian increments on the trace-free matrices sl(n).

The symmetric and skew parts are sampled independently::

    S  = (W + W^T) / 2,   S0 = S - (tr S / n) id,   d_sym  = sqrt(n dt / alpha_n) S0
    A  = (W' - W'^T) / 2,                           d_skew = sqrt(dt / (n - 1)) A

with ``W, W'`` i.i.d. standard normal matrices and ``alpha_n = (n-1)(n+2)``.
Entrywise this gives ``Cov(d_sym) = dt [n/alpha_n (dd + dd)/2 - 1/alpha_n d x d]``
and ``Cov(d_skew) = dt (dd - dd) / (2(n-1))``, the unique pair matching the
two quadratic-variation forms below together with ``E[d_sym^2] = dt id/2``
and ``E[d_skew^2] = -dt id/2``.
"""

from dataclasses import dataclass

import numba as nb
import numpy as np

from .rng import RngStream, blocks_for, fill_normals
from .stats import EstimatorSummary

__all__ = [
    "NoiseCoefficients",
    "NoiseIncrement",
    "noise_coefficients",
    "increment_blocks",
    "sample_increment",
    "sample_increments",
    "theoretical_covariation",
    "empirical_covariation",
    "noise_law_checks",
]

KINDS = ("trace_trace", "sandwich")


@dataclass(frozen=True)
class NoiseCoefficients:
    n: int
    alpha_n: float
    c_sym: float
    c_skew: float


@dataclass(frozen=True)
class NoiseIncrement:
    d_sym: np.ndarray
    d_skew: np.ndarray
    dt: float

    @property
    def matrix(self):
        return self.d_sym + self.d_skew


def noise_coefficients(n):
    if int(n) != n or n < 2:
        raise ValueError(f"dimension must be an integer n >= 2, got {n!r}")
    n = int(n)
    alpha = float((n - 1) * (n + 2))
    return NoiseCoefficients(n, alpha, np.sqrt(n / alpha), np.sqrt(1.0 / (n - 1)))


def increment_blocks(n):
    """Philox blocks consumed by one increment (``2 n^2`` normals)."""
    return blocks_for(2 * n * n)


@nb.njit(cache=True)
def build_increment(z, n, a_sym, a_skew, d_sym, d_skew):
    """Form ``d_sym`` and ``d_skew`` in place from ``2 n^2`` normals ``z``.

    ``a_sym`` and ``a_skew`` already include the ``sqrt(dt)`` factor.
    """
    tr = 0.0
    for i in range(n):
        tr += z[i * n + i]
    shift = tr / n
    off = n * n
    for i in range(n):
        d_sym[i, i] = a_sym * (z[i * n + i] - shift)
        d_skew[i, i] = 0.0
        for j in range(i + 1, n):
            s = a_sym * 0.5 * (z[i * n + j] + z[j * n + i])
            d_sym[i, j] = s
            d_sym[j, i] = s
            a = a_skew * 0.5 * (z[off + i * n + j] - z[off + j * n + i])
            d_skew[i, j] = a
            d_skew[j, i] = -a


@nb.njit(cache=True)
def _bulk_increments(seed, stream, counter, n, a_sym, a_skew, count, d_sym, d_skew):
    z = np.empty(2 * n * n)
    bpi = (2 * n * n + 3) // 4
    for m in range(count):
        fill_normals(seed, stream, counter + m * bpi, z)
        build_increment(z, n, a_sym, a_skew, d_sym[m], d_skew[m])


def _check_dt(dt):
    if not np.isfinite(dt) or dt <= 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    return float(dt)


def sample_increment(coeffs, dt, rng):
    """Draw one increment; returns ``(NoiseIncrement, next_stream)``.

    The result depends only on ``rng``'s fields, so re-sampling from the same
    stream value reproduces it.
    """
    dt = _check_dt(dt)
    n = coeffs.n
    z, nxt = rng.normals(2 * n * n)
    d_sym = np.empty((n, n))
    d_skew = np.empty((n, n))
    build_increment(z, n, coeffs.c_sym * np.sqrt(dt), coeffs.c_skew * np.sqrt(dt), d_sym, d_skew)
    return NoiseIncrement(d_sym, d_skew, dt), nxt


def sample_increments(coeffs, dt, rng, count):
    """Draw ``count`` consecutive increments as stacked arrays.

    Returns ``(d_sym, d_skew, next_stream)`` with arrays of shape
    ``(count, n, n)``; row ``m`` equals the m-th call of
    :func:`sample_increment` starting from ``rng``.
    """
    dt = _check_dt(dt)
    n = coeffs.n
    d_sym = np.empty((count, n, n))
    d_skew = np.empty((count, n, n))
    _bulk_increments(rng.master_seed, rng.stream_index, rng.counter, n,
                     coeffs.c_sym * np.sqrt(dt), coeffs.c_skew * np.sqrt(dt),
                     count, d_sym, d_skew)
    return d_sym, d_skew, rng.advance(count * increment_blocks(n))


def _symmetric_pair(G, H, n):
    G = np.asarray(G, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    for name, M in (("G", G), ("H", H)):
        if M.shape != (n, n):
            raise ValueError(f"{name} must have shape {(n, n)}, got {M.shape}")
        scale = max(np.max(np.abs(M)), 1e-300)
        if np.max(np.abs(M - M.T)) > 1e-12 * scale:
            raise ValueError(f"{name} must be symmetric")
    return G, H


def theoretical_covariation(G, H, kind, n):
    """Per-unit-time covariation rate of the symmetric noise part.

    ``trace_trace``: ``d[tr(G B_sym) tr(H B_sym)]/dt = (n tr GH - tr G tr H)/alpha_n``
    ``sandwich``: ``d[tr(G B_sym H B_sym)]/dt = ((n-2) tr GH + n tr G tr H)/(2 alpha_n)``
    """
    coeffs = noise_coefficients(n)
    G, H = _symmetric_pair(G, H, coeffs.n)
    trgh = float(np.sum(G * H))
    trg, trh = float(np.trace(G)), float(np.trace(H))
    if kind == "trace_trace":
        return (n * trgh - trg * trh) / coeffs.alpha_n
    if kind == "sandwich":
        return ((n - 2) * trgh + n * trg * trh) / (2.0 * coeffs.alpha_n)
    raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


N_BATCHES = 100


def _batched(n, dt, n_samples, rng, statistic):
    """Evaluate ``statistic(d_sym, d_skew)`` over contiguous sample batches.

    ``statistic`` maps stacked increments to per-sample values of shape
    ``(m, ...)``.  Returns ``(batch_means, sum, sum_sq, count)`` so callers can
    build batch-means and plain standard errors without holding all samples.
    """
    coeffs = noise_coefficients(n)
    n_batches = min(N_BATCHES, n_samples)
    edges = np.linspace(0, n_samples, n_batches + 1).astype(np.int64)
    means, total, total_sq = [], 0.0, 0.0
    for b in range(n_batches):
        m = int(edges[b + 1] - edges[b])
        d_sym, d_skew, rng = sample_increments(coeffs, dt, rng, m)
        vals = statistic(d_sym, d_skew)
        means.append(vals.mean(axis=0))
        total = total + vals.sum(axis=0)
        total_sq = total_sq + (vals ** 2).sum(axis=0)
    return np.array(means), total, total_sq, n_samples


def _summaries(batch_means, total, total_sq, count):
    mean = total / count
    plain_var = np.maximum(total_sq / count - mean ** 2, 0.0) * count / (count - 1)
    plain_se = np.sqrt(plain_var / count)
    batch_se = batch_means.std(axis=0, ddof=1) / np.sqrt(batch_means.shape[0])
    return mean, batch_se, plain_se


def empirical_covariation(G, H, kind, n, dt, n_samples, rng):
    """Monte Carlo estimate of :func:`theoretical_covariation`.

    Averages ``tr(G d_sym) tr(H d_sym) / dt`` (``trace_trace``) or
    ``tr(G d_sym H d_sym) / dt`` (``sandwich``) over ``n_samples`` increments
    drawn from ``rng``.  Standard errors use batch means over
    ``min(100, n_samples)`` contiguous batches.
    """
    n = noise_coefficients(n).n
    G, H = _symmetric_pair(G, H, n)
    dt = _check_dt(dt)
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")

    def stat(d_sym, _):
        if kind == "trace_trace":
            return np.einsum("ij,mji->m", G, d_sym) * np.einsum("ij,mji->m", H, d_sym) / dt
        return np.einsum("ij,mjk,kl,mli->m", G, d_sym, H, d_sym, optimize=True) / dt

    bm, tot, tot_sq, cnt = _batched(n, dt, n_samples, rng, stat)
    mean, se, plain = _summaries(bm, tot, tot_sq, cnt)
    return EstimatorSummary(
        mean=float(mean), stderr=float(se), n_paths=int(cnt), n_diverged=0,
        plain_stderr=float(plain),
        config={"kind": kind, "n": n, "dt": dt, "n_samples": int(n_samples),
                "master_seed": rng.master_seed, "stream_index": rng.stream_index},
    )


@dataclass(frozen=True)
class LawCheck:
    """One scalar comparison of a Monte Carlo mean against its exact value."""

    name: str
    estimate: float
    stderr: float
    exact: float
    n_sigma: float = 5.0

    @property
    def passed(self):
        # the floor covers laws that hold sample by sample (zero stderr)
        slack = self.n_sigma * self.stderr + 1e-12 * (1.0 + abs(self.exact))
        return abs(self.estimate - self.exact) <= slack


def _test_matrices(n, seed):
    eye = np.eye(n)
    basis = np.zeros((n, n))
    basis[0, 1] = basis[1, 0] = 1.0
    diag = np.zeros((n, n))
    diag[0, 0], diag[1, 1] = 1.0, -1.0
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, n))
    Y = r.standard_normal((n, n))
    return {
        "id,id": (eye, eye),
        "basis,basis": (basis, basis),
        "diag,diag": (diag, diag),
        "rand,rand": (X + X.T, Y + Y.T),
    }


def noise_law_checks(n, n_samples, rng, dt=1.0, n_sigma=5.0):
    """Compare sampled increments with every second-moment law they must obey.

    Covers the zero mean, ``E[dB^T dB] = dt id``, ``E[dB dB] = 0``,
    ``E[d_sym^2] = -E[d_skew^2] = dt id / 2``, independence of the two parts,
    and both covariation forms on a fixed set of test matrices.  Matrix laws
    are checked entrywise.  Returns a list of :class:`LawCheck`.
    """
    n = noise_coefficients(n).n
    pairs = _test_matrices(n, 12345)
    names, exact = [], []

    def add_matrix(label, M):
        for i in range(n):
            for j in range(n):
                names.append(f"{label}[{i},{j}]")
                exact.append(M[i, j])

    zero = np.zeros((n, n))
    add_matrix("E dB", zero)
    add_matrix("E dB^T dB / dt", np.eye(n))
    add_matrix("E dB dB / dt", zero)
    add_matrix("E d_sym^2 / dt", 0.5 * np.eye(n))
    add_matrix("E d_skew^2 / dt", -0.5 * np.eye(n))
    add_matrix("E d_sym[0,1] d_skew / dt", zero)
    names.append("E tr d_sym^2 / dt")
    exact.append(n / 2.0)
    for kind in KINDS:
        for label, (G, H) in pairs.items():
            names.append(f"{kind}({label})")
            exact.append(theoretical_covariation(G, H, kind, n))

    def stat(d_sym, d_skew):
        dB = d_sym + d_skew
        cols = [
            dB.reshape(len(dB), -1),
            (np.einsum("mki,mkj->mij", dB, dB) / dt).reshape(len(dB), -1),
            (dB @ dB / dt).reshape(len(dB), -1),
            (d_sym @ d_sym / dt).reshape(len(dB), -1),
            (d_skew @ d_skew / dt).reshape(len(dB), -1),
            (d_sym[:, 0, 1, None, None] * d_skew / dt).reshape(len(dB), -1),
            (np.einsum("mij,mji->m", d_sym, d_sym) / dt)[:, None],
        ]
        for kind in KINDS:
            for G, H in pairs.values():
                if kind == "trace_trace":
                    v = np.einsum("ij,mji->m", G, d_sym) * np.einsum("ij,mji->m", H, d_sym)
                else:
                    v = np.einsum("ij,mjk,kl,mli->m", G, d_sym, H, d_sym, optimize=True)
                cols.append((v / dt)[:, None])
        return np.concatenate(cols, axis=1)

    bm, tot, tot_sq, cnt = _batched(n, dt, n_samples, rng, stat)
    mean, se, _ = _summaries(bm, tot, tot_sq, cnt)
    return [LawCheck(nm, float(m), float(s), float(e), n_sigma)
            for nm, m, s, e in zip(names, mean, se, exact)]
