"""Order-fixed reductions and Monte Carlo summaries."""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["EstimatorSummary", "pairwise_sum", "summarize", "DIVERGENCE_BUDGET"]

# maximal tolerated fraction of diverged paths
DIVERGENCE_BUDGET = 1e-4
N_BATCHES = 100


def pairwise_sum(x, axis=0):
    """Sum along ``axis`` with a fixed balanced binary tree.

    The array is zero-padded to a power of two and halved repeatedly, so the
    rounding pattern depends only on the element order, never on how the
    samples were produced.
    """
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    m = x.shape[0]
    if m == 0:
        return np.zeros(x.shape[1:])
    size = 1 << (m - 1).bit_length()
    if size != m:
        pad = np.zeros((size - m,) + x.shape[1:])
        x = np.concatenate([x, pad], axis=0)
    while x.shape[0] > 1:
        x = x[0::2] + x[1::2]
    return x[0]


@dataclass(frozen=True)
class EstimatorSummary:
    """Monte Carlo mean with batch-means and plain standard errors."""

    mean: float
    stderr: float
    n_paths: int
    n_diverged: int = 0
    plain_stderr: float = float("nan")
    config: dict = field(default_factory=dict)

    @property
    def failed(self):
        return self.n_paths == 0 or self.n_diverged > DIVERGENCE_BUDGET * self.n_paths

    def within(self, value, k=3.0):
        return abs(self.mean - value) <= k * self.stderr


def summarize(samples, n_diverged=0, config=None, n_batches=N_BATCHES):
    """Summarise per-path samples (diverged paths already removed).

    ``samples`` may carry trailing axes; each trailing entry is summarised
    independently and the fields become arrays.  Batches are contiguous
    slices in path order.
    """
    x = np.asarray(samples, dtype=np.float64)
    m = x.shape[0]
    config = dict(config or {})
    if m == 0:
        nan = np.full(x.shape[1:], np.nan)
        return EstimatorSummary(_scalar(nan), _scalar(nan), 0, n_diverged, _scalar(nan), config)
    mean = pairwise_sum(x) / m
    if m > 1:
        dev = pairwise_sum((x - mean) ** 2) / (m - 1)
        plain = np.sqrt(dev / m)
    else:
        plain = np.zeros(x.shape[1:])
    nb = min(n_batches, m)
    if nb >= 2:
        bmeans = np.stack([pairwise_sum(b) / b.shape[0] for b in np.array_split(x, nb)])
        bmean = pairwise_sum(bmeans) / nb
        stderr = np.sqrt(pairwise_sum((bmeans - bmean) ** 2) / (nb - 1) / nb)
    else:
        stderr = plain
    return EstimatorSummary(_scalar(mean), _scalar(stderr), int(m), int(n_diverged),
                            _scalar(plain), config)


def _scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a
