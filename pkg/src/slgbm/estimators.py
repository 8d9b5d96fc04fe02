"""Monte Carlo functionals of simulated ensembles.

Every estimator here consumes an :class:`~slgbm.integrators.Ensemble` (or
builds one) and reduces per-path samples in path order with the fixed
pairwise tree of :mod:`slgbm.stats`, so results are bitwise reproducible for
a fixed seed whatever the worker count.
"""

from dataclasses import dataclass

import numpy as np

from .integrators import TrajectoryConfig, simulate
from .moments import MomentRangeError, partitions
from .noise import noise_coefficients
from .pde import BackwardSolution, critical_sigma, lemma7_bound, phi, terminal_condition
from .stats import N_BATCHES, EstimatorSummary, pairwise_sum, summarize

__all__ = [
    "LogNormalReference",
    "LogNormalDiagnostics",
    "NontightnessResult",
    "ChainCheck",
    "WeakOrderResult",
    "monomial_samples",
    "estimate_trace_moments",
    "normalized_norm",
    "nontightness_threshold",
    "nontightness_from_ensemble",
    "nontightness_functional",
    "lognormal_from_ensemble",
    "lognormal_diagnostics",
    "heavy_tail_share",
    "chain_from_ensemble",
    "weak_order",
]

MIN_PATHS = 100
MAX_TAU_STAR = 690.0


def monomial_samples(trace_powers, lam):
    """Per-path ``prod_i tr G^{p_i}`` from an array ``(..., p_max)`` of trace powers."""
    out = np.ones(trace_powers.shape[:-1])
    for part in lam:
        out = out * trace_powers[..., part - 1]
    return out


def _valid(ens):
    return ~ens.diverged


def estimate_trace_moments(config, n_paths, workers=None):
    """Means of every trace monomial of degree ``<= p_max`` at every checkpoint.

    Returns a dict keyed by ``(checkpoint_time, partition)``.
    """
    if n_paths < MIN_PATHS:
        raise ValueError(f"n_paths must be >= {MIN_PATHS}, got {n_paths}")
    ens = simulate(config, n_paths, workers)
    return moments_from_ensemble(ens)


def moments_from_ensemble(ens):
    ok = _valid(ens)
    echo = dict(ens.config.echo(), n_paths=ens.n_paths)
    out = {}
    for c, t in enumerate(ens.times):
        tp = ens.trace_powers[ok, c, :]
        for p in range(1, ens.config.p_max + 1):
            for lam in partitions(p):
                out[(float(t), lam)] = summarize(monomial_samples(tp, lam), ens.n_diverged, echo)
    return out


def normalized_norm(ens, checkpoint=-1):
    """``R = |F|^2 / (n e^tau)`` per non-diverged path; its mean is one."""
    tau = float(ens.times[checkpoint])
    if tau > MAX_TAU_STAR:
        raise MomentRangeError(f"n e^tau overflows for tau={tau}; maximal admissible tau is {MAX_TAU_STAR}")
    return ens.trace_powers[_valid(ens), checkpoint, 0] / (ens.config.n * np.exp(tau))


def nontightness_threshold(n, tau_star):
    """``R* = exp(2 tau_star/(n+2) - 1)``."""
    return float(np.exp(critical_sigma(n, tau_star)))


@dataclass(frozen=True)
class NontightnessResult:
    summary: EstimatorSummary
    threshold: float
    max_sample: float

    @property
    def mean(self):
        return self.summary.mean

    @property
    def stderr(self):
        return self.summary.stderr


def nontightness_from_ensemble(ens, checkpoint=-1):
    """Mean of ``R I(R <= R*)`` at the given checkpoint."""
    n = ens.config.n
    tau = float(ens.times[checkpoint])
    r = normalized_norm(ens, checkpoint)
    thr = nontightness_threshold(n, tau)
    x = np.where(r <= thr, r, 0.0)
    echo = dict(ens.config.echo(), tau_star=tau, threshold=thr, n_paths=ens.n_paths)
    return NontightnessResult(summarize(x, ens.n_diverged, echo), thr,
                              float(x.max()) if x.size else float("nan"))


def nontightness_functional(n, tau_star, n_paths, dt, seed, scheme="exponential", workers=None,
                            noise_scale=1.0):
    """Simulate to ``tau_star`` and estimate ``E[R I(R <= R*)]``."""
    if tau_star < 1:
        raise ValueError(f"tau_star must be >= 1, got {tau_star}")
    if tau_star > MAX_TAU_STAR:
        raise MomentRangeError(f"n e^tau overflows for tau={tau_star}; maximal admissible tau is {MAX_TAU_STAR}")
    cfg = TrajectoryConfig(n, float(tau_star), dt, scheme=scheme, p_max=1, master_seed=seed,
                           noise_scale=noise_scale)
    return nontightness_from_ensemble(simulate(cfg, n_paths, workers))


@dataclass(frozen=True)
class LogNormalReference:
    """Gaussian model for ``ln|F|^2``: mean ``(1 - 2/(n+2)) tau``, variance ``4 tau/(n+2)``."""

    n: int
    tau: float

    @property
    def mu_ref(self):
        return (1.0 - 2.0 / (self.n + 2)) * self.tau

    @property
    def var_ref(self):
        return 4.0 * self.tau / (self.n + 2)

    @property
    def functional_ref(self):
        """``Phi(-1/sqrt(var_ref))``: the truncated mean when ``R`` is exactly log-normal."""
        return float(phi(-1.0 / np.sqrt(self.var_ref)))


@dataclass(frozen=True)
class LogNormalDiagnostics:
    n: int
    tau: float
    emp_mean: float
    emp_var: float
    mean_stderr: float
    var_stderr: float
    mu_ref: float
    var_ref: float
    n_paths: int
    n_diverged: int

    @property
    def mean_gap(self):
        return self.emp_mean - self.mu_ref

    @property
    def var_gap(self):
        return self.emp_var - self.var_ref


def _variance_summary(x, n_batches=N_BATCHES):
    m = x.shape[0]
    mean = pairwise_sum(x) / m
    var = pairwise_sum((x - mean) ** 2) / (m - 1)
    nb = min(n_batches, m // 2)
    if nb < 2:
        return float(var), float("nan")
    bvars = np.array([np.var(b, ddof=1) for b in np.array_split(x, nb)])
    return float(var), float(np.std(bvars, ddof=1) / np.sqrt(nb))


def lognormal_from_ensemble(ens, checkpoint=-1):
    tau = float(ens.times[checkpoint])
    x = np.log(ens.trace_powers[_valid(ens), checkpoint, 0])
    s = summarize(x, ens.n_diverged)
    var, var_se = _variance_summary(x)
    ref = LogNormalReference(ens.config.n, tau)
    return LogNormalDiagnostics(ens.config.n, tau, s.mean, var, s.stderr, var_se,
                                ref.mu_ref, ref.var_ref, s.n_paths, ens.n_diverged)


def lognormal_diagnostics(n, tau, n_paths, dt, seed, workers=None):
    """Sample mean and variance of ``ln|F_tau|^2`` next to the Gaussian reference.

    At ``tau = 0`` every path equals ``id``, so the values are ``ln n`` and 0.
    """
    n = noise_coefficients(n).n
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if tau == 0:
        return LogNormalDiagnostics(n, 0.0, float(np.log(n)), 0.0, 0.0, 0.0, 0.0, 0.0, int(n_paths), 0)
    cfg = TrajectoryConfig(n, float(tau), dt, p_max=1, master_seed=seed)
    return lognormal_from_ensemble(simulate(cfg, n_paths, workers))


def heavy_tail_share(samples, top=0.01):
    """Fraction of ``sum x^2`` carried by the largest ``top`` fraction of ``x``."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    k = max(1, int(round(top * x.size)))
    sq = x * x
    return float(pairwise_sum(sq[-k:]) / pairwise_sum(sq))


@dataclass(frozen=True)
class ChainCheck:
    """``E[R zeta(tau*, ln R)] - zeta(0, 0)`` against the integral bound."""

    n: int
    tau_star: float
    lhs: EstimatorSummary
    zeta0: float
    bound: float

    @property
    def excess(self):
        return self.lhs.mean - self.zeta0

    @property
    def required_constant(self):
        """Smallest ``K`` with ``excess <= K bound + 3 stderr`` (0 if none is needed)."""
        return max(0.0, (self.excess - 3.0 * self.lhs.stderr) / self.bound)


def chain_from_ensemble(ens, checkpoint=-1):
    n = ens.config.n
    tau_star = float(ens.times[checkpoint])
    terminal = terminal_condition(critical_sigma(n, tau_star))
    r = normalized_norm(ens, checkpoint)
    lhs = summarize(r * terminal(np.log(r)), ens.n_diverged)
    zeta0 = BackwardSolution(n, tau_star, terminal)(0.0, 0.0)
    return ChainCheck(n, tau_star, lhs, float(zeta0), lemma7_bound(n, tau_star, terminal))


@dataclass(frozen=True)
class WeakOrderResult:
    scheme: str
    dts: tuple
    biases: np.ndarray
    stderrs: np.ndarray
    slope: float
    slope_stderr: float


def weak_order(n, tau_end, dts, n_paths, seed, scheme="exponential", workers=None):
    """Fit the weak order from the bias of ``E tr G`` at ``tau_end``.

    Each path carries a martingale control variate (see
    :func:`~slgbm.integrators.simulate`) that removes the statistical noise
    of ``tr G`` but not the discretisation bias, so the bias ``E tr G - n e^tau``
    is resolved at a few thousand paths.  The slope is a weighted least-squares
    fit of ``ln|bias|`` against ``ln dt``.
    """
    exact = n * np.exp(tau_end)
    biases, ses = [], []
    for dt in dts:
        cfg = TrajectoryConfig(n, float(tau_end), float(dt), scheme=scheme, p_max=1, master_seed=seed)
        ens = simulate(cfg, n_paths, workers, control_variate=True)
        s = summarize(ens.control[_valid(ens)], ens.n_diverged)
        biases.append(s.mean - exact)
        ses.append(s.stderr)
    b, se = np.array(biases), np.array(ses)
    x = np.log(np.asarray(dts, dtype=np.float64))
    y = np.log(np.abs(b))
    sy = np.maximum(se / np.abs(b), 1e-12)
    w = 1.0 / sy ** 2
    xm = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * y) / sxx)
    return WeakOrderResult(scheme, tuple(dts), b, se, slope, float(1.0 / np.sqrt(sxx)))
