"""Time stepping for ``dF = F o dB`` on SL(n), started at ``F = id``.

Two schemes are offered:

* ``euler``: ``F <- F (id + dB)``, the Ito-Euler step (Ito and Stratonovich
  forms coincide because ``E[dB dB] = 0``);
* ``exponential`` (default): ``F <- F exp(dB)``, which keeps ``det F = 1`` up
  to the matrix-exponential tolerance since ``tr dB = 0``.

Path ``i`` of an ensemble draws its increments from the stream
``(master_seed, stream_index + i)``; increment ``k`` starts at block
``k * increment_blocks(n)``.  Results are therefore independent of the number
of worker threads.
"""

import os
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .linalg import _expm_into, _gram, _log_abs_det, _matmul_into, _trace_powers, as_square, matrix_exp
from .noise import NoiseIncrement, build_increment, increment_blocks, noise_coefficients
from .rng import fill_normals

__all__ = [
    "SCHEMES",
    "DIVERGENCE_THRESHOLD",
    "TrajectoryConfig",
    "GramSummary",
    "TrajectoryRecord",
    "Ensemble",
    "step_euler",
    "step_exponential",
    "run_trajectory",
    "simulate",
    "set_workers",
]

SCHEMES = ("euler", "exponential")
DIVERGENCE_THRESHOLD = 1e300
DEFAULT_EXPM_TOL = 1e-12
MAX_P = 8
MAX_STEPS = 10 ** 8

# results never depend on the threading layer; prefer ones that need no extra runtime
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@dataclass(frozen=True)
class TrajectoryConfig:
    """Parameters of one simulated path (or of every path in an ensemble).

    ``checkpoints`` defaults to ``(tau_end,)``; each checkpoint is snapped to
    the nearest step boundary.  ``noise_scale`` multiplies every increment
    and exists so tests can run deterministic zero-noise paths.
    """

    n: int
    tau_end: float
    dt: float
    scheme: str = "exponential"
    p_max: int = 2
    checkpoints: tuple = None
    master_seed: int = 0
    stream_index: int = 0
    noise_scale: float = 1.0
    expm_tol: float = DEFAULT_EXPM_TOL

    def __post_init__(self):
        noise_coefficients(self.n)
        if not np.isfinite(self.tau_end) or self.tau_end <= 0:
            raise ValueError(f"empty horizon: tau_end must be positive, got {self.tau_end}")
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.p_max) != self.p_max or not 1 <= self.p_max <= MAX_P:
            raise ValueError(f"p_max must be an integer in 1..{MAX_P}, got {self.p_max}")
        if self.tau_end / self.dt > MAX_STEPS:
            raise ValueError(f"tau_end/dt exceeds {MAX_STEPS:.0e} steps")
        cps = (self.tau_end,) if self.checkpoints is None else tuple(float(c) for c in self.checkpoints)
        object.__setattr__(self, "checkpoints", cps)
        if not cps:
            raise ValueError("at least one checkpoint is required")
        if any(c < 0 or c > self.tau_end * (1 + 1e-12) for c in cps):
            raise ValueError("checkpoints must lie in [0, tau_end]")
        steps = self.checkpoint_steps
        if np.any(np.diff(steps) <= 0):
            raise ValueError("checkpoints must be strictly increasing and at least dt apart")

    @property
    def n_steps(self):
        return max(1, int(round(self.tau_end / self.dt)))

    @property
    def checkpoint_steps(self):
        return np.array([int(round(c / self.dt)) for c in self.checkpoints], dtype=np.int64)

    @property
    def checkpoint_times(self):
        return self.checkpoint_steps * self.dt

    @property
    def snap_error(self):
        """Largest distance between a requested checkpoint and its step time."""
        return float(np.max(np.abs(self.checkpoint_times - np.array(self.checkpoints))))

    def echo(self):
        return {
            "n": self.n, "tau_end": self.tau_end, "dt": self.dt, "scheme": self.scheme,
            "p_max": self.p_max, "checkpoints": list(self.checkpoints),
            "master_seed": self.master_seed, "stream_index": self.stream_index,
            "noise_scale": self.noise_scale, "expm_tol": self.expm_tol,
        }


@dataclass(frozen=True)
class GramSummary:
    trace_powers: tuple
    log_det: float
    tau: float

    @property
    def trace(self):
        return self.trace_powers[0]


@dataclass(frozen=True)
class TrajectoryRecord:
    summaries: list
    final_log_det: float
    diverged: bool
    config: TrajectoryConfig
    snap_error: float = 0.0


@dataclass
class Ensemble:
    """Raw per-path output of :func:`simulate`.

    ``trace_powers[i, c, k]`` is ``tr G^{k+1}`` of path ``i`` at checkpoint
    ``c``; rows of diverged paths are NaN.  ``control`` holds the martingale
    control-variate estimate of ``tr G`` at ``tau_end`` when requested.
    """

    config: TrajectoryConfig
    times: np.ndarray
    trace_powers: np.ndarray
    log_det: np.ndarray
    diverged: np.ndarray
    control: np.ndarray = field(default=None)

    @property
    def n_paths(self):
        return self.diverged.shape[0]

    @property
    def n_diverged(self):
        return int(self.diverged.sum())


def step_euler(F, dB):
    """One Euler step ``F + F dB``."""
    F = as_square(F, "F")
    return F + F @ _increment_matrix(dB, F.shape[0])


def step_exponential(F, dB, tol=DEFAULT_EXPM_TOL):
    """One group-preserving step ``F exp(dB)``."""
    F = as_square(F, "F")
    return F @ matrix_exp(_increment_matrix(dB, F.shape[0]), tol)


def _increment_matrix(dB, n):
    M = dB.matrix if isinstance(dB, NoiseIncrement) else np.asarray(dB, dtype=np.float64)
    if M.shape != (n, n):
        raise ValueError(f"increment shape {M.shape} does not match F ({n}, {n})")
    return M


def is_diverged(F):
    return not np.all(np.isfinite(F)) or np.max(np.abs(F)) > DIVERGENCE_THRESHOLD


@nb.njit(cache=True)
def _record(F, p_max, tp_out, ld_out):
    G = _gram(F)
    _trace_powers(G, p_max, tp_out)
    ld, _ = _log_abs_det(F)
    ld_out[0] = ld


@nb.njit(cache=True)
def _run_path(n, seed, stream, n_steps, dt, exponential, tol, a_sym, a_skew,
              ckpt_steps, p_max, want_cv, tp, ld):
    """Integrate one path; returns ``(diverged, control)``."""
    bpi = (2 * n * n + 3) // 4
    n_ck = ckpt_steps.shape[0]
    z = np.empty(2 * n * n)
    d_sym = np.empty((n, n))
    d_skew = np.empty((n, n))
    dB = np.empty((n, n))
    E = np.empty((n, n))
    work1 = np.empty((n, n))
    work2 = np.empty((n, n))
    F = np.eye(n)
    # E[dB dB^T] = (a_sym^2 alpha_n/(2n) + a_skew^2 (n-1)/2) id
    alpha = (n - 1.0) * (n + 2.0)
    growth = 1.0 + a_sym * a_sym * alpha / (2.0 * n) + a_skew * a_skew * (n - 1.0) / 2.0
    acc = 0.0
    c = 0
    while c < n_ck and ckpt_steps[c] == 0:
        _record(F, p_max, tp[c], ld[c:c + 1])
        c += 1
    for k in range(n_steps):
        fill_normals(seed, stream, k * bpi, z)
        build_increment(z, n, a_sym, a_skew, d_sym, d_skew)
        for i in range(n):
            for j in range(n):
                dB[i, j] = d_sym[i, j] + d_skew[i, j]
        if want_cv:
            G = _gram(F)
            trg = 0.0
            lin = 0.0
            quad = 0.0
            for i in range(n):
                trg += G[i, i]
                for j in range(n):
                    lin += G[i, j] * dB[j, i]
            for col in range(n):
                for i in range(n):
                    gi = 0.0
                    for j in range(n):
                        gi += G[i, j] * dB[j, col]
                    quad += dB[i, col] * gi
            if exponential:
                # tr(G dB^2): second-order part of exp(dB), mean zero since E[dB dB] = 0
                _matmul_into(dB, dB, work1)
                for i in range(n):
                    for j in range(n):
                        quad += G[i, j] * work1[j, i]
            acc = acc * growth + (2.0 * lin + quad + trg - growth * trg)
        if exponential:
            _expm_into(dB, tol, E, work1, work2)
            _matmul_into(F, E, work1)
            for i in range(n):
                for j in range(n):
                    F[i, j] = work1[i, j]
        else:
            _matmul_into(F, dB, work1)
            for i in range(n):
                for j in range(n):
                    F[i, j] += work1[i, j]
        big = 0.0
        for i in range(n):
            for j in range(n):
                v = abs(F[i, j])
                if not v <= big:
                    big = v
        if not big <= DIVERGENCE_THRESHOLD:
            for cc in range(c, n_ck):
                tp[cc, :] = np.nan
                ld[cc] = np.nan
            return True, np.nan
        while c < n_ck and ckpt_steps[c] == k + 1:
            _record(F, p_max, tp[c], ld[c:c + 1])
            c += 1
    control = np.nan
    if want_cv:
        trg = 0.0
        for i in range(n):
            for j in range(n):
                trg += F[i, j] * F[i, j]
        control = trg - acc
    return False, control


@nb.njit(parallel=True, cache=True)
def _run_ensemble(n, seed, stream0, n_paths, n_steps, dt, exponential, tol, a_sym, a_skew,
                  ckpt_steps, p_max, want_cv, tp, ld, div, cv):
    for i in nb.prange(n_paths):
        d, ctl = _run_path(n, seed, stream0 + i, n_steps, dt, exponential, tol, a_sym, a_skew,
                           ckpt_steps, p_max, want_cv, tp[i], ld[i])
        div[i] = d
        cv[i] = ctl


def set_workers(workers=None):
    """Set the numba thread count, capped by ``SLN_GBM_THREADS`` and the pool size."""
    cap = nb.config.NUMBA_NUM_THREADS
    env = os.environ.get("SLN_GBM_THREADS")
    if env:
        cap = min(cap, max(1, int(env)))
    k = cap if workers is None else max(1, min(int(workers), cap))
    nb.set_num_threads(k)
    return k


def simulate(config, n_paths, workers=None, control_variate=False):
    """Integrate ``n_paths`` independent paths; path ``i`` uses stream ``stream_index + i``."""
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValueError(f"n_paths must be a positive integer, got {n_paths}")
    n_paths = int(n_paths)
    coeffs = noise_coefficients(config.n)
    ck = config.checkpoint_steps
    n, p_max = config.n, config.p_max
    tp = np.empty((n_paths, len(ck), p_max))
    ld = np.empty((n_paths, len(ck)))
    div = np.zeros(n_paths, dtype=np.bool_)
    cv = np.empty(n_paths)
    sq = np.sqrt(config.dt) * config.noise_scale
    set_workers(workers)
    _run_ensemble(n, config.master_seed, config.stream_index, n_paths, config.n_steps,
                  config.dt, config.scheme == "exponential", config.expm_tol,
                  coeffs.c_sym * sq, coeffs.c_skew * sq, ck, p_max, control_variate,
                  tp, ld, div, cv)
    return Ensemble(config, config.checkpoint_times, tp, ld, div,
                    cv if control_variate else None)


def run_trajectory(config):
    """Integrate the single path ``(master_seed, stream_index)`` of ``config``."""
    ens = simulate(config, 1, workers=1)
    summaries = [
        GramSummary(tuple(float(v) for v in ens.trace_powers[0, c]), float(ens.log_det[0, c]), float(t))
        for c, t in enumerate(ens.times)
    ]
    return TrajectoryRecord(summaries, float(ens.log_det[0, -1]), bool(ens.diverged[0]),
                            config, config.snap_error)
