"""Backward drift-heat equation for the truncation observable.

The observable ``zeta(tau, sigma)`` solves

    d_tau zeta + a d_sigma zeta + a d_sigma^2 zeta = 0,   a = 2/(n+2),

backwards from terminal data at ``tau_star``.  Its solution is the Gaussian
average

    zeta(tau, sigma) = E[terminal(sigma + a s + sqrt(2 a s) Z)],  s = tau_star - tau.

The terminal data is a quintic smoothstep falling from 1 to 0 on
``[sigma_star, sigma_star + 1]``, so the average splits into a normal CDF
term for the region where the data equals one plus a bounded integral over
the transition, done by composite Gauss-Legendre quadrature.  Derivatives in
``sigma`` are the same averages of the terminal derivatives.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .moments import pair_eigenvalues
from .noise import noise_coefficients

__all__ = [
    "TerminalCondition",
    "BackwardSolution",
    "terminal_condition",
    "phi",
    "solve_backward",
    "derivative_sup",
    "sum_sup",
    "lemma7_bound",
    "phi_bound",
    "critical_sigma",
    "drift_coefficient",
]

_Z_CUT = 12.0  # Phi(-12) ~ 2e-33
_PANEL = 0.5
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(20)


def phi(x):
    """Standard normal CDF via ``erfc``, accurate to ~1e-16 absolute."""
    return 0.5 * special.erfc(-np.asarray(x, dtype=np.float64) / np.sqrt(2.0))


def _smooth(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x))


def _smooth_d1(x):
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 30.0 * x * x * (1.0 - x) ** 2, 0.0)


def _smooth_d2(x):
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x), 0.0)


@dataclass(frozen=True)
class TerminalCondition:
    """``1 - s(sigma - sigma_star)`` with the quintic smoothstep ``s``."""

    sigma_star: float
    profile: str = "quintic_smoothstep"

    def __post_init__(self):
        if not np.isfinite(self.sigma_star):
            raise ValueError(f"sigma_star must be finite, got {self.sigma_star}")
        if self.profile != "quintic_smoothstep":
            raise ValueError(f"unknown profile {self.profile!r}")

    def __call__(self, sigma, derivative=0):
        x = np.asarray(sigma, dtype=np.float64) - self.sigma_star
        if derivative == 0:
            return 1.0 - _smooth(x)
        if derivative == 1:
            return -_smooth_d1(x)
        if derivative == 2:
            return -_smooth_d2(x)
        raise ValueError("derivative must be 0, 1 or 2")


def terminal_condition(sigma_star):
    return TerminalCondition(float(sigma_star))


def drift_coefficient(n):
    """``a = 2/(n+2)``, drift and half the diffusion of the log-normalised norm."""
    return 2.0 / (noise_coefficients(n).n + 2)


def critical_sigma(n, tau_star):
    """Largest ``sigma_star`` for which the normal-CDF bound at the origin equals 1/2."""
    return drift_coefficient(n) * tau_star - 1.0


def phi_bound(n, tau_star, sigma_star, tau, sigma):
    """Comparison bound ``zeta <= Phi((sigma_star + 1 - sigma - a s)/sqrt(2 a s))``."""
    a = drift_coefficient(n)
    s = tau_star - tau
    if s <= 0:
        return np.where(np.asarray(sigma) <= sigma_star + 1, 1.0, 0.0)
    return phi((sigma_star + 1.0 - np.asarray(sigma, dtype=np.float64) - a * s) / np.sqrt(2 * a * s))


def _panel_nodes(za, zb):
    """Gauss-Legendre nodes/weights on ``[za, zb]`` (arrays of equal shape) in panels."""
    width = zb - za
    k = int(max(1, np.ceil(np.max(width) / _PANEL)))
    edges = np.linspace(0.0, 1.0, k + 1)
    t = ((edges[:-1, None] + edges[1:, None]) / 2 + (edges[1:, None] - edges[:-1, None]) / 2 * _NODES).ravel()
    w = (np.repeat(np.diff(edges), _NODES.size) / 2 * np.tile(_WEIGHTS, k))
    z = za[..., None] + width[..., None] * t
    return z, width[..., None] * w


@dataclass(frozen=True)
class BackwardSolution:
    """Evaluator for ``zeta`` and its first two ``sigma`` derivatives."""

    n: int
    tau_star: float
    terminal: TerminalCondition

    def __post_init__(self):
        noise_coefficients(self.n)
        if not np.isfinite(self.tau_star) or self.tau_star < 0:
            raise ValueError(f"tau_star must be finite and >= 0, got {self.tau_star}")

    @property
    def a(self):
        return drift_coefficient(self.n)

    def _check(self, tau):
        if not 0.0 <= tau <= self.tau_star:
            raise ValueError(f"tau={tau} outside [0, tau_star={self.tau_star}]")

    def scale(self, tau):
        """Standard deviation ``sqrt(2 a (tau_star - tau))`` of the kernel."""
        return np.sqrt(2.0 * self.a * (self.tau_star - tau))

    def __call__(self, tau, sigma, derivative=0):
        self._check(tau)
        sigma = np.asarray(sigma, dtype=np.float64)
        s = self.tau_star - tau
        if s == 0:
            return self.terminal(sigma, derivative)
        sd = self.scale(tau)
        shift = sigma + self.a * s - self.terminal.sigma_star
        # x(z) = shift + sd z runs across the transition [0, 1] for z in [za, zb]
        za = np.clip(-shift / sd, -_Z_CUT, _Z_CUT)
        zb = np.clip((1.0 - shift) / sd, -_Z_CUT, _Z_CUT)
        z, w = _panel_nodes(np.atleast_1d(za), np.atleast_1d(zb))
        x = np.atleast_1d(shift)[..., None] + sd * z
        dens = w * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
        if derivative == 0:
            out = phi(za) + np.sum((1.0 - _smooth(x)) * dens, axis=-1)
        elif derivative == 1:
            out = -np.sum(_smooth_d1(x) * dens, axis=-1)
        elif derivative == 2:
            out = -np.sum(_smooth_d2(x) * dens, axis=-1)
        else:
            raise ValueError("derivative must be 0, 1 or 2")
        return out.reshape(sigma.shape) if sigma.ndim else float(out[0])

    def window(self, tau, width=8.0):
        """``sigma`` range where the derivatives are not negligible."""
        s = self.tau_star - tau
        sd = self.scale(tau)
        lo = self.terminal.sigma_star - self.a * s - width * sd
        return lo, lo + 1.0 + 2 * width * sd


def solve_backward(n, tau_star, terminal, tau, sigma_hat):
    """``zeta(tau, sigma_hat)`` for terminal data at ``tau_star``."""
    return BackwardSolution(n, float(tau_star), terminal)(tau, sigma_hat)


def _grid_sup(f, lo, hi, points=2001):
    grid = np.linspace(lo, hi, points)
    vals = np.abs(f(grid))
    k = int(np.argmax(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, points - 1)]
    if b <= a:
        return float(vals[k])
    res = optimize.minimize_scalar(lambda x: -abs(float(f(np.array([x]))[0])), bounds=(a, b),
                                   method="bounded", options={"xatol": 1e-12})
    return max(float(vals[k]), -float(res.fun))


def derivative_sup(n, tau_star, terminal, tau):
    """``(sup |d_sigma zeta|, sup |d_sigma^2 zeta|)`` at time ``tau``."""
    sol = BackwardSolution(n, float(tau_star), terminal)
    sol._check(tau)
    lo, hi = sol.window(tau)
    return (_grid_sup(lambda x: sol(tau, x, 1), lo, hi),
            _grid_sup(lambda x: sol(tau, x, 2), lo, hi))


def sum_sup(n, tau_star, terminal, tau):
    """``sup |d_sigma zeta + d_sigma^2 zeta|`` at time ``tau``."""
    sol = BackwardSolution(n, float(tau_star), terminal)
    sol._check(tau)
    lo, hi = sol.window(tau)
    return _grid_sup(lambda x: sol(tau, x, 1) + sol(tau, x, 2), lo, hi)


def lemma7_bound(n, tau_star, terminal, sup=None):
    """``int_0^tau_star exp(-(1 - lambda_2/2) t) sup(t) dt``.

    ``sup(t)`` defaults to :func:`sum_sup`; pass a callable to substitute
    another profile.  The decay rate ``1 - lambda_2/2`` equals ``1/(n-1)``.
    """
    tau_star = float(tau_star)
    if tau_star < 0:
        raise ValueError(f"tau_star must be >= 0, got {tau_star}")
    if tau_star == 0:
        return 0.0
    rate = 1.0 - pair_eigenvalues(n)[1] / 2.0
    if sup is None:
        def sup(t):
            return sum_sup(n, tau_star, terminal, min(t, tau_star))
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        val, _ = integrate.quad(lambda t: np.exp(-rate * t) * sup(t), 0.0, tau_star,
                                epsabs=1e-10, epsrel=1e-8, limit=200)
    return float(val)
