"""
The backward equation for the observable
========================================

The observable used to bound the truncated mean solves a constant
coefficient heat equation, so it is a Gaussian average of its terminal
data.  This demo evaluates the solution at the origin, the sup norms of its
derivatives and the integral that controls the error of the chain rule.
"""

import numpy as np

from slgbm.pde import (critical_sigma, derivative_sup, lemma7_bound, phi_bound, solve_backward,
                       terminal_condition)

n = 3
for tau_star in (10.0, 20.0, 40.0):
    term = terminal_condition(critical_sigma(n, tau_star))
    z0 = solve_backward(n, tau_star, term, 0.0, 0.0)
    bound = phi_bound(n, tau_star, term.sigma_star, 0.0, 0.0)
    d1, d2 = derivative_sup(n, tau_star, term, 0.0)
    print(f"tau*={tau_star:4.0f}  zeta(0,0) = {z0:.4f} (Phi bound {bound:.4f})  "
          f"sup|d1| = {d1:.3f}  sup|d2| = {d2:.3f}  integral = {lemma7_bound(n, tau_star, term):.4f}")

# the solution along sigma at tau = 0
term = terminal_condition(critical_sigma(n, 20.0))
sig = np.linspace(-10, 10, 9)
print(np.round([solve_backward(n, 20.0, term, 0.0, s) for s in sig], 4))
