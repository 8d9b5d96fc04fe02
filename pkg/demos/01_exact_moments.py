"""
Exact trace moments
===================

The expected trace monomials of the Gram matrix G = F^T F solve a closed
linear ODE indexed by integer partitions.  This demo prints the degree-two
system, compares it with its closed form, and shows how the moments of tr G
sit between the two exponential bounds.
"""

import numpy as np

from slgbm.moments import (exact_moments, generator_matrix, moment_bounds, pair_closed_form,
                           pair_eigenvalues)

# the degree-two generator acts on (tr^2 G, tr G^2)
n = 3
gen = generator_matrix(n, 2)
print("basis:", gen.basis)
print(gen.entries)
print("eigenvalues:", pair_eigenvalues(n))

# the matrix exponential and the closed form agree to rounding
for tau in (0.0, 1.0, 5.0):
    t = exact_moments(n, 2, tau)
    print(f"tau={tau:4.1f}  engine {t[(1, 1)]:.6f} {t[(2,)]:.6f}  closed form",
          " ".join(f"{v:.6f}" for v in pair_closed_form(n, tau)))

# higher degrees grow like exp(r tau) with r = p + 2p(p-1)/(n+2)
for p in range(1, 5):
    t = exact_moments(n, p, 5.0)
    lo, hi = moment_bounds(n, p, 5.0)
    print(f"p={p}  {lo:.4e} <= E tr G^p = {t[(p,)]:.4e}, E tr^p G = {t[(1,) * p]:.4e} <= {hi:.4e}")

# the log-moments are convex in p, which is the intermittency
print("log E tr^p G at tau=5:", np.round([np.log(exact_moments(n, p, 5.0)[(1,) * p]) for p in range(1, 6)], 3))
