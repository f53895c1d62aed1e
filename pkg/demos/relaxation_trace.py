"""
Mirror descent on the relaxation
================================

Compare the step rules on one pool and look at the iteration trace.
"""

import numpy as np

from expdesign.criteria import Criterion
from expdesign.relaxation import MdConfig, smoothed_objective, solve_relaxation

rng = np.random.default_rng(0)
X = rng.standard_normal((50, 5))
k, lam = 10, 0.05
A = Criterion("A")

for mode, T in [("line_search", 100), ("sqrt_decay", 1000), ("sqrt_decay", 10000)]:
    pi, trace = solve_relaxation(A, X, k, 1, MdConfig(step_mode=mode, iterations=T,
                                                      smoothing_lambda=lam))
    val = smoothed_objective(A, X, pi.weights / k, k, 1, lam)
    print(f"{mode:12s} T={T:6d}  smoothed value {val:.7f}")

# line search returns its last iterate, whose value decreases monotonically
pi, trace = solve_relaxation(A, X, k, 1, MdConfig(step_mode="line_search", iterations=30,
                                                  smoothing_lambda=lam))
print(trace.to_csv().splitlines()[:6])

# weights sit in [0, b] and sum to k
print(pi.weights.min(), pi.weights.max(), pi.weights.sum())
