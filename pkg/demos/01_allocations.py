"""Oracle allocations and one adaptive run on two Bernoulli arms.

    python demos/01_allocations.py
"""

import numpy as np

from alloctrack import DiscreteDistribution, RngStream, approx_oracle, objective, optimistic_tracking
from alloctrack.objectives import c_for

arms = [DiscreteDistribution.bernoulli(0.5), DiscreteDistribution.bernoulli(0.9)]
n = 2000

# The oracle equalizes phi(c_i, T_i) across arms; harder arms (larger c) get more samples.
for kind in ("l2", "l1", "kl", "sep"):
    alloc = approx_oracle(kind, arms, n)
    cs = [c_for(kind, P) for P in arms]
    print(f"{kind:>4}: c = {np.round(cs, 4)}  oracle T = {np.round(alloc.counts, 1)}")

# Optimistic tracking does not know c and replaces it by an upper confidence bound.
traj = optimistic_tracking(arms, objective("l2"), "l2", n, delta=1.0 / n, rng=RngStream(0))
print("adaptive l2 pulls:", traj.pulls)
print("first rounds:", [r.arm for r in traj.records[:10]])
