"""Regret of adaptive l2 sampling against the oracle, and its log-log slope.

Takes about a minute.

    python demos/03_regret_rates.py
"""

from alloctrack import ProblemInstance, RngStream
from alloctrack.harness import loglog_slope, regret_rates

inst = ProblemInstance([[0.5, 0.5], [0.9, 0.1]])
n_list = (500, 1000, 2000, 4000)
recs = regret_rates(inst, "l2", n_list, reps=1000, rng=RngStream(3))
for r in recs:
    print(f"n={r.n:>5}  adaptive {r.scheme_risk:.3e}  oracle {r.oracle_risk:.3e}  "
          f"regret {r.regret:.2e} +/- {r.stderr:.1e}")
print("slope:", round(loglog_slope(n_list, [r.regret for r in recs]), 3))
