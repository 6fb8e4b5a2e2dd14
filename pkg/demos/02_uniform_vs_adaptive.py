"""Risk gap between uniform and adaptive sampling on the eps family.

Arm 1 is uniform over 10 symbols and arm 2 puts mass eps on one symbol. The
gap is near zero when eps = 0.1 (identical arms) and grows with eps for the
l2 and l1 distances.

    python demos/02_uniform_vs_adaptive.py
"""

from alloctrack import EpsFamily, RngStream, table1_gaps

recs = table1_gaps(EpsFamily(), distances=("l2", "l1"), n=500, eps_list=(0.1, 0.5, 0.9), reps=500,
                   rng=RngStream(1))
print(f"{'dist':>5} {'eps':>4} {'uniform':>10} {'adaptive':>10} {'gap':>10} {'stderr':>9}")
for r in recs:
    print(f"{r.distance:>5} {r.epsilon:>4.1f} {r.uniform_risk:>10.5f} {r.adaptive_risk:>10.5f} "
          f"{r.gap:>10.2e} {r.stderr:>9.1e}")
