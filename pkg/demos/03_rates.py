"""Empirical convergence rates as log-log slopes in T.

prop1_under tracks how fast the objective gap of an under-specified subset
grows (about T^tau). corA1 tracks ||F'Ebar|| / T^(1+tau) with uncorrelated
errors (about T^-(1+tau)/2). Small reps keep this to a minute or so.
"""
from ccekit import montecarlo as mc

for stat, tau in [("prop1_under", 0.0), ("prop1_under", 0.5), ("prop1_under", 0.9),
                  ("corA1", 0.5), ("lemA1", 0.5)]:
    r = mc.rate_check(stat, tau, N_fixed=200, T_grid=(100, 200, 400, 800), reps=30, seed=1)
    meds = " ".join(f"{m:.3g}" for m in r.medians)
    print(f"{stat:12s} tau={tau:.1f}  medians [{meds}]  slope {r.fitted_slope:+.3f}"
          f"  (theory {r.theoretical_slope:+.3f})")
