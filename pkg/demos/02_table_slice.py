"""A slice of the average-g table at desk scale.

Four cells, four criteria, 100 replications each (a few seconds on one core).
With m = 4, every criterion lands near 4 at tau = 0 and well below it at tau = 0.9.
"""
from ccekit import montecarlo as mc

cells = [(10, 10, 0.0), (100, 100, 0.0), (100, 100, 0.1), (100, 100, 0.9)]
spec = mc.ExperimentSpec(cells, reps=100, master_seed=7)
rows = mc.aggregate(mc.run_experiment(spec))

labels = [s.label for s in mc.STANDARD_CRITERIA]
print(f"{'N':>4} {'T':>4} {'tau':>4} " + " ".join(f"{l:>7}" for l in labels))
for cell in cells:
    r = {f"{x['criterion']}_{x['penalty']}": x["avg_g"] for x in rows
         if (x["N"], x["T"], x["tau"]) == cell}
    print(f"{cell[0]:4d} {cell[1]:4d} {cell[2]:4.1f} " + " ".join(f"{r[l]:7.2f}" for l in labels))
