"""SLR-screening: a low-rank Wald filter followed by a CV Lasso on the survivors.

Run with ``python demos/03_screening.py``.
"""
from gxgscreen import ScreenConfig, SimSpec, simulate, slr_screen

# M3: the first six loci interact with strength 0.9^|j-k|.
G, Y, truth = simulate(SimSpec(n=400, p=20, model="M3", beta=0.8, seed=3))
sel = slr_screen(Y, G.values, ScreenConfig(seed=3))

lr = sel.parent
print(f"low-rank stage kept {len(lr.effects)} of {20 + 190} effects")
print(f"lasso stage kept {len(sel.effects)}: {sel.labels}")
hits = sel.effects & truth.m0
print(f"true pairs recovered: {len(hits)} of {len(truth.m0)}")

# Screening on a subset of loci reports terms under their original numbers.
sub = slr_screen(Y, G.values, ScreenConfig(seed=3), loci=[1, 2, 3, 4, 5, 6, 11, 12])
print("restricted to eight loci:", sub.labels)
print(sub.to_csv())
