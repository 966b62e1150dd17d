"""The split-data pipeline: main-effect Lasso, screening of the expanded set, then cleaning.

Compares ESC(1) with the single-Lasso SC baseline on one M2 dataset. Run with
``python demos/04_esc_pipeline.py``.
"""
from gxgscreen import EscConfig, SimSpec, run_esc, simulate

G, Y, truth = simulate(SimSpec(n=400, p=100, model="M2", beta=1.0, seed=4))
print("true effects:", sorted(t.label for t in truth.m0))

for name in ("SC", "ESC(1)"):
    res = run_esc(Y, G.values, EscConfig.for_method(name, seed=4))
    tr = res.stage_trace
    print(f"\n{name}: {tr['G']} loci from step 1, |E|={tr['expanded']}, |S|={tr['S']}, |M|={tr['M']}")
    print(res.table(), end="")
    found = res.effects & truth.m0
    print(f"true effects found {len(found)}/{len(truth.m0)}, false {len(res.effects - truth.m0)}")
