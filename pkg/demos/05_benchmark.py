"""A small paired benchmark of SC against ESC(1) and ESC(2).

Every method sees the same simulated datasets. The reported metrics are
power, exact discovery, FDR and type-I error. Run with
``python demos/05_benchmark.py``; expect a few minutes.
"""
from gxgscreen import benchmark_csv, run_benchmark

cells = run_benchmark(models=["M1", "M3"], betas=[0.0, 1.0], methods=["SC", "ESC(1)", "ESC(2)"],
                      replicates=5, n=400, p=50, base_seed=5)
print(f"{'model':<6}{'beta':>5}  {'method':<8}{'power':>7}{'exact':>7}{'FDR':>7}{'type1':>7}")
for c in cells:
    r = c.report
    print(f"{c.model:<6}{c.beta:>5g}  {c.method:<8}"
          f"{r.power:>7.2f}{r.exact_discovery:>7.2f}{r.fdr:>7.2f}{r.type1:>7.2f}")
print()
print(benchmark_csv(cells))
