"""Fitting the rank-1 interaction model and reading off Wald statistics.

A rank-1 interaction matrix ``eta = alpha alpha^T`` lets all p(p-1)/2 pair
coefficients be estimated from p parameters. Run with
``python demos/02_lowrank_fit.py``.
"""
import numpy as np

from gxgscreen import SimSpec, cv_lambda_ell, fit_lowrank, gen_genotypes
from gxgscreen.theta import LowRankTheta

p, n = 10, 600
G = gen_genotypes(SimSpec(n=n, p=p, seed=2)).values
truth = LowRankTheta.rank1(0.3, np.zeros(p), [0.8, 0.6, -0.5, 0, 0, 0, 0, 0, 0, 0], 1)
Y = truth.predict(G) + np.random.default_rng(2).normal(size=n)

lam = cv_lambda_ell(Y, G, rank=1, seed=2)
fit = fit_lowrank(Y, G, rank=1, lambda_ell=lam)
print(f"lambda_ell chosen by CV: {lam:.3g}; converged: {fit.converged} after {fit.iterations} iterations")
print(f"sigma^2 estimate {fit.sigma2:.3f} with divisor n - d_r = {n} - {fit.d_r}")

t = fit.beta / np.where(fit.se_beta > 0, fit.se_beta, np.inf)
b0 = truth.beta()
print(f"{'term':<10}{'true':>8}{'estimate':>10}{'se':>8}{'t':>8}")
for i in np.argsort(-np.abs(t))[:10]:
    print(f"{fit.terms[i].label:<10}{b0[i]:>8.3f}{fit.beta[i]:>10.3f}{fit.se_beta[i]:>8.3f}{t[i]:>8.2f}")

# A rank-2 fit (eta = A B^T + B A^T) uses alternating ridge solves.
fit2 = fit_lowrank(Y, G, rank=2, lambda_ell=lam)
print(f"rank-2 objective rises over {len(fit2.trace)} sweeps: {fit2.trace[0]:.2f} -> {fit2.trace[-1]:.2f}")
