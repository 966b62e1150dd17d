"""The interaction design: vecp ordering, term labels and the full design matrix.

Run with ``python demos/01_design.py``.
"""
import numpy as np

from gxgscreen.design import TermIndex, build_design, full_terms, n_terms, pair_to_column, unvecp, vecp

rng = np.random.default_rng(1)
p = 4

# vecp stacks the strict lower triangle column by column: (2,1), (3,1), (4,1), (3,2), ...
eta = np.arange(16.0).reshape(4, 4)
eta = eta + eta.T
print("vecp(eta) =", vecp(eta))
print("round trip ok:", np.allclose(unvecp(vecp(eta), p), eta - np.diag(np.diag(eta))))
print("column of pair (3,2) among the interactions:", pair_to_column(3, 2, p))

# The full model has an intercept, p main effects and p(p-1)/2 pairs.
print("m_p for p=4:", n_terms(p), [t.label for t in full_terms(p)])

# Design columns are the genotype codes and their pairwise products.
G = rng.choice([0.0, 1.0, 2.0], size=(6, p), p=[0.25, 0.5, 0.25])
D = build_design(G)
print(D.labels)
print(D.X)

# The same matrix restricted to a hand-picked term list.
sub = build_design(G, [TermIndex.intercept(), TermIndex.main(2), TermIndex.interaction(4, 1)])
print(sub.labels)
print(sub.X)
