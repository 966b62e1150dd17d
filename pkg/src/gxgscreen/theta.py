"""Low-rank parameterisation of the interaction matrix.

Two forms are supported:

* rank 1:  ``eta = u * alpha alpha^T`` with a fixed sign ``u``;
* rank 2k: ``eta = A B^T + B A^T`` with ``A, B`` of shape ``p x k``.

The raw parameter vector is ``(gamma, xi, alpha)`` or
``(gamma, xi, vec(A), vec(B))`` with column-major ``vec``. The sign ``u`` is a
branch label, not a free parameter, and is not part of the vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import genotype_values, n_terms, pair_arrays


def effective_dim(p: int, rank: int) -> int:
    """Number of free parameters of the rank-``rank`` model over ``p`` loci."""
    return int(round(1 + p + (p * rank - rank**2 / 2 + rank / 2)))


@dataclass(frozen=True, eq=False)
class LowRankTheta:
    gamma: float
    xi: np.ndarray
    alpha: np.ndarray | None = None
    u: int | None = None
    A: np.ndarray | None = None
    B: np.ndarray | None = None

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).ravel()
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "gamma", float(self.gamma))
        p = xi.shape[0]
        if self.alpha is not None:
            if self.A is not None or self.B is not None:
                raise ValueError("give either alpha (rank 1) or A and B (rank 2k), not both")
            alpha = np.asarray(self.alpha, dtype=float).ravel()
            if alpha.shape != (p,):
                raise ValueError(f"alpha has shape {alpha.shape}, expected ({p},)")
            if self.u not in (1, -1):
                raise ValueError(f"u must be +1 or -1, got {self.u}")
            object.__setattr__(self, "alpha", alpha)
        else:
            if self.A is None or self.B is None:
                raise ValueError("rank-2k form needs both A and B")
            A = np.asarray(self.A, dtype=float)
            B = np.asarray(self.B, dtype=float)
            if A.ndim == 1:
                A, B = A[:, None], B[:, None]
            if A.shape != B.shape or A.shape[0] != p or A.shape[1] < 1:
                raise ValueError(f"A {A.shape} and B {B.shape} must both be {p} x k")
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "B", B)

    @classmethod
    def rank1(cls, gamma, xi, alpha, u=1):
        return cls(gamma, xi, alpha=alpha, u=int(u))

    @classmethod
    def rank2k(cls, gamma, xi, A, B):
        return cls(gamma, xi, A=A, B=B)

    @property
    def p(self) -> int:
        return self.xi.shape[0]

    @property
    def is_rank1(self) -> bool:
        return self.alpha is not None

    @property
    def k(self) -> int:
        return 0 if self.is_rank1 else self.A.shape[1]

    @property
    def rank(self) -> int:
        """Declared rank ``r`` (1 or ``2k``)."""
        return 1 if self.is_rank1 else 2 * self.k

    @property
    def n_params(self) -> int:
        return 1 + self.p + (self.p if self.is_rank1 else 2 * self.p * self.k)

    @property
    def d_r(self) -> int:
        return effective_dim(self.p, self.rank)

    def eta(self) -> np.ndarray:
        if self.is_rank1:
            return self.u * np.outer(self.alpha, self.alpha)
        AB = self.A @ self.B.T
        return AB + AB.T

    def beta(self) -> np.ndarray:
        """Induced coefficients ``[gamma, xi, vecp(eta)]`` over the full design."""
        rows, cols = pair_arrays(self.p)
        if self.is_rank1:
            inter = self.u * self.alpha[rows] * self.alpha[cols]
        else:
            inter = (self.A[rows] * self.B[cols] + self.B[rows] * self.A[cols]).sum(axis=1)
        return np.concatenate([[self.gamma], self.xi, inter])

    def to_vector(self) -> np.ndarray:
        if self.is_rank1:
            tail = [self.alpha]
        else:
            tail = [self.A.ravel(order="F"), self.B.ravel(order="F")]
        return np.concatenate([[self.gamma], self.xi] + tail)

    def with_vector(self, v) -> "LowRankTheta":
        """Same form, sign and shape with parameters taken from ``v``."""
        v = np.asarray(v, dtype=float)
        p = self.p
        if v.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {v.shape}")
        if self.is_rank1:
            return LowRankTheta.rank1(v[0], v[1:p + 1], v[p + 1:], self.u)
        k = self.k
        A = v[p + 1:p + 1 + p * k].reshape((p, k), order="F")
        B = v[p + 1 + p * k:].reshape((p, k), order="F")
        return LowRankTheta.rank2k(v[0], v[1:p + 1], A, B)

    def sq_norm(self) -> float:
        v = self.to_vector()
        return float(v @ v)

    def predict(self, G) -> np.ndarray:
        """``X beta(theta)`` without forming the ``n x m_p`` design."""
        G = genotype_values(G)
        return self.gamma + G @ self.xi + interaction_signal(self, G)

    def to_dict(self) -> dict:
        out = {"gamma": self.gamma, "xi": self.xi.tolist()}
        if self.is_rank1:
            out.update(form="rank1", alpha=self.alpha.tolist(), u=self.u)
        else:
            out.update(form="rank2k", k=self.k, A=self.A.tolist(), B=self.B.tolist())
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LowRankTheta":
        if d["form"] == "rank1":
            return cls.rank1(d["gamma"], d["xi"], d["alpha"], d["u"])
        return cls.rank2k(d["gamma"], d["xi"], np.array(d["A"]), np.array(d["B"]))


def interaction_signal(theta: LowRankTheta, G) -> np.ndarray:
    """Row-wise ``sum_{j<k} eta_jk g_j g_k``.

    Uses ``sum_{j<k} eta_jk g_j g_k = (g^T eta g - sum_j eta_jj g_j^2) / 2``.
    """
    G = genotype_values(G)
    G2 = G * G
    if theta.is_rank1:
        a = theta.alpha
        return 0.5 * theta.u * ((G @ a) ** 2 - G2 @ (a * a))
    GA, GB = G @ theta.A, G @ theta.B
    return (GA * GB).sum(axis=1) - G2 @ (theta.A * theta.B).sum(axis=1)


def product_columns(G, V) -> np.ndarray:
    """Derivative of ``sum_{j<k} (V a^T + a V^T)_jk g_j g_k`` with respect to ``vec(a)``.

    For ``V`` of shape ``p x k`` the result is ``n x pk`` in column-major
    order; column ``(l, c)`` is ``g_l (G V_c) - g_l^2 V_lc``.
    """
    G = genotype_values(G)
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    GV = G @ V
    G2 = G * G
    return np.hstack([G * GV[:, [c]] - G2 * V[:, c] for c in range(V.shape[1])])


def working_jacobian(theta: LowRankTheta, G) -> np.ndarray:
    """``W(theta) = X Delta(theta)`` computed directly, ``n x n_params``."""
    G = genotype_values(G)
    n = G.shape[0]
    blocks = [np.ones((n, 1)), G]
    if theta.is_rank1:
        # d/d alpha_l of u/2 [(G a)^2 - G^2 a^2] = u (g_l (G a) - g_l^2 a_l)
        blocks.append(theta.u * product_columns(G, theta.alpha))
    else:
        blocks += [product_columns(G, theta.B), product_columns(G, theta.A)]
    return np.hstack(blocks)


def jacobian_delta(theta: LowRankTheta, p: int | None = None) -> np.ndarray:
    """``Delta(theta) = d beta(theta) / d theta`` as a dense ``m_p x n_params`` matrix.

    Row ``(j,k)`` of the interaction block has ``d eta_jk / d alpha_l =
    u (alpha_k [l=j] + alpha_j [l=k])`` in the rank-1 form and the analogous
    entries in ``B`` (for ``A``) and ``A`` (for ``B``) in the rank-2k form.
    """
    if p is None:
        p = theta.p
    if p != theta.p:
        raise ValueError(f"theta has p={theta.p}, asked for p={p}")
    d = theta.n_params
    D = np.zeros((n_terms(p), d))
    D[np.arange(p + 1), np.arange(p + 1)] = 1.0
    rows, cols = pair_arrays(p)
    r = p + 1 + np.arange(rows.shape[0])
    if theta.is_rank1:
        a, u = theta.alpha, theta.u
        # rows > cols, so the two targets never coincide
        D[r, p + 1 + rows] = u * a[cols]
        D[r, p + 1 + cols] = u * a[rows]
        return D
    A, B, k = theta.A, theta.B, theta.k
    offA, offB = p + 1, p + 1 + p * k
    for c in range(k):
        D[r, offA + c * p + rows] = B[cols, c]
        D[r, offA + c * p + cols] = B[rows, c]
        D[r, offB + c * p + rows] = A[cols, c]
        D[r, offB + c * p + cols] = A[rows, c]
    return D
