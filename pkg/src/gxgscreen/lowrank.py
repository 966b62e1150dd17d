"""Penalised maximum likelihood for the low-rank interaction model.

The criterion maximised is ``-||Y - X beta(theta)||^2 / 2 - lambda_ell ||theta||^2 / 2``
where the penalty covers every raw parameter, the intercept included.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from ._util import argmin_prefer_larger, as_float_matrix, as_response, derive_rng, kfold_indices
from .design import TermIndex, full_terms, genotype_values, n_terms
from .errors import (
    ConfigError,
    DivergenceError,
    InsufficientSampleError,
    NumericalError,
    SingularDesignError,
)
from .theta import LowRankTheta, effective_dim, jacobian_delta, product_columns, working_jacobian

log = logging.getLogger(__name__)

EIG_RTOL = 1e-10


@dataclass(frozen=True)
class FitOptions:
    """Solver controls shared by the rank-1 and rank-2k fitters."""

    seed: int = 0
    max_iter: int = 200
    tol: float = 1e-8
    max_halvings: int = 30
    max_sweeps: int = 500
    als_tol: float = 1e-8
    n_starts: int = 1
    hessian: str = "auto"

    def __post_init__(self):
        if self.hessian not in ("auto", "gauss-newton"):
            raise ConfigError(f"hessian must be 'auto' or 'gauss-newton', got {self.hessian!r}")
        if self.max_iter < 1 or self.max_sweeps < 1 or self.n_starts < 1:
            raise ConfigError("max_iter, max_sweeps and n_starts must be >= 1")


@dataclass(frozen=True, eq=False)
class FitResult:
    theta: LowRankTheta
    beta: np.ndarray
    terms: tuple[TermIndex, ...]
    sigma2: float
    se_beta: np.ndarray
    lambda_ell: float
    d_r: int
    iterations: int
    final_penalized_loglik: float
    converged: bool
    n: int
    trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def rank(self) -> int:
        return self.theta.rank

    @property
    def p(self) -> int:
        return self.theta.p

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.to_dict(),
            "rank": self.rank,
            "beta": {t.label: float(b) for t, b in zip(self.terms, self.beta)},
            "se_beta": {t.label: float(s) for t, s in zip(self.terms, self.se_beta)},
            "sigma2": self.sigma2,
            "lambda_ell": self.lambda_ell,
            "d_r": self.d_r,
            "n": self.n,
            "iterations": self.iterations,
            "final_penalized_loglik": self.final_penalized_loglik,
            "converged": self.converged,
        }


def penalized_loglik(theta: LowRankTheta, Y, G, lambda_ell: float) -> float:
    G = genotype_values(G)
    Y = as_response(Y, G.shape[0])
    if G.shape[1] != theta.p:
        raise ValueError(f"theta has p={theta.p} but the genotype matrix has {G.shape[1]} loci")
    r = Y - theta.predict(G)
    return -0.5 * float(r @ r) - 0.5 * lambda_ell * theta.sq_norm()


def objective_gradient(theta: LowRankTheta, Y, G, lambda_ell: float) -> np.ndarray:
    """Gradient of the minimisation form ``-penalized_loglik`` in the raw parameters."""
    G = genotype_values(G)
    r = as_response(Y, G.shape[0]) - theta.predict(G)
    return -working_jacobian(theta, G).T @ r + lambda_ell * theta.to_vector()


def _check_lambda(lambda_ell):
    if not np.isfinite(lambda_ell) or lambda_ell < 0:
        raise ConfigError(f"lambda_ell must be a finite value >= 0, got {lambda_ell}")


def _check_sample_size(n, p, rank):
    d_r = effective_dim(p, rank)
    if n <= d_r:
        raise InsufficientSampleError(
            f"n={n} does not exceed the rank-{rank} parameter count d_r={d_r} (p={p}); "
            "error variance cannot be estimated"
        )
    return d_r


def _chol_solve(H, b, lambda_ell):
    try:
        c = linalg.cho_factor(H, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularDesignError(
            f"normal equations are singular at lambda_ell={lambda_ell}; use lambda_ell > 0"
        ) from exc
    d = np.abs(np.diag(c[0]))
    if d.min() <= 1e-12 * max(d.max(), 1.0):
        raise SingularDesignError(
            f"normal equations are numerically singular at lambda_ell={lambda_ell}; "
            "use lambda_ell > 0"
        )
    return linalg.cho_solve(c, b)


def ridge_solve(X, Y, lambda_ell):
    """``(X^T X + lambda I)^{-1} X^T Y``."""
    H = X.T @ X
    H[np.diag_indices_from(H)] += lambda_ell
    return _chol_solve(H, X.T @ Y, lambda_ell)


# ---------------------------------------------------------------- rank 1


def _rank1_parts(v, u, G, G2, Y):
    p = G.shape[1]
    xi, a = v[1:p + 1], v[p + 1:]
    Ga = G @ a
    r = Y - (v[0] + G @ xi + 0.5 * u * (Ga * Ga - G2 @ (a * a)))
    return r, Ga


def _newton_rank1(Y, G, lambda_ell, theta, opts):
    """Damped Newton iterations for one sign branch.

    The step uses the full Hessian when it is positive definite and the
    Gauss-Newton matrix ``W^T W + lambda I`` otherwise; the step is halved
    until the objective does not increase.
    """
    u = theta.u
    n, p = G.shape
    G2 = G * G
    v = theta.to_vector()
    d = v.shape[0]
    ia = np.arange(p + 1, d)
    r, Ga = _rank1_parts(v, u, G, G2, Y)
    f = 0.5 * (r @ r) + 0.5 * lambda_ell * (v @ v)
    converged = False
    it = 0
    while True:
        W = np.hstack([np.ones((n, 1)), G, u * (G * Ga[:, None] - G2 * v[p + 1:])])
        g = -W.T @ r + lambda_ell * v
        if np.max(np.abs(g)) <= opts.tol:
            converged = True
            break
        if it >= opts.max_iter:
            break
        it += 1
        H = W.T @ W
        H[np.diag_indices(d)] += lambda_ell
        step = None
        if opts.hessian == "auto":
            # residual curvature of u/2 sum_{j!=k} a_j a_k g_j g_k
            S = (G * r[:, None]).T @ G
            S[np.diag_indices(p)] = 0.0
            Hf = H.copy()
            Hf[np.ix_(ia, ia)] -= u * S
            try:
                step = linalg.cho_solve(linalg.cho_factor(Hf), g)
            except linalg.LinAlgError:
                step = None
        if step is None:
            step = _chol_solve(H, g, lambda_ell)
        t = 1.0
        for _ in range(opts.max_halvings + 1):
            cand = v - t * step
            rc, Gac = _rank1_parts(cand, u, G, G2, Y)
            fc = 0.5 * (rc @ rc) + 0.5 * lambda_ell * (cand @ cand)
            if fc <= f:
                break
            t *= 0.5
        else:
            log.debug("rank-1 line search stalled at iteration %d", it)
            break
        if not np.isfinite(fc):
            raise DivergenceError("non-finite objective in rank-1 Newton iteration")
        v, r, Ga, f = cand, rc, Gac, fc
    return theta.with_vector(v), -f, it, converged


def _fit_theta_rank1(Y, G, lambda_ell, opts):
    n, p = G.shape
    rng = derive_rng(opts.seed, "rank1-init")
    starts = [rng.normal(0.0, 1.0 / np.sqrt(p), size=p) for _ in range(max(1, opts.n_starts))]
    best = None
    total = 0
    for alpha0 in starts:
        for u in (1, -1):
            theta0 = LowRankTheta.rank1(Y.mean(), np.zeros(p), alpha0, u)
            theta, ll, it, conv = _newton_rank1(Y, G, lambda_ell, theta0, opts)
            total += it
            if best is None or ll > best[1]:
                best = (theta, ll, conv)
    theta, ll, conv = best
    return theta, ll, total, conv, (ll,)


# --------------------------------------------------------------- rank 2k


def als_half_step(Y, G, fixed, lambda_ell):
    """Ridge solve for ``(gamma, xi, other)`` with one factor held fixed.

    ``vecp(A B^T + B A^T)`` is linear in ``A`` for fixed ``B`` (and vice
    versa), so each half-step is an exact penalised least-squares problem.
    Returns ``(gamma, xi, other)``.
    """
    G = genotype_values(G)
    n, p = G.shape
    fixed = np.asarray(fixed, dtype=float)
    if fixed.ndim == 1:
        fixed = fixed[:, None]
    k = fixed.shape[1]
    X = np.hstack([np.ones((n, 1)), G, product_columns(G, fixed)])
    sol = ridge_solve(X, as_response(Y, n), lambda_ell)
    return sol[0], sol[1:p + 1], sol[p + 1:].reshape((p, k), order="F")


def _als(Y, G, lambda_ell, B, opts):
    trace = []
    converged = False
    sweeps = 0
    for sweeps in range(1, opts.max_sweeps + 1):
        _, _, A = als_half_step(Y, G, B, lambda_ell)
        gamma, xi, B = als_half_step(Y, G, A, lambda_ell)
        theta = LowRankTheta.rank2k(gamma, xi, A, B)
        ll = penalized_loglik(theta, Y, G, lambda_ell)
        if not np.isfinite(ll):
            raise DivergenceError("non-finite objective in ALS; this indicates a bug")
        trace.append(ll)
        if len(trace) > 1 and trace[-1] - trace[-2] < opts.als_tol:
            converged = True
            break
    return theta, trace[-1], sweeps, converged, tuple(trace)


def _fit_theta_rank2k(Y, G, lambda_ell, k, opts):
    n, p = G.shape
    rng = derive_rng(opts.seed, "als-init")
    best = None
    total = 0
    for _ in range(max(1, opts.n_starts)):
        B0 = rng.standard_normal((p, k)) / np.sqrt(p)
        res = _als(Y, G, lambda_ell, B0, opts)
        total += res[2]
        if best is None or res[1] > best[1]:
            best = res
    theta, ll, _, conv, trace = best
    return theta, ll, total, conv, trace


# ------------------------------------------------------------- public fits


def _check_rank(rank):
    if rank != 1 and (rank < 2 or rank % 2):
        raise ConfigError(f"rank must be 1 or an even number 2k, got {rank}")


def _fit_theta(Y, G, lambda_ell, rank, opts):
    if rank == 1:
        return _fit_theta_rank1(Y, G, lambda_ell, opts)
    return _fit_theta_rank2k(Y, G, lambda_ell, rank // 2, opts)


def fit_lowrank(Y, G, rank: int = 1, lambda_ell: float = 1.0, options: FitOptions | None = None) -> FitResult:
    """Fit the rank-``rank`` model and attach plug-in standard errors."""
    _check_rank(rank)
    _check_lambda(lambda_ell)
    opts = options or FitOptions()
    G = as_float_matrix(genotype_values(G))
    n, p = G.shape
    Y = as_response(Y, n)
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(G))):
        raise ValueError("non-finite values in Y or G")
    d_r = _check_sample_size(n, p, rank)
    theta, ll, iters, conv, trace = _fit_theta(Y, G, lambda_ell, rank, opts)
    if not conv:
        log.info("rank-%d fit stopped after %d iterations without meeting tolerance", rank, iters)
    rss = float(np.sum((Y - theta.predict(G)) ** 2))
    sigma2 = rss / (n - d_r)
    se = estimate_cov(theta, G, lambda_ell, sigma2)
    return FitResult(
        theta=theta,
        beta=theta.beta(),
        terms=full_terms(p),
        sigma2=sigma2,
        se_beta=se,
        lambda_ell=float(lambda_ell),
        d_r=d_r,
        iterations=iters,
        final_penalized_loglik=ll,
        converged=conv,
        n=n,
        trace=trace,
    )


def fit_rank1(Y, G, lambda_ell: float, options: FitOptions | None = None) -> FitResult:
    """Rank-1 fit: Newton iterations under ``u = +1`` and ``u = -1``, best objective wins."""
    return fit_lowrank(Y, G, 1, lambda_ell, options)


def fit_rank2k(Y, G, lambda_ell: float, k: int = 1, options: FitOptions | None = None) -> FitResult:
    """Rank-``2k`` fit by alternating least squares from a random ``B``."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    return fit_lowrank(Y, G, 2 * k, lambda_ell, options)


# ------------------------------------------------------------------- CV


def default_lambda_grid(n: int, p: int, num: int = 10) -> np.ndarray:
    return np.logspace(-3, 3, num) * n / n_terms(p)


def cv_errors(Y, G, rank, grid, K=10, seed=0, options=None):
    """Mean held-out squared prediction error for each grid value."""
    opts = replace(options or FitOptions(), seed=seed)
    G = genotype_values(G)
    n = G.shape[0]
    Y = as_response(Y, n)
    folds = kfold_indices(n, K, derive_rng(seed, "cv-folds"))
    sse = np.zeros(len(grid))
    for test in folds:
        train = np.setdiff1d(np.arange(n), test, assume_unique=True)
        for i, lam in enumerate(grid):
            theta = _fit_theta(Y[train], G[train], lam, rank, opts)[0]
            sse[i] += np.sum((Y[test] - theta.predict(G[test])) ** 2)
    return sse / n


def cv_lambda_ell(Y, G, rank: int = 1, grid=None, K: int = 10, seed: int = 0, options=None) -> float:
    """Choose ``lambda_ell`` by ``K``-fold cross-validation.

    Folds are contiguous blocks of a seeded permutation; ties in held-out
    error go to the larger penalty.
    """
    _check_rank(rank)
    G = genotype_values(G)
    if grid is None:
        grid = default_lambda_grid(*G.shape)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ConfigError("lambda_ell grid is empty")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ConfigError("lambda_ell grid values must be finite and >= 0")
    if grid.size == 1:
        return float(grid[0])
    if G.shape[0] < K:
        raise InsufficientSampleError(f"n={G.shape[0]} is smaller than the number of folds {K}")
    err = cv_errors(Y, G, rank, grid, K, seed, options)
    return float(grid[argmin_prefer_larger(err, grid)])


# -------------------------------------------------------------- inference


def estimate_sigma2(fit: FitResult, Y, G) -> float:
    """Residual variance ``||Y - X beta_hat||^2 / (n - d_r)``."""
    G = genotype_values(G)
    n = G.shape[0]
    d_r = effective_dim(fit.p, fit.rank)
    if n <= d_r:
        raise InsufficientSampleError(f"n={n} does not exceed d_r={d_r}")
    r = as_response(Y, n) - fit.theta.predict(G)
    return float(r @ r) / (n - d_r)


def _cov_core(theta, G, lambda_ell):
    G = genotype_values(G)
    n = G.shape[0]
    W = working_jacobian(theta, G)
    M = W.T @ W / n
    evals, U = np.linalg.eigh(M)
    if not np.all(np.isfinite(evals)):
        raise NumericalError("non-finite eigenvalues in the information matrix")
    order = np.argsort(evals)[::-1]
    evals, U = evals[order], U[:, order]
    top = evals[0] if evals.size else 0.0
    keep = evals > max(EIG_RTOL * top, 0.0)
    keep[theta.d_r:] = False
    Uk = U[:, keep]
    inner = (Uk / (evals[keep] + lambda_ell / n)) @ Uk.T
    return jacobian_delta(theta), inner, n


def covariance_matrix(theta: LowRankTheta, G, lambda_ell: float, sigma2: float) -> np.ndarray:
    """Full asymptotic covariance of ``sqrt(n) (beta_hat - beta_0)``; small problems only."""
    D, inner, _ = _cov_core(theta, G, lambda_ell)
    return sigma2 * D @ inner @ D.T


def estimate_cov(theta: LowRankTheta, G, lambda_ell: float, sigma2: float) -> np.ndarray:
    """Standard errors ``sqrt(diag(Sigma_0) / n)`` of ``beta(theta_hat)``.

    ``Sigma_0 = sigma2 * D {U (L + lambda/n) U^T}^- D^T`` where ``U L U^T`` is
    the leading part (at most ``d_r`` eigenpairs) of ``D^T V_n D`` and
    ``D`` is the Jacobian of ``beta(theta)``.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    D, inner, n = _cov_core(theta, G, lambda_ell)
    var = sigma2 * np.einsum("ij,jk,ik->i", D, inner, D)
    return np.sqrt(np.maximum(var, 0.0) / n)
