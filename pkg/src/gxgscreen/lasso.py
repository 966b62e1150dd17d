"""Lasso by cyclic coordinate descent.

Solves ``min_b ||Y - X b||^2 / 2 + lam * sum_{j penalised} |b_j|`` on the
original column scale. Columns are rescaled to unit norm inside the solver,
which turns the per-coordinate update into a plain soft-threshold at
``lam / ||x_j||``; coefficients are mapped back before returning. An
intercept column, when present, is unpenalised and profiled out by centring.
"""
from __future__ import annotations

import warnings

import numpy as np
from numba import njit

from ._util import argmin_prefer_larger, as_response, derive_rng, kfold_indices
from .design import DesignMatrix


CV_TOL = 1e-4


class ConvergenceWarning(UserWarning):
    pass


@njit(cache=True)
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True)
def _sweep(Z, r, thr, b, idx):
    n = Z.shape[0]
    dmax = 0.0
    for jj in range(idx.shape[0]):
        j = idx[jj]
        old = b[j]
        rho = old
        for i in range(n):
            rho += Z[i, j] * r[i]
        new = _soft(rho, thr[j])
        if new != old:
            delta = new - old
            for i in range(n):
                r[i] -= Z[i, j] * delta
            b[j] = new
            if abs(delta) > dmax:
                dmax = abs(delta)
    return dmax


@njit(cache=True)
def _cd(Z, y, thr, b, tol, max_iter):
    """Cyclic coordinate descent on unit-norm columns, updating ``b`` in place.

    Full sweeps alternate with sweeps over the current support until a full
    sweep moves no coefficient by more than ``tol``.
    """
    n, m = Z.shape
    r = y.copy()
    for j in range(m):
        if b[j] != 0.0:
            for i in range(n):
                r[i] -= Z[i, j] * b[j]
    every = np.arange(m)
    passes = 0
    while passes < max_iter:
        passes += 1
        if _sweep(Z, r, thr, b, every) <= tol:
            return passes, True
        support = np.flatnonzero(b != 0.0)
        while passes < max_iter:
            passes += 1
            if _sweep(Z, r, thr, b, support) <= tol:
                break
    return passes, False


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


class _Problem:
    """Centred, unit-norm working copy of ``(X, Y)``."""

    def __init__(self, X, Y, intercept):
        X, intercept = _unpack(X, intercept)
        Y = as_response(Y, X.shape[0])
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("lasso inputs contain non-finite values")
        if X.shape[1] < 1:
            raise ValueError("design has no columns")
        self.m = X.shape[1]
        self.intercept = intercept
        self.pen = np.ones(self.m, dtype=bool)
        if intercept is not None:
            self.pen[intercept] = False
        Xp = X[:, self.pen]
        if intercept is not None:
            self.xmean = Xp.mean(axis=0)
            self.ymean = Y.mean()
        else:
            self.xmean = np.zeros(Xp.shape[1])
            self.ymean = 0.0
        Xc = Xp - self.xmean
        yc = Y - self.ymean
        self.scale = np.sqrt((Xc * Xc).sum(axis=0))
        self.live = self.scale > 1e-12 * max(1.0, self.scale.max(initial=0.0))
        self.Z = np.asfortranarray(Xc[:, self.live] / self.scale[self.live])
        self.y = np.ascontiguousarray(yc)
        self.lam_max = float(np.max(np.abs(Xc.T @ yc), initial=0.0))

    def solve(self, lam, b, tol, max_iter, strict=True):
        thr = lam / self.scale[self.live]
        _, ok = _cd(self.Z, self.y, thr, b, tol, max_iter)
        if not ok and strict:
            warnings.warn(f"coordinate descent stopped after {max_iter} passes at lambda={lam:.4g}",
                          ConvergenceWarning, stacklevel=3)
        return b

    def coef(self, b):
        beta_p = np.zeros(self.pen.sum())
        beta_p[self.live] = b / self.scale[self.live]
        out = np.zeros(self.m)
        out[self.pen] = beta_p
        if self.intercept is not None:
            out[self.intercept] = self.ymean - self.xmean @ beta_p
        return out


def _unpack(X, intercept):
    if isinstance(X, DesignMatrix):
        if intercept is None:
            intercept = X.intercept_column()
        X = X.X
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"design must be two-dimensional, got shape {X.shape}")
    if intercept is not None and not (0 <= intercept < X.shape[1]):
        raise IndexError(f"intercept column {intercept} out of range")
    return X, intercept


def lambda_max(X, Y, intercept=None) -> float:
    """Smallest penalty at which every penalised coefficient is zero."""
    return _Problem(X, Y, intercept).lam_max


def lasso_fit(X, Y, lambda_s: float, intercept: int | None = None, tol: float = 1e-7,
              max_iter: int = 100_000) -> np.ndarray:
    """Lasso coefficients on the original scale of ``X``.

    ``intercept`` is the index of an unpenalised constant column; for a
    :class:`DesignMatrix` it is found from the term list.
    """
    if not np.isfinite(lambda_s) or lambda_s < 0:
        raise ValueError(f"lambda_s must be finite and >= 0, got {lambda_s}")
    prob = _Problem(X, Y, intercept)
    b = prob.solve(float(lambda_s), np.zeros(prob.Z.shape[1]), tol, max_iter)
    return prob.coef(b)


def lasso_path(X, Y, lambdas, intercept=None, tol=1e-7, max_iter=100_000, strict=True) -> np.ndarray:
    """Warm-started fits over ``lambdas``; one row of coefficients per value."""
    prob = _Problem(X, Y, intercept)
    lambdas = np.asarray(lambdas, dtype=float)
    out = np.empty((lambdas.size, prob.m))
    b = np.zeros(prob.Z.shape[1])
    for i in np.argsort(-lambdas, kind="stable"):
        b = prob.solve(float(lambdas[i]), b, tol, max_iter, strict)
        out[i] = prob.coef(b)
    return out


def default_lasso_grid(lam_max: float, num: int = 50, eps: float = 1e-3) -> np.ndarray:
    if lam_max <= 0:
        return np.zeros(1)
    return np.logspace(np.log10(lam_max), np.log10(eps * lam_max), num)


def cv_lasso(X, Y, grid=None, K: int = 10, seed: int = 0, intercept=None, tag: str = "lasso-cv",
             tol: float = CV_TOL, max_iter: int = 20_000):
    """Pick the penalty by ``K``-fold CV on held-out squared error.

    Returns ``(lambda, grid, errors)``. The default grid has 50 log-spaced
    values from the null-path point down to ``1e-3`` of it; ties go to the
    larger penalty. Fold paths are solved to the looser ``tol``; only the
    held-out error is used from them.
    """
    X, intercept = _unpack(X, intercept)
    Y = as_response(Y, X.shape[0])
    if grid is None:
        grid = default_lasso_grid(lambda_max(X, Y, intercept))
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    if grid.size == 1:
        return float(grid[0]), grid, np.zeros(1)
    n = X.shape[0]
    sse = np.zeros(grid.size)
    for test in kfold_indices(n, K, derive_rng(seed, tag)):
        train = np.setdiff1d(np.arange(n), test, assume_unique=True)
        coefs = lasso_path(X[train], Y[train], grid, intercept, tol, max_iter, strict=False)
        pred = coefs @ X[test].T
        sse += ((Y[test] - pred) ** 2).sum(axis=1)
    err = sse / n
    return float(grid[argmin_prefer_larger(err, grid)]), grid, err
