import zlib

import numpy as np


def derive_rng(seed, tag):
    """Independent generator for one stochastic component.

    Streams are keyed by ``(seed, crc32(tag))`` so adding a component never
    shifts the draws of another.
    """
    return np.random.default_rng([int(seed), zlib.crc32(tag.encode())])


def kfold_indices(n, k, rng):
    """Contiguous folds over a shuffled index vector."""
    if k < 2:
        raise ValueError("need at least two folds")
    if n < k:
        raise ValueError(f"n={n} is smaller than the number of folds {k}")
    perm = rng.permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def argmin_prefer_larger(errors, grid):
    """Index of the smallest error; ties go to the largest grid value."""
    errors = np.asarray(errors, dtype=float)
    grid = np.asarray(grid, dtype=float)
    best = np.nanmin(errors)
    tied = np.flatnonzero(errors <= best)
    return int(tied[np.argmax(grid[tied])])


def as_float_matrix(a, name="G"):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {a.shape}")
    return a


def as_response(y, n=None):
    y = np.asarray(y, dtype=float).ravel()
    if n is not None and y.shape[0] != n:
        raise ValueError(f"response has {y.shape[0]} rows, expected {n}")
    return y
