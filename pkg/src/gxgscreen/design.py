"""Interaction design: term indexing, the vecp operator and design assembly.

Loci are numbered from 1, matching the ``g<j>`` labels used in every output.
Interaction columns follow vecp order, i.e. column-major over the strict lower
triangle: ``(2,1), (3,1), ..., (p,1), (3,2), ..., (p,p-1)``. Diagonal terms
``g_j**2`` never appear.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import IngestionError

INTERCEPT = "intercept"
MAIN = "main"
INTERACTION = "interaction"

_SYM_TOL = 1e-10


def n_pairs(p: int) -> int:
    return p * (p - 1) // 2


def n_terms(p: int) -> int:
    """Column count ``1 + p + p(p-1)/2`` of the full interaction design."""
    return 1 + p + n_pairs(p)


def _pair_offset(k, p):
    # first vecp position of lower-triangle column k (1-based)
    return (k - 1) * p - (k - 1) * k // 2


def pair_to_column(j: int, k: int, p: int) -> int:
    """Position of lower-triangle entry ``(j, k)``, ``j > k``, inside ``vecp``."""
    if not (1 <= k < j <= p):
        raise IndexError(f"pair ({j},{k}) is not in the strict lower triangle for p={p}")
    return _pair_offset(k, p) + (j - k - 1)


def column_to_pair(c: int, p: int) -> tuple[int, int]:
    """Inverse of :func:`pair_to_column`; returns ``(j, k)`` with ``j > k``."""
    if not (0 <= c < n_pairs(p)):
        raise IndexError(f"vecp position {c} out of range for p={p}")
    offsets = _pair_offset(np.arange(1, p), p)
    k = int(np.searchsorted(offsets, c, side="right"))
    j = k + 1 + (c - int(offsets[k - 1]))
    return j, k


def pair_arrays(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Zero-based ``(rows, cols)`` of the strict lower triangle in vecp order."""
    cols, rows = np.triu_indices(p, 1)
    # triu_indices walks row-major over the upper triangle, which is the
    # column-major walk over the lower one after transposition
    return rows, cols


def vecp(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"vecp needs a square matrix, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=0.0, atol=_SYM_TOL):
        raise ValueError("vecp needs a symmetric matrix")
    rows, cols = pair_arrays(M.shape[0])
    return M[rows, cols]


def unvecp(v, p: int) -> np.ndarray:
    """Symmetric ``p x p`` matrix with zero diagonal whose vecp is ``v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (n_pairs(p),):
        raise ValueError(f"expected {n_pairs(p)} entries for p={p}, got {v.shape}")
    M = np.zeros((p, p))
    rows, cols = pair_arrays(p)
    M[rows, cols] = v
    M[cols, rows] = v
    return M


@dataclass(frozen=True)
class TermIndex:
    """One regression term: the intercept, a main effect or a pairwise product.

    ``loci`` holds 1-based locus numbers, sorted ascending for interactions.
    """

    kind: str
    loci: tuple[int, ...] = ()

    def __post_init__(self):
        n_expected = {INTERCEPT: 0, MAIN: 1, INTERACTION: 2}.get(self.kind)
        if n_expected is None:
            raise ValueError(f"unknown term kind {self.kind!r}")
        if len(self.loci) != n_expected:
            raise ValueError(f"{self.kind} term needs {n_expected} loci, got {self.loci}")
        if any(j < 1 for j in self.loci):
            raise IndexError(f"locus numbers start at 1, got {self.loci}")
        if self.kind == INTERACTION:
            j, k = self.loci
            if j == k:
                raise ValueError("interaction of a locus with itself is not a model term")
            if j > k:
                object.__setattr__(self, "loci", (k, j))

    @classmethod
    def intercept(cls) -> "TermIndex":
        return cls(INTERCEPT)

    @classmethod
    def main(cls, j: int) -> "TermIndex":
        return cls(MAIN, (int(j),))

    @classmethod
    def interaction(cls, j: int, k: int) -> "TermIndex":
        return cls(INTERACTION, (int(j), int(k)))

    @property
    def sort_key(self):
        return ({INTERCEPT: 0, MAIN: 1, INTERACTION: 2}[self.kind],) + self.loci

    def __lt__(self, other):
        return self.sort_key < other.sort_key

    @property
    def is_intercept(self) -> bool:
        return self.kind == INTERCEPT

    @property
    def label(self) -> str:
        if self.kind == INTERCEPT:
            return "(Intercept)"
        return ":".join(f"g{j}" for j in self.loci)

    def __str__(self):
        return self.label

    def column(self, p: int) -> int:
        """Zero-based column of this term in the full design over ``p`` loci."""
        if any(j > p for j in self.loci):
            raise IndexError(f"term {self.label} references a locus beyond p={p}")
        if self.kind == INTERCEPT:
            return 0
        if self.kind == MAIN:
            return self.loci[0]
        k, j = self.loci
        return 1 + p + pair_to_column(j, k, p)

    def relabel(self, loci_map: Sequence[int]) -> "TermIndex":
        """Rename loci through ``loci_map`` (position ``j-1`` holds the new number)."""
        return TermIndex(self.kind, tuple(int(loci_map[j - 1]) for j in self.loci))

    @classmethod
    def parse(cls, label: str) -> "TermIndex":
        label = label.strip()
        if label == "(Intercept)":
            return cls.intercept()
        parts = label.split(":")
        try:
            loci = [int(s[1:]) for s in parts if s.startswith("g")]
        except ValueError:
            loci = []
        if len(loci) != len(parts) or len(parts) not in (1, 2):
            raise ValueError(f"cannot parse term label {label!r}")
        return cls.main(loci[0]) if len(loci) == 1 else cls.interaction(*loci)


def full_terms(p: int) -> tuple[TermIndex, ...]:
    rows, cols = pair_arrays(p)
    return (
        (TermIndex.intercept(),)
        + tuple(TermIndex.main(j) for j in range(1, p + 1))
        + tuple(TermIndex.interaction(c + 1, r + 1) for r, c in zip(rows, cols))
    )


def expanded_terms(loci: Iterable[int]) -> tuple[TermIndex, ...]:
    """Intercept, the given main effects and all their pairwise products."""
    loci = sorted(set(int(j) for j in loci))
    terms = [TermIndex.intercept()] + [TermIndex.main(j) for j in loci]
    terms += [TermIndex.interaction(a, b) for i, a in enumerate(loci) for b in loci[i + 1:]]
    return tuple(sorted(terms))


def term_loci(terms: Iterable[TermIndex]) -> tuple[int, ...]:
    return tuple(sorted({j for t in terms for j in t.loci}))


@dataclass(frozen=True, eq=False)
class GenotypeData:
    """``n x p`` matrix of numeric genotype codes with one label per locus."""

    values: np.ndarray
    snp_ids: tuple[str, ...] = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"genotype matrix must be n x p with n, p >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("genotype matrix contains missing or non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        ids = self.snp_ids
        if ids is None:
            ids = tuple(f"g{j}" for j in range(1, values.shape[1] + 1))
        ids = tuple(str(s) for s in ids)
        if len(ids) != values.shape[1]:
            raise ValueError(f"{len(ids)} SNP labels for {values.shape[1]} columns")
        if len(set(ids)) != len(ids):
            raise ValueError("SNP labels must be unique")
        object.__setattr__(self, "snp_ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def rows(self, idx) -> "GenotypeData":
        return GenotypeData(self.values[np.asarray(idx)], self.snp_ids)

    def loci(self, loci: Sequence[int]) -> "GenotypeData":
        """Sub-matrix on 1-based locus numbers, in the order given."""
        cols = np.asarray(loci, dtype=int) - 1
        return GenotypeData(self.values[:, cols], tuple(self.snp_ids[c] for c in cols))


def genotype_values(G) -> np.ndarray:
    if isinstance(G, GenotypeData):
        return G.values
    G = np.asarray(G, dtype=float)
    return G[:, None] if G.ndim == 1 else G


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    X: np.ndarray
    terms: tuple[TermIndex, ...]
    source_p: int

    @property
    def shape(self):
        return self.X.shape

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    def intercept_column(self):
        for i, t in enumerate(self.terms):
            if t.is_intercept:
                return i
        return None


def interaction_block(G) -> np.ndarray:
    """All ``p(p-1)/2`` pairwise products in vecp order."""
    G = genotype_values(G)
    p = G.shape[1]
    if p < 2:
        return np.empty((G.shape[0], 0))
    return np.hstack([G[:, k + 1:] * G[:, [k]] for k in range(p - 1)])


def build_design(G, terms: Sequence[TermIndex] | None = None) -> DesignMatrix:
    """Regression matrix for ``G``.

    Without ``terms`` the full ``n x m_p`` design ``[1, G, vecp(G G^T)]`` is
    returned; otherwise only the requested columns, in canonical order.
    """
    Gv = genotype_values(G)
    n, p = Gv.shape
    if terms is None:
        X = np.hstack([np.ones((n, 1)), Gv, interaction_block(Gv)])
        return DesignMatrix(X, full_terms(p), p)
    terms = tuple(sorted(set(terms)))
    X = np.empty((n, len(terms)))
    for i, t in enumerate(terms):
        if any(j > p for j in t.loci):
            raise IndexError(f"term {t.label} references a locus beyond p={p}")
        if t.kind == INTERCEPT:
            X[:, i] = 1.0
        elif t.kind == MAIN:
            X[:, i] = Gv[:, t.loci[0] - 1]
        else:
            X[:, i] = Gv[:, t.loci[0] - 1] * Gv[:, t.loci[1] - 1]
    return DesignMatrix(X, terms, p)


def read_genotype_csv(path) -> GenotypeData:
    """Header row of SNP labels, then one numeric row per individual."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IngestionError(f"cannot read genotype file {path}: {exc}") from exc
    rows = [r for r in rows if r and any(s.strip() for s in r)]
    if len(rows) < 2:
        raise IngestionError(f"{path}: need a header row and at least one individual")
    header = [s.strip() for s in rows[0]]
    values = _numeric_rows(rows[1:], len(header), path)
    try:
        return GenotypeData(values, tuple(header))
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from exc


def read_phenotype_csv(path, n: int | None = None) -> np.ndarray:
    """Single-column phenotype file. A non-numeric first row is taken as a header."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(s.strip() for s in r)]
    except OSError as exc:
        raise IngestionError(f"cannot read phenotype file {path}: {exc}") from exc
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise IngestionError(f"{path}: no phenotype values")
    y = _numeric_rows(rows, 1, path)[:, 0]
    if n is not None and y.shape[0] != n:
        raise IngestionError(f"{path}: {y.shape[0]} phenotype values for {n} individuals")
    return y


def _numeric_rows(rows, width, path):
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise IngestionError(f"{path}: row {i + 2} has {len(row)} fields, expected {width}")
        for j, s in enumerate(row):
            s = s.strip()
            if s == "" or s.upper() in ("NA", "NAN"):
                raise IngestionError(f"{path}: missing value at row {i + 2}, field {j + 1}")
            try:
                out[i, j] = float(s)
            except ValueError:
                raise IngestionError(f"{path}: non-numeric value {s!r} at row {i + 2}") from None
    if not np.all(np.isfinite(out)):
        raise IngestionError(f"{path}: non-finite values")
    return out


def write_genotype_csv(path, G: GenotypeData) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(G.snp_ids)
        for row in G.values:
            w.writerow([f"{v:g}" for v in row])


def write_phenotype_csv(path, y) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"])
        for v in np.asarray(y, dtype=float):
            w.writerow([repr(float(v))])
