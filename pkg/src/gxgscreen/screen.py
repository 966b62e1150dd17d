"""Low-rank Wald screening followed by Lasso on the survivors."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .design import TermIndex, build_design, genotype_values
from .errors import ConfigError, InsufficientSampleError
from .lasso import cv_lasso, lasso_fit
from .lowrank import FitOptions, FitResult, cv_lambda_ell, fit_lowrank
from .theta import effective_dim

log = logging.getLogger(__name__)

PROVENANCES = ("LR", "SLR", "Lasso", "Cleaned")


@dataclass(frozen=True)
class ScreenConfig:
    alpha_ell: float = 1.96
    rank: int = 1
    lambda_ell_grid: tuple[float, ...] | None = None
    lambda_s_grid: tuple[float, ...] | None = None
    cv_folds: int = 10
    seed: int = 0
    top_k: int | None = None
    fit_options: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        if not (self.alpha_ell > 0):
            raise ConfigError(f"alpha_ell must be > 0, got {self.alpha_ell}")
        if self.rank != 1 and (self.rank < 2 or self.rank % 2):
            raise ConfigError(f"rank must be 1 or an even number, got {self.rank}")
        for name in ("lambda_ell_grid", "lambda_s_grid"):
            grid = getattr(self, name)
            if grid is not None:
                grid = tuple(float(x) for x in np.atleast_1d(grid))
                if not grid:
                    raise ConfigError(f"{name} must not be empty")
                if any(not np.isfinite(x) or x < 0 for x in grid):
                    raise ConfigError(f"{name} values must be finite and >= 0")
                object.__setattr__(self, name, grid)
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.top_k is not None and self.top_k < 0:
            raise ConfigError(f"top_k must be >= 0, got {self.top_k}")


@dataclass(frozen=True, eq=False)
class SelectionModel:
    """Selected terms in canonical order, with estimates and optional test statistics."""

    terms: tuple[TermIndex, ...]
    estimates: np.ndarray
    provenance: str
    t_stats: np.ndarray | None = None
    p_values: np.ndarray | None = None
    warning: str | None = None
    parent: "SelectionModel | None" = field(default=None, repr=False)

    def __post_init__(self):
        terms = tuple(self.terms)
        order = sorted(range(len(terms)), key=lambda i: terms[i].sort_key)
        if len(set(terms)) != len(terms):
            raise ValueError("selected terms must be unique")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

        def reorder(a):
            if a is None:
                return None
            a = np.asarray(a, dtype=float)
            if a.shape != (len(terms),):
                raise ValueError("array length does not match the number of terms")
            return a[order]

        object.__setattr__(self, "terms", tuple(terms[i] for i in order))
        object.__setattr__(self, "estimates", reorder(self.estimates))
        object.__setattr__(self, "t_stats", reorder(self.t_stats))
        object.__setattr__(self, "p_values", reorder(self.p_values))

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self.terms

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    @property
    def effects(self) -> frozenset[TermIndex]:
        """Selected terms other than the intercept."""
        return frozenset(t for t in self.terms if not t.is_intercept)

    @property
    def loci(self) -> tuple[int, ...]:
        return tuple(sorted({j for t in self.terms for j in t.loci}))

    def estimate(self, term: TermIndex) -> float:
        return float(self.estimates[self.terms.index(term)])

    def to_dict(self) -> dict:
        rows = []
        for i, t in enumerate(self.terms):
            row = {"term": t.label, "estimate": float(self.estimates[i])}
            if self.t_stats is not None:
                row["t_stat"] = float(self.t_stats[i])
            if self.p_values is not None:
                row["p_value"] = float(self.p_values[i])
            rows.append(row)
        return {"provenance": self.provenance, "warning": self.warning, "terms": rows}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["term", "estimate"])
        for t, b in zip(self.terms, self.estimates):
            w.writerow([t.label, repr(float(b))])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionModel":
        rows = d["terms"]
        get = lambda key: [r[key] for r in rows] if rows and key in rows[0] else None  # noqa: E731
        return cls(
            terms=tuple(TermIndex.parse(r["term"]) for r in rows),
            estimates=np.array([r["estimate"] for r in rows], dtype=float),
            provenance=d["provenance"],
            t_stats=get("t_stat"),
            p_values=get("p_value"),
            warning=d.get("warning"),
        )

    def relabel(self, loci_map: Sequence[int]) -> "SelectionModel":
        parent = self.parent.relabel(loci_map) if self.parent is not None else None
        return SelectionModel(
            tuple(t.relabel(loci_map) for t in self.terms),
            self.estimates, self.provenance, self.t_stats, self.p_values, self.warning, parent,
        )


def lr_screen(fit: FitResult, alpha_ell: float = 1.96, top_k: int | None = None) -> SelectionModel:
    """Keep terms whose Wald statistic ``|beta_j| / se_j`` exceeds ``alpha_ell``.

    The intercept is always kept. With ``top_k`` set, the ``top_k`` largest
    statistics are kept instead of thresholding.
    """
    beta, se = np.asarray(fit.beta), np.asarray(fit.se_beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.where(beta != 0, np.sign(beta) * np.inf, 0.0))
    stat = np.abs(t)
    is_int = np.array([term.is_intercept for term in fit.terms])
    if top_k is None:
        keep = stat > alpha_ell
    else:
        cand = np.flatnonzero(~is_int & (stat > 0))
        cand = cand[np.argsort(-stat[cand], kind="stable")][:top_k]
        keep = np.zeros(stat.shape, dtype=bool)
        keep[cand] = True
    keep |= is_int
    idx = np.flatnonzero(keep)
    pvals = 2.0 * stats.norm.sf(stat[idx])
    return SelectionModel(
        tuple(fit.terms[i] for i in idx), beta[idx], "LR", t_stats=t[idx], p_values=pvals,
    )


def slr_screen(Y, G, config: ScreenConfig | None = None, loci: Sequence[int] | None = None) -> SelectionModel:
    """Two-stage screening: low-rank Wald filter, then CV Lasso on the survivors.

    ``loci`` restricts the analysis to those 1-based loci of ``G`` (the
    low-rank model is then fit over ``len(loci)`` loci) and reports terms
    under their original numbers. The stage-1 set is kept as ``.parent``.
    """
    config = config or ScreenConfig()
    Gv = genotype_values(G)
    if loci is not None:
        loci = [int(j) for j in loci]
        if sorted(set(loci)) != loci:
            raise ValueError("loci must be strictly increasing")
        Gv = Gv[:, np.asarray(loci, dtype=int) - 1]
    Y = np.asarray(Y, dtype=float)
    d_r = effective_dim(Gv.shape[1], config.rank)
    if Gv.shape[0] <= d_r:
        raise InsufficientSampleError(
            f"n={Gv.shape[0]} does not exceed d_r={d_r} for a rank-{config.rank} model on {Gv.shape[1]} loci"
        )

    grid = config.lambda_ell_grid
    lam = cv_lambda_ell(Y, Gv, config.rank, grid, config.cv_folds, config.seed, config.fit_options)
    fit = fit_lowrank(Y, Gv, config.rank, lam, config.fit_options)
    log.debug("low-rank stage: lambda_ell=%.4g, converged=%s", lam, fit.converged)
    lr = lr_screen(fit, config.alpha_ell, config.top_k)

    if len(lr.effects) == 0:
        out = SelectionModel(
            lr.terms, lr.estimates, "SLR", warning="no terms survived low-rank screening", parent=lr,
        )
    else:
        design = build_design(Gv, lr.terms)
        lam_s, _, _ = cv_lasso(design, Y, config.lambda_s_grid, config.cv_folds, config.seed,
                               tag="slr-lasso-cv")
        coef = lasso_fit(design, Y, lam_s)
        keep = [i for i, t in enumerate(design.terms) if t.is_intercept or coef[i] != 0.0]
        out = SelectionModel(
            tuple(design.terms[i] for i in keep), coef[keep], "SLR",
            warning=None if len(keep) > 1 else "lasso stage removed every term", parent=lr,
        )
    return out.relabel(loci) if loci is not None else out
