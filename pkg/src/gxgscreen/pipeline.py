"""Extended Screen-and-Clean (ESC) and the Screen-and-Clean (SC) baseline.

Screening runs on one random half of the data, cleaning on the other:

1. main-effect Lasso over all loci picks a locus set and its pairwise expansion;
2. the expansion is screened, by SLR-screening (ESC) or a single Lasso (SC);
3. least squares on the held-out half with Bonferroni-corrected t-tests.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from ._util import as_response, derive_rng
from .design import TermIndex, build_design, expanded_terms, genotype_values
from .errors import CleaningInfeasibleError, ConfigError, GxGError, InsufficientSampleError
from .lasso import cv_lasso, lasso_fit
from .screen import ScreenConfig, SelectionModel, slr_screen

log = logging.getLogger(__name__)

METHODS = ("ESC", "SC")


@dataclass(frozen=True)
class EscConfig:
    split_fraction: float = 0.5
    seed: int = 0
    lambda_m_grid: tuple[float, ...] | None = None
    screen: ScreenConfig = field(default_factory=ScreenConfig)
    alpha: float = 0.05
    method: str = "ESC"
    cv_folds: int = 10

    def __post_init__(self):
        if not (0.0 < self.split_fraction < 1.0):
            raise ConfigError(f"split_fraction must lie in (0, 1), got {self.split_fraction}")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.lambda_m_grid is not None:
            grid = tuple(float(x) for x in np.atleast_1d(self.lambda_m_grid))
            if not grid or any(not np.isfinite(x) or x < 0 for x in grid):
                raise ConfigError("lambda_m_grid must be non-empty with finite values >= 0")
            object.__setattr__(self, "lambda_m_grid", grid)

    @classmethod
    def for_method(cls, name: str, **kw) -> "EscConfig":
        """Config for ``"SC"``, ``"ESC(1)"``, ``"ESC(2)"``, ... ."""
        name = name.strip().upper()
        if name == "SC":
            return cls(method="SC", **kw)
        if name.startswith("ESC(") and name.endswith(")"):
            rank = int(name[4:-1])
            screen = replace(kw.pop("screen", ScreenConfig()), rank=rank)
            return cls(method="ESC", screen=screen, **kw)
        raise ConfigError(f"unknown method {name!r}; use SC or ESC(r)")

    @property
    def label(self) -> str:
        return "SC" if self.method == "SC" else f"ESC({self.screen.rank})"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["label"] = self.label
        return d


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response, genotypes and the original row numbers they came from."""

    Y: np.ndarray
    G: np.ndarray
    rows: np.ndarray

    @property
    def n(self) -> int:
        return self.Y.shape[0]


@dataclass(frozen=True, eq=False)
class ExpandedTerms:
    loci: tuple[int, ...]
    terms: tuple[TermIndex, ...]
    warning: str | None = None


@dataclass(frozen=True, eq=False)
class EscResult:
    selected: SelectionModel
    stage_trace: dict
    config: EscConfig | None = None
    seed: int | None = None

    @property
    def effects(self):
        return self.selected.effects

    def to_dict(self) -> dict:
        return {
            "method": self.config.label if self.config else None,
            "seed": self.seed,
            "selected": self.selected.to_dict(),
            "stage_trace": self.stage_trace,
            "config": self.config.to_dict() if self.config else None,
        }

    def table(self) -> str:
        """Plain-text table of the selected terms."""
        lines = [f"{'term':<14}{'estimate':>12}{'t':>10}{'p-value':>12}"]
        m = self.selected
        for i, t in enumerate(m.terms):
            tt = m.t_stats[i] if m.t_stats is not None else float("nan")
            pv = m.p_values[i] if m.p_values is not None else float("nan")
            lines.append(f"{t.label:<14}{m.estimates[i]:>12.4f}{tt:>10.3f}{pv:>12.3g}")
        return "\n".join(lines) + "\n"


def split_data(Y, G, fraction: float = 0.5, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random partition into a screening part of size ``floor(fraction n)`` and the rest."""
    Gv = genotype_values(G)
    n = Gv.shape[0]
    Y = as_response(Y, n)
    if n < 4:
        raise InsufficientSampleError(f"need at least 4 observations to split, got {n}")
    if not (0.0 < fraction < 1.0):
        raise ConfigError(f"split_fraction must lie in (0, 1), got {fraction}")
    n1 = int(np.floor(fraction * n))
    if n1 < 2 or n - n1 < 2:
        raise InsufficientSampleError(f"split of n={n} at fraction {fraction} leaves a part with < 2 rows")
    perm = derive_rng(seed, "split").permutation(n)
    i1, i2 = np.sort(perm[:n1]), np.sort(perm[n1:])
    return Dataset(Y[i1], Gv[i1], i1), Dataset(Y[i2], Gv[i2], i2)


def step1_main_lasso(D1: Dataset, lambda_m_grid=None, cv_folds: int = 10, seed: int = 0) -> ExpandedTerms:
    """Main-effect Lasso on every locus; returns the selected loci and their pairwise expansion."""
    p = D1.G.shape[1]
    design = build_design(D1.G, [TermIndex.intercept()] + [TermIndex.main(j) for j in range(1, p + 1)])
    lam, _, _ = cv_lasso(design, D1.Y, lambda_m_grid, cv_folds, seed, tag="main-lasso-cv")
    coef = lasso_fit(design, D1.Y, lam)
    loci = tuple(t.loci[0] for t, b in zip(design.terms, coef) if not t.is_intercept and b != 0.0)
    warning = None if loci else "main-effect lasso selected no loci"
    return ExpandedTerms(loci, expanded_terms(loci), warning)


def step2_screen(D1: Dataset, expanded: ExpandedTerms, method: str = "ESC",
                 screen: ScreenConfig | None = None, cv_folds: int = 10, seed: int = 0) -> SelectionModel:
    """Screen the expanded term set on the screening half."""
    screen = screen or ScreenConfig()
    if not expanded.loci:
        return SelectionModel((TermIndex.intercept(),), np.array([D1.Y.mean()]),
                              "SLR" if method == "ESC" else "Lasso", warning=expanded.warning)
    if method == "ESC":
        cfg = replace(screen, seed=seed, cv_folds=cv_folds)
        return slr_screen(D1.Y, D1.G, cfg, loci=expanded.loci)
    if method == "SC":
        design = build_design(D1.G, expanded.terms)
        lam, _, _ = cv_lasso(design, D1.Y, screen.lambda_s_grid, cv_folds, seed, tag="sc-lasso-cv")
        coef = lasso_fit(design, D1.Y, lam)
        keep = [i for i, t in enumerate(design.terms) if t.is_intercept or coef[i] != 0.0]
        return SelectionModel(tuple(design.terms[i] for i in keep), coef[keep], "Lasso",
                              warning=None if len(keep) > 1 else "lasso screening removed every term")
    raise ConfigError(f"method must be one of {METHODS}, got {method!r}")


def _independent_columns(X, tol=1e-8):
    """Greedy left-to-right choice of linearly independent columns."""
    keep = []
    Q = np.empty((X.shape[0], 0))
    for j in range(X.shape[1]):
        x = X[:, j]
        resid = x - Q @ (Q.T @ x)
        # second pass keeps Gram-Schmidt stable
        resid -= Q @ (Q.T @ resid)
        nx = np.linalg.norm(x)
        nr = np.linalg.norm(resid)
        if nr > tol * nx:
            keep.append(j)
            Q = np.hstack([Q, (resid / nr)[:, None]])
    return keep


def clean_threshold(n2: int, n_selected: int, alpha: float) -> float:
    """Two-sided Bonferroni t threshold with ``n2 - 1 - n_selected`` degrees of freedom."""
    df = n2 - 1 - n_selected
    return float(stats.t.isf(alpha / (2 * max(n_selected, 1)), df))


def step3_clean(D2: Dataset, S: SelectionModel, alpha: float = 0.05) -> EscResult:
    """Least squares on the cleaning half; keep terms passing Bonferroni t-tests.

    ``|S|`` counts non-intercept terms. Aliased columns are dropped, later
    ones first, before testing; the Bonferroni divisor stays at ``|S|``.
    """
    effects = [t for t in S.terms if not t.is_intercept]
    s = len(effects)
    n2 = D2.n
    if n2 <= 1 + s:
        raise CleaningInfeasibleError(
            f"cleaning needs n2 > 1 + |S|, got n2={n2} and |S|={s}"
        )
    design = build_design(D2.G, [TermIndex.intercept()] + effects)
    keep = _independent_columns(design.X)
    dropped = [design.terms[j].label for j in range(len(design.terms)) if j not in keep]
    warning = None
    if dropped:
        warning = "aliased columns dropped before cleaning: " + ", ".join(dropped)
        log.warning(warning)
    X = design.X[:, keep]
    terms = [design.terms[j] for j in keep]
    coef, *_ = np.linalg.lstsq(X, D2.Y, rcond=None)
    resid = D2.Y - X @ coef
    df = n2 - X.shape[1]
    sigma2 = float(resid @ resid) / df
    XtX_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(XtX_inv) * sigma2, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, 0.0)
    pvals = 2.0 * stats.t.sf(np.abs(t), df)
    thresh = float(stats.t.isf(alpha / (2 * max(s, 1)), df))
    chosen = [i for i, term in enumerate(terms) if term.is_intercept or abs(t[i]) > thresh]
    M = SelectionModel(
        tuple(terms[i] for i in chosen), coef[chosen], "Cleaned",
        t_stats=t[chosen], p_values=pvals[chosen], warning=warning, parent=S,
    )
    trace = {"S": s, "M": len(M.effects), "clean_df": int(df), "clean_threshold": thresh}
    return EscResult(M, trace)


def run_esc(Y, G, config: EscConfig | None = None) -> EscResult:
    """Split, screen on the first part, clean on the second."""
    config = config or EscConfig()
    Gv = genotype_values(G)
    Y = as_response(Y, Gv.shape[0])
    seed = config.seed
    trace = {"n": int(Gv.shape[0]), "p": int(Gv.shape[1])}
    t0 = time.perf_counter()

    def stage(name, fn, *args, **kw):
        t = time.perf_counter()
        try:
            out = fn(*args, **kw)
        except GxGError as exc:
            exc.stage = name
            raise
        log.info("stage %s done in %.2fs", name, time.perf_counter() - t)
        return out

    D1, D2 = stage("split", split_data, Y, Gv, config.split_fraction, seed)
    trace.update(n_screen=D1.n, n_clean=D2.n)
    exp = stage("main-lasso", step1_main_lasso, D1, config.lambda_m_grid, config.cv_folds, seed)
    trace.update(G=len(exp.loci), expanded=len(exp.terms) - 1, G_loci=list(exp.loci))
    log.info("main-effect lasso kept %d loci, %d expanded terms", len(exp.loci), len(exp.terms) - 1)
    S = stage("screen", step2_screen, D1, exp, config.method, config.screen, config.cv_folds, seed)
    log.info("%s screening kept %d terms", config.label, len(S.effects))
    cleaned = stage("clean", step3_clean, D2, S, config.alpha)
    trace.update(cleaned.stage_trace)
    log.info("%s finished in %.2fs", config.label, time.perf_counter() - t0)
    warnings = [w for w in (exp.warning, S.warning, cleaned.selected.warning) if w]
    trace["warnings"] = warnings
    return EscResult(cleaned.selected, trace, config, seed)
