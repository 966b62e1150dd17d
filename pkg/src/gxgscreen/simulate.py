"""Block-correlated genotype simulation, trait models M1-M4 and selection metrics."""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from ._util import derive_rng
from .design import GenotypeData, TermIndex, genotype_values, pair_arrays, unvecp
from .errors import ConfigError, GxGError
from .pipeline import EscConfig, run_esc
from .screen import ScreenConfig, SelectionModel

log = logging.getLogger(__name__)

MODELS = ("M1", "M2", "M3", "M4")
# smallest p each model needs
MIN_P = {"M1": 26, "M2": 21, "M3": 6, "M4": 8}

_M1_PAIRS = [((5, 6), 1.0), ((10, 11), 0.8), ((15, 16), 0.6), ((20, 21), 0.4), ((25, 26), 0.2)]
_M2_PAIRS = [((5, 6), 1.0), ((10, 11), 0.8), ((15, 16), 0.6)]
_M2_MAINS = [(20, 2.0), (21, 2.0)]

Q_LO, Q_HI = stats.norm.ppf(0.25), stats.norm.ppf(0.75)


@dataclass(frozen=True)
class SimSpec:
    n: int = 400
    p: int = 100
    model: str = "M1"
    beta: float = 1.0
    block_size: int = 5
    within_block_corr: float = 0.3
    sigma_eps: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.block_size < 1:
            raise ConfigError("n, p and block_size must be positive")
        if self.p % self.block_size:
            raise ConfigError(f"p={self.p} is not divisible by block_size={self.block_size}")
        if not (0.0 <= self.within_block_corr < 1.0):
            raise ConfigError(f"within_block_corr must lie in [0, 1), got {self.within_block_corr}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.sigma_eps < 0:
            raise ConfigError(f"sigma_eps must be >= 0, got {self.sigma_eps}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")


@dataclass(frozen=True, eq=False)
class TruthSet:
    m0: frozenset[TermIndex]
    coefficients: dict = field(default_factory=dict)
    eta_true: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class MetricReport:
    power: float
    exact_discovery: float
    fdr: float
    type1: float
    replicates: int
    records: tuple[dict, ...] = ()
    power_defined: bool = True
    failed: int = 0

    def as_dict(self) -> dict:
        return {"power": self.power, "exact_discovery": self.exact_discovery,
                "fdr": self.fdr, "type1": self.type1}


def gen_genotypes(spec: SimSpec, rng=None) -> GenotypeData:
    """Latent equicorrelated normals per block, cut at the quartiles into 0/1/2."""
    rng = rng if rng is not None else derive_rng(spec.seed, "genotypes")
    n, p, b = spec.n, spec.p, spec.block_size
    rho = spec.within_block_corr
    shared = rng.standard_normal((n, p // b))
    own = rng.standard_normal((n, p))
    z = np.sqrt(rho) * np.repeat(shared, b, axis=1) + np.sqrt(1.0 - rho) * own
    g = np.ones((n, p))
    g[z < Q_LO] = 0.0
    g[z > Q_HI] = 2.0
    return GenotypeData(g)


def truth_for(spec: SimSpec, rng=None) -> TruthSet:
    """True coefficients of ``spec.model`` scaled by ``spec.beta``."""
    if spec.p < MIN_P[spec.model]:
        raise ConfigError(f"model {spec.model} needs p >= {MIN_P[spec.model]}, got p={spec.p}")
    coefs: dict[TermIndex, float] = {}
    eta = None
    if spec.model == "M1":
        coefs = {TermIndex.interaction(*jk): w for jk, w in _M1_PAIRS}
    elif spec.model == "M2":
        coefs = {TermIndex.interaction(*jk): w for jk, w in _M2_PAIRS}
        coefs.update({TermIndex.main(j): w for j, w in _M2_MAINS})
    else:
        q = 6 if spec.model == "M3" else 8
        rows, cols = pair_arrays(q)
        if spec.model == "M3":
            vals = 0.9 ** np.abs(rows - cols).astype(float)
        else:
            rng = rng if rng is not None else derive_rng(spec.seed, "m4-eta")
            u1 = rng.uniform(-0.1, 0.9, size=rows.size)
            u2 = rng.uniform(0.5, 1.0, size=rows.size)
            vals = np.sign(u1) * u2
        eta = np.zeros((spec.p, spec.p))
        eta[:q, :q] = unvecp(vals, q)
        coefs = {TermIndex.interaction(r + 1, c + 1): float(v) for r, c, v in zip(rows, cols, vals)}
    coefs = {t: spec.beta * w for t, w in coefs.items()}
    if eta is not None:
        eta = spec.beta * eta
    m0 = frozenset(t for t, w in coefs.items() if w != 0.0)
    return TruthSet(m0, coefs, eta)


def signal(G, truth: TruthSet) -> np.ndarray:
    """Noiseless mean of the trait."""
    G = genotype_values(G)
    mu = np.zeros(G.shape[0])
    for t, w in truth.coefficients.items():
        col = G[:, t.loci[0] - 1]
        if t.kind == "interaction":
            col = col * G[:, t.loci[1] - 1]
        mu += w * col
    return mu


def gen_trait(G, spec: SimSpec, rng=None) -> tuple[np.ndarray, TruthSet]:
    G = genotype_values(G)
    truth = truth_for(spec)
    rng = rng if rng is not None else derive_rng(spec.seed, "trait-noise")
    eps = spec.sigma_eps * rng.standard_normal(G.shape[0])
    return signal(G, truth) + eps, truth


def simulate(spec: SimSpec) -> tuple[GenotypeData, np.ndarray, TruthSet]:
    G = gen_genotypes(spec)
    Y, truth = gen_trait(G, spec)
    return G, Y, truth


def _effects(model) -> frozenset:
    if isinstance(model, SelectionModel):
        return model.effects
    return frozenset(t for t in model if not t.is_intercept)


def replicate_metrics(selected, truth) -> dict:
    M = _effects(selected)
    M0 = _effects(truth.m0 if isinstance(truth, TruthSet) else truth)
    hits = len(M & M0)
    false = len(M - M0)
    return {
        "power": hits / len(M0) if M0 else float("nan"),
        "exact": float(M == M0),
        "fdp": false / len(M) if M else 0.0,
        "any_false": float(false > 0),
        "n_selected": len(M),
    }


def compute_metrics(selected: Sequence, truths: Sequence) -> MetricReport:
    """Power, exact discovery, FDR and type-I error over replicates.

    Intercepts are ignored on both sides. Replicates with an empty true set
    do not contribute to power; if every replicate is like that, power is NaN
    and ``power_defined`` is False.
    """
    if len(selected) != len(truths):
        raise ValueError(f"{len(selected)} selections for {len(truths)} truths")
    recs = [replicate_metrics(s, t) for s, t in zip(selected, truths)]
    if not recs:
        raise ValueError("no replicates")
    pw = [r["power"] for r in recs if not np.isnan(r["power"])]
    return MetricReport(
        power=float(np.mean(pw)) if pw else float("nan"),
        exact_discovery=float(np.mean([r["exact"] for r in recs])),
        fdr=float(np.mean([r["fdp"] for r in recs])),
        type1=float(np.mean([r["any_false"] for r in recs])),
        replicates=len(recs),
        records=tuple(recs),
        power_defined=bool(pw),
    )


# ----------------------------------------------------------------- bench


@dataclass(frozen=True)
class BenchCell:
    model: str
    beta: float
    method: str
    report: MetricReport


def _run_replicate(args):
    spec, methods, esc_kw = args
    G, Y, truth = simulate(spec)
    out = []
    for name in methods:
        cfg = EscConfig.for_method(name, seed=spec.seed, **esc_kw)
        try:
            res = run_esc(Y, G.values, cfg)
            out.append((name, res.effects, None))
        except GxGError as exc:
            log.warning("replicate seed=%d %s failed at %s: %s", spec.seed, name, exc.stage, exc)
            out.append((name, None, f"{type(exc).__name__}: {exc}"))
    return truth, out


def run_benchmark(models: Sequence[str], betas: Sequence[float], methods: Sequence[str] = ("SC", "ESC(1)", "ESC(2)"),
                  replicates: int = 50, base_seed: int = 0, n: int = 400, p: int = 100,
                  n_jobs: int = 1, screen: ScreenConfig | None = None, **spec_kw) -> list[BenchCell]:
    """Paired method comparison on simulated data.

    Replicate ``r`` of every cell uses seed ``base_seed + r``, so all methods
    see identical datasets. Failed runs are excluded from aggregation and
    counted in ``MetricReport.failed``.
    """
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    for name in methods:
        EscConfig.for_method(name)
    esc_kw = {"screen": screen} if screen is not None else {}
    cells = []
    for model in models:
        for beta in betas:
            specs = [SimSpec(n=n, p=p, model=model, beta=float(beta), seed=base_seed + r, **spec_kw)
                     for r in range(replicates)]
            jobs = [(s, tuple(methods), esc_kw) for s in specs]
            if n_jobs > 1:
                with ProcessPoolExecutor(n_jobs) as ex:
                    results = list(ex.map(_run_replicate, jobs))
            else:
                results = [_run_replicate(j) for j in jobs]
            for name in methods:
                sel, tru, failed = [], [], 0
                for truth, out in results:
                    effects, err = next((e, x) for m, e, x in out if m == name)
                    if err is not None:
                        failed += 1
                        continue
                    sel.append(effects)
                    tru.append(truth)
                if sel:
                    rep = compute_metrics(sel, tru)
                    rep = MetricReport(rep.power, rep.exact_discovery, rep.fdr, rep.type1,
                                       rep.replicates, rep.records, rep.power_defined, failed)
                else:
                    nan = float("nan")
                    rep = MetricReport(nan, nan, nan, nan, 0, (), False, failed)
                cells.append(BenchCell(model, float(beta), name, rep))
                log.info("%s beta=%g %s: %s (failed %d)", model, beta, name, rep.as_dict(), failed)
    return cells


def _fmt(x: float) -> str:
    return "nan" if np.isnan(x) else f"{x:.6f}"


def benchmark_csv(cells: Sequence[BenchCell]) -> str:
    """Tidy table: model, beta, method, metric, value, replicates, failed."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "beta", "method", "metric", "value", "replicates", "failed"])
    for c in cells:
        for metric, value in c.report.as_dict().items():
            w.writerow([c.model, f"{c.beta:g}", c.method, metric, _fmt(value),
                        c.report.replicates, c.report.failed])
    return buf.getvalue()


def realized_block_correlation(G, block_size: int = 5) -> dict:
    """Mean realised genotype correlation within and across blocks."""
    G = genotype_values(G)
    p = G.shape[1]
    C = np.corrcoef(G, rowvar=False)
    blk = np.arange(p) // block_size
    same = (blk[:, None] == blk[None, :]) & ~np.eye(p, dtype=bool)
    diff = blk[:, None] != blk[None, :]
    return {"within": float(np.nanmean(C[same])) if same.any() else float("nan"),
            "across": float(np.nanmean(C[diff])) if diff.any() else float("nan")}
