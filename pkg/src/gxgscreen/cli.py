"""Command-line entry point: ``gxgscreen <subcommand> [options]``.

Every subcommand accepts ``--config FILE.json``; keys in the file use the
long option names (dashes or underscores) and are overridden by flags given
on the command line. Results go to files, logs to standard error.

Exit status: 0 ok, 2 usage or configuration error, 3 unreadable input,
4 infeasible problem (too few samples), 5 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .design import read_genotype_csv, read_phenotype_csv, write_genotype_csv, write_phenotype_csv
from .errors import ConfigError, GxGError, IngestionError
from .lowrank import FitOptions, cv_lambda_ell, default_lambda_grid, fit_lowrank
from .pipeline import EscConfig, run_esc
from .screen import ScreenConfig, slr_screen
from .simulate import MODELS, SimSpec, benchmark_csv, realized_block_correlation, run_benchmark, simulate

log = logging.getLogger("gxgscreen")

EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4, 5

# Defaults per subcommand. argparse leaves every option at None so that the
# merge below can tell "not given" apart from "given with the default value".
DEFAULTS = {
    "simulate": dict(model="M1", beta=1.0, n=400, p=100, block_size=5, within_block_corr=0.3,
                     sigma_eps=1.0, seed=0, out_dir="."),
    "fit-lowrank": dict(genotypes=None, phenotype=None, rank=1, lambda_ell=None, lambda_ell_grid=None,
                        cv_folds=10, seed=0, max_iter=200, hessian="auto", output="fit.json"),
    "screen": dict(genotypes=None, phenotype=None, rank=1, alpha_ell=1.96, top_k=None,
                   lambda_ell_grid=None, lambda_s_grid=None, cv_folds=10, seed=0, output="screen.json"),
    "esc": dict(genotypes=None, phenotype=None, method="ESC(1)", split_fraction=0.5, alpha=0.05,
                alpha_ell=1.96, top_k=None, lambda_m_grid=None, lambda_ell_grid=None, lambda_s_grid=None,
                cv_folds=10, seed=0, output="esc.json", table=None),
    "bench": dict(models=["M2"], betas=[0.5], methods=["SC", "ESC(1)", "ESC(2)"], n=400, p=100,
                  replicates=50, seed=0, jobs=1, full_scale=False, output="bench.csv"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(s):
    return [float(x) for x in s.split(",") if x.strip()]


def _strings(s):
    return [x.strip() for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of option values (flags override it)")
    common.add_argument("--seed", type=int, help="root seed for every random component")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    common.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--genotypes", type=Path, help="genotype CSV: header of SNP labels, one row per individual")
    data.add_argument("--phenotype", type=Path, help="single-column phenotype CSV")
    data.add_argument("--cv-folds", type=int, help="folds for cross-validation (default 10)")

    p = _Parser(prog="gxgscreen", description="Sparse and low-rank screening of pairwise genetic interactions.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="write one simulated dataset to CSV")
    s.add_argument("--model", choices=MODELS)
    s.add_argument("--beta", type=float, help="effect size multiplier")
    s.add_argument("--n", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--block-size", type=int)
    s.add_argument("--within-block-corr", type=float)
    s.add_argument("--sigma-eps", type=float)
    s.add_argument("--out-dir", type=Path, help="directory for genotypes.csv, phenotype.csv, truth.json")

    f = sub.add_parser("fit-lowrank", parents=[common, data], help="fit the rank-r interaction model")
    f.add_argument("--rank", type=int, help="1 or an even number 2k")
    f.add_argument("--lambda-ell", type=float, help="ridge penalty; chosen by CV when omitted")
    f.add_argument("--lambda-ell-grid", type=_floats, help="comma-separated CV grid")
    f.add_argument("--max-iter", type=int)
    f.add_argument("--hessian", choices=("auto", "gauss-newton"))
    f.add_argument("--output", type=Path, help="result JSON")

    c = sub.add_parser("screen", parents=[common, data], help="SLR-screening of all main effects and pairs")
    c.add_argument("--rank", type=int)
    c.add_argument("--alpha-ell", type=float, help="Wald threshold for the low-rank stage")
    c.add_argument("--top-k", type=int, help="keep the K largest statistics instead of thresholding")
    c.add_argument("--lambda-ell-grid", type=_floats)
    c.add_argument("--lambda-s-grid", type=_floats)
    c.add_argument("--output", type=Path, help="result JSON; a term,estimate CSV is written next to it")

    e = sub.add_parser("esc", parents=[common, data], help="run ESC(r) or the SC baseline")
    e.add_argument("--method", help="SC, ESC(1), ESC(2), ...")
    e.add_argument("--split-fraction", type=float)
    e.add_argument("--alpha", type=float, help="family-wise level for cleaning")
    e.add_argument("--alpha-ell", type=float)
    e.add_argument("--top-k", type=int)
    e.add_argument("--lambda-m-grid", type=_floats)
    e.add_argument("--lambda-ell-grid", type=_floats)
    e.add_argument("--lambda-s-grid", type=_floats)
    e.add_argument("--output", type=Path, help="result JSON")
    e.add_argument("--table", type=Path, help="selected-terms table (default: next to the JSON)")

    b = sub.add_parser("bench", parents=[common], help="replicated method comparison on simulated data")
    b.add_argument("--models", type=_strings, help="comma-separated, e.g. M2,M3")
    b.add_argument("--betas", type=_floats, help="comma-separated effect sizes")
    b.add_argument("--methods", type=_strings, help="comma-separated, e.g. SC,ESC(1)")
    b.add_argument("--n", type=int)
    b.add_argument("--p", type=int)
    b.add_argument("--replicates", type=int)
    b.add_argument("--jobs", type=int, help="worker processes for replicates")
    b.add_argument("--full-scale", action="store_const", const=True,
                   help="p=1000 and 100 replicates unless given explicitly")
    b.add_argument("--output", type=Path, help="CSV path")
    return p


def merge_options(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the JSON config, then explicit flags."""
    opts = dict(DEFAULTS[command])
    explicit = set()
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise IngestionError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError(f"config {args.config} must hold a JSON object")
        for key, value in cfg.items():
            k = key.replace("-", "_")
            if k not in opts:
                raise ConfigError(f"unknown config key {key!r} for '{command}'")
            opts[k] = value
            explicit.add(k)
    for k in opts:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
            explicit.add(k)
    if command == "bench" and opts["full_scale"]:
        for k, v in (("p", 1000), ("replicates", 100)):
            if k not in explicit:
                opts[k] = v
    return opts


def _grid(x, name):
    if x is None:
        return None
    try:
        return tuple(float(v) for v in np.atleast_1d(x))
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of numbers") from None


def _int(opts, name, minimum=None):
    v = opts[name]
    if v is None:
        return None
    if isinstance(v, bool) or not float(v).is_integer():
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    v = int(v)
    if minimum is not None and v < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {v}")
    return v


def _require_inputs(opts):
    for key in ("genotypes", "phenotype"):
        if not opts[key]:
            raise ConfigError(f"--{key} is required")


def _load(opts):
    G = read_genotype_csv(opts["genotypes"])
    Y = read_phenotype_csv(opts["phenotype"], G.n)
    log.info("read %d individuals x %d loci", G.n, G.p)
    return G, Y


def _screen_config(opts, rank):
    return ScreenConfig(
        alpha_ell=float(opts["alpha_ell"]), rank=rank,
        lambda_ell_grid=_grid(opts["lambda_ell_grid"], "lambda_ell_grid"),
        lambda_s_grid=_grid(opts["lambda_s_grid"], "lambda_s_grid"),
        cv_folds=_int(opts, "cv_folds", 2), seed=_int(opts, "seed"), top_k=_int(opts, "top_k", 0),
    )


def _write(path, text):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_simulate(opts):
    spec = SimSpec(n=_int(opts, "n", 1), p=_int(opts, "p", 1), model=opts["model"], beta=float(opts["beta"]),
                   block_size=_int(opts, "block_size", 1), within_block_corr=float(opts["within_block_corr"]),
                   sigma_eps=float(opts["sigma_eps"]), seed=_int(opts, "seed"))
    G, Y, truth = simulate(spec)
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_genotype_csv(out / "genotypes.csv", G)
    write_phenotype_csv(out / "phenotype.csv", Y)
    meta = {
        "spec": {k: getattr(spec, k) for k in spec.__dataclass_fields__},
        "m0": sorted(t.label for t in truth.m0),
        "coefficients": {t.label: w for t, w in sorted(truth.coefficients.items())},
        "realized_correlation": realized_block_correlation(G, spec.block_size),
    }
    _write(out / "truth.json", _dumps(meta))


def cmd_fit(opts):
    rank = _int(opts, "rank", 1)
    fo = FitOptions(seed=_int(opts, "seed"), max_iter=_int(opts, "max_iter", 1), hessian=opts["hessian"])
    lam = opts["lambda_ell"]
    if lam is not None and not (np.isfinite(lam) and lam >= 0):
        raise ConfigError(f"lambda_ell must be finite and >= 0, got {lam}")
    grid = _grid(opts["lambda_ell_grid"], "lambda_ell_grid")
    folds = _int(opts, "cv_folds", 2)
    _require_inputs(opts)
    G, Y = _load(opts)
    t = time.perf_counter()
    if lam is None:
        lam = cv_lambda_ell(Y, G, rank, grid, folds, fo.seed, fo)
        log.info("cross-validated lambda_ell = %.4g", lam)
    fit = fit_lowrank(Y, G, rank, float(lam), fo)
    log.info("rank-%d fit: %d iterations, converged=%s, %.2fs", rank, fit.iterations, fit.converged,
             time.perf_counter() - t)
    d = fit.to_dict()
    d["lambda_ell_grid"] = list(grid) if grid is not None else list(default_lambda_grid(G.n, G.p))
    _write(opts["output"], _dumps(d))


def cmd_screen(opts):
    cfg = _screen_config(opts, _int(opts, "rank", 1))
    _require_inputs(opts)
    G, Y = _load(opts)
    t = time.perf_counter()
    sel = slr_screen(Y, G, cfg)
    log.info("SLR-screening: %d terms after the low-rank stage, %d after lasso, %.2fs",
             len(sel.parent.effects) if sel.parent else 0, len(sel.effects), time.perf_counter() - t)
    out = Path(opts["output"])
    d = sel.to_dict()
    d["low_rank_stage"] = sel.parent.to_dict() if sel.parent is not None else None
    _write(out, _dumps(d))
    _write(out.with_suffix(".csv"), sel.to_csv())


def cmd_esc(opts):
    base = EscConfig.for_method(str(opts["method"]))
    cfg = EscConfig(
        split_fraction=float(opts["split_fraction"]), seed=_int(opts, "seed"),
        lambda_m_grid=_grid(opts["lambda_m_grid"], "lambda_m_grid"),
        screen=_screen_config(opts, base.screen.rank), alpha=float(opts["alpha"]),
        method=base.method, cv_folds=_int(opts, "cv_folds", 2),
    )
    _require_inputs(opts)
    G, Y = _load(opts)
    res = run_esc(Y, G, cfg)
    tr = res.stage_trace
    log.info("%s: |G|=%d, |E(G)|=%d, |S|=%d, |M|=%d", cfg.label, tr["G"], tr["expanded"], tr["S"], tr["M"])
    out = Path(opts["output"])
    _write(out, _dumps(res.to_dict()))
    _write(opts["table"] or out.with_suffix(".txt"), res.table())


def cmd_bench(opts):
    models = [str(m) for m in opts["models"]]
    methods = [str(m) for m in opts["methods"]]
    betas = [float(b) for b in np.atleast_1d(opts["betas"])]
    n, p = _int(opts, "n", 1), _int(opts, "p", 1)
    reps, jobs, seed = _int(opts, "replicates", 1), _int(opts, "jobs", 1), _int(opts, "seed")
    for m in models:
        if m not in MODELS:
            raise ConfigError(f"models: unknown model {m!r}")
        SimSpec(n=n, p=p, model=m)
    for b in betas:
        if not (np.isfinite(b) and b >= 0):
            raise ConfigError(f"betas must be finite and >= 0, got {b}")
    for name in methods:
        EscConfig.for_method(name)
    t = time.perf_counter()
    cells = run_benchmark(models, betas, methods, reps, seed, n=n, p=p, n_jobs=jobs)
    log.info("benchmark of %d cells done in %.1fs", len(cells), time.perf_counter() - t)
    _write(opts["output"], benchmark_csv(cells))


COMMANDS = {"simulate": cmd_simulate, "fit-lowrank": cmd_fit, "screen": cmd_screen, "esc": cmd_esc,
            "bench": cmd_bench}


def _setup_logging(args):
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("gxgscreen")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args)
    try:
        opts = merge_options(args.command, args)
        COMMANDS[args.command](opts)
    except GxGError as exc:
        where = f" (stage {exc.stage})" if getattr(exc, "stage", None) else ""
        print(f"gxgscreen {args.command}: {type(exc).__name__}{where}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        print(f"gxgscreen {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"gxgscreen {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"gxgscreen {args.command}: {exc}", file=sys.stderr)
        return EXIT_INGEST
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
