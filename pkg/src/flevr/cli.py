"""Command-line interface: ``flevr {select,spvim,impute,simulate}``.

Exit codes: 0 on success, 2 for invalid arguments or configuration, 1 for
failures while running.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .data import DataError, load_csv
from .missingness import mice_impute, write_imputations
from .selection import SelectionConfig, SelectionError, select
from .simulation.experiment import ExperimentConfig, ExperimentConfigError, run_experiment
from .spvim import estimate_spvim


class ConfigError(Exception):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FLEVR_SEED")
    if env is None:
        return 0
    try:
        value = int(env)
    except ValueError:
        raise ConfigError(f"FLEVR_SEED must be an integer, got '{env}'") from None
    if value < 0:
        raise ConfigError("FLEVR_SEED must be nonnegative")
    return value


def _threads(args) -> int:
    n = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if n < 1:
        raise ConfigError("--threads must be at least 1")
    return n


def _load(args):
    path = Path(args.input)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    return load_csv(path, args.outcome, na_token=args.na_token)


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_select(args) -> int:
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    cfg = SelectionConfig(
        measure=args.measure, K=args.K, budget=args.budget, M=args.M, alpha=args.alpha,
        mode=args.mode, k=args.k, q=args.q, f=args.f, K_inner=args.inner_folds,
        n_jobs=_threads(args),
    )
    try:
        cfg.validate()
    except SelectionError as exc:
        raise ConfigError(str(exc)) from exc
    seed = _seed(args)
    ds = _load(args)
    if args.mode == "gfwer" and args.k > ds.p:
        raise ConfigError(f"--k must not exceed the number of features ({ds.p})")
    result = select(ds, cfg, seed)
    _write_text(args.output, result.to_json())
    names = ds.feature_names
    final = ", ".join(names[j] for j in result.final_set) or "(none)"
    print(f"final set: {final}")
    print("feature\tpsi\tadjusted_p")
    psi = result.extra["psi"]
    for j, name in enumerate(names):
        print(f"{name}\t{psi[j]:.4f}\t{result.tests.p_adjusted[j]:.4g}")
    return 0


def cmd_spvim(args) -> int:
    seed = _seed(args)
    ds = _load(args)
    if not ds.is_complete:
        raise ConfigError("spvim needs complete data; run 'impute' first or use 'select'")
    est = estimate_spvim(ds, args.measure, K=args.K, budget=args.budget, seed=seed,
                         K_inner=args.inner_folds)
    out = est.to_dict()
    out["feature_names"] = list(ds.feature_names)
    out["seed"] = seed
    _write_text(args.output, json.dumps(out, indent=2, sort_keys=True) + "\n")
    for name, v, s in zip(ds.feature_names, est.psi, est.se):
        print(f"{name}\t{v:.4f}\t(se {s:.4f})")
    return 0


def cmd_impute(args) -> int:
    if args.M < 2:
        raise ConfigError("--M must be at least 2")
    if args.donors < 1 or args.max_iter < 1:
        raise ConfigError("--donors and --max-iter must be positive")
    seed = _seed(args)
    ds = _load(args)
    imps = mice_impute(ds, args.M, args.max_iter, args.donors, seed, n_jobs=_threads(args))
    manifest = {"seed": seed, "M": args.M, "iterations": args.max_iter, "donors": args.donors,
                "input": Path(args.input).name, "outcome": args.outcome}
    paths = write_imputations(imps, args.output, manifest)
    print(f"wrote {len(paths)} imputed datasets to {args.output}")
    return 0


def cmd_simulate(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        if args.seed is not None or "seed" not in raw:
            raw["seed"] = _seed(args)
        cfg = ExperimentConfig.from_dict(raw)
    except (json.JSONDecodeError, ExperimentConfigError) as exc:
        raise ConfigError(str(exc)) from exc
    paths = run_experiment(cfg, args.output, n_jobs=_threads(args))
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flevr", description="Intrinsic variable selection with error-rate control.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="CSV file with a header row")
            p.add_argument("--outcome", required=True, help="name of the outcome column")
            p.add_argument("--na-token", default="NA", help="token marking missing cells")
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (default: $FLEVR_SEED, else 0)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap (default: available cores); results do not depend on it")

    def estimation(p):
        p.add_argument("--measure", choices=("auto", "auc", "r2"), default="auto")
        p.add_argument("--K", type=int, default=5, help="cross-fitting folds")
        p.add_argument("--budget", type=int, default=None,
                       help="number of sampled subsets (default: all subsets when p <= 12)")
        p.add_argument("--inner-folds", type=int, default=3, help="folds for the stack weights")

    p = sub.add_parser("select", help="run the full selection procedure")
    common(p)
    estimation(p)
    p.add_argument("--output", required=True, help="path of the JSON result")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--mode", choices=("gfwer", "pfp", "fdr"), default="gfwer")
    p.add_argument("--k", type=int, default=0, help="gFWER tolerance")
    p.add_argument("--q", type=float, default=None, help="PFP proportion")
    p.add_argument("--f", type=float, default=None, help="target FDR")
    p.add_argument("--M", type=int, default=10, help="imputations when data are incomplete")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("spvim", help="estimate Shapley importances on complete data")
    common(p)
    estimation(p)
    p.add_argument("--output", required=True, help="path of the JSON result")
    p.set_defaults(func=cmd_spvim)

    p = sub.add_parser("impute", help="multiple imputation with predictive mean matching")
    common(p)
    p.add_argument("--output", required=True, help="directory for imputed CSVs and manifest.json")
    p.add_argument("--M", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--donors", type=int, default=5)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("simulate", help="run a simulation experiment from a JSON config")
    common(p, needs_input=False)
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--output", required=True, help="directory for the result CSVs")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"flevr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError, ValueError, RuntimeError) as exc:
        print(f"flevr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
