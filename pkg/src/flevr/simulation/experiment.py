"""Replicated selection experiments driven by a JSON configuration."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..missingness import chain_violations
from ..selection import SelectionConfig, augment, choose_k_q, select_detailed
from .metrics import evaluate, replace_missing, selection_metrics
from .scenarios import SCENARIOS, ScenarioError, amputation_spec, gen_scenario, optimal_auc, scenario_spec

REPLICATE_COLUMNS = [
    "scenario", "p", "n", "missing_prop", "mode", "replicate", "seed", "k_used", "q_used",
    "initial_set", "final_set", "n_selected", "n_false", "fdp", "sensitivity", "specificity",
    "test_auc", "chain_violations", "donor_violations",
]
AGGREGATE_COLUMNS = [
    "scenario", "p", "n", "missing_prop", "mode", "replicates",
    "mean_sensitivity", "se_sensitivity", "mean_specificity", "se_specificity",
    "mean_test_auc", "se_test_auc", "optimal_auc", "mean_fdp", "se_fdp",
    "mean_n_selected", "prob_false_exceeds_k",
]
PROBS_COLUMNS = ["scenario", "p", "n", "missing_prop", "mode", "feature", "active", "selection_prob"]


class ExperimentConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModeSpec:
    """An error-control mode; ``k``, ``q`` and ``target_specificity`` may vary with ``n``."""

    mode: str
    k: object = None
    q: object = None
    f: Optional[float] = None
    target_specificity: object = None

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"mode", "k", "q", "f", "target_specificity"}
        if unknown:
            raise ExperimentConfigError(f"unknown mode keys {sorted(unknown)}")
        mode = d.get("mode")
        if mode not in ("gfwer", "pfp", "fdr"):
            raise ExperimentConfigError(f"unknown mode '{mode}'")
        spec = cls(mode, d.get("k"), d.get("q"), d.get("f"), d.get("target_specificity"))
        if mode == "gfwer" and spec.k is None and spec.target_specificity is None:
            raise ExperimentConfigError("gfwer mode needs k or target_specificity")
        if mode == "pfp" and spec.q is None and spec.target_specificity is None:
            raise ExperimentConfigError("pfp mode needs q or target_specificity")
        if mode == "fdr" and spec.f is None:
            raise ExperimentConfigError("fdr mode needs f")
        return spec

    @staticmethod
    def _at(value, n):
        if isinstance(value, dict):
            if str(n) not in value:
                raise ExperimentConfigError(f"no value given for n={n}")
            return value[str(n)]
        return value

    def resolve(self, n: int, p: int, s0: int) -> tuple:
        """Concrete ``(k, q, f)`` for sample size ``n``."""
        k, q = self._at(self.k, n), self._at(self.q, n)
        sp = self._at(self.target_specificity, n)
        if sp is not None:
            k_sp, q_sp = choose_k_q(n, p, s0, float(sp))
            k = k_sp if k is None else k
            q = q_sp if q is None else q
        if self.mode == "gfwer":
            return int(k), None, None
        if self.mode == "pfp":
            return None, float(q), None
        return None, None, float(self.f)

    def label(self, n: int, p: int, s0: int) -> str:
        k, q, f = self.resolve(n, p, s0)
        if self.mode == "gfwer":
            return f"gfwer(k={k})"
        if self.mode == "pfp":
            return f"pfp(q={q:.3f})"
        return f"fdr(f={f:g})"


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: tuple
    n: tuple
    missing_prop: tuple
    modes: tuple
    replicates: int
    seed: int
    p: Optional[int] = None
    beta: Optional[tuple] = None
    alpha: float = 0.05
    M: int = 10
    K: int = 5
    K_inner: int = 3
    budget: Optional[int] = None
    max_iter: int = 20
    donors: int = 5
    evaluate: bool = True
    test_n: int = 10_000
    mc_n: int = 100_000
    n_jobs: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "scenario" in d:
            d["scenarios"] = [d.pop("scenario")]
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ExperimentConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("scenarios", "n", "modes", "replicates", "seed"):
            if key not in d:
                raise ExperimentConfigError(f"config is missing '{key}'")

        def as_tuple(v):
            return tuple(v) if isinstance(v, (list, tuple)) else (v,)

        scen = tuple(int(s) for s in as_tuple(d["scenarios"]))
        for s in scen:
            if s not in SCENARIOS:
                raise ExperimentConfigError(f"invalid scenario id {s}; choose from 1-8")
        modes = tuple(ModeSpec.from_dict(m) for m in as_tuple(d["modes"]))
        props = tuple(float(m) for m in as_tuple(d.get("missing_prop", 0.0)))
        if any(not 0 <= m < 1 for m in props):
            raise ExperimentConfigError("missing_prop values must lie in [0, 1)")
        reps = int(d["replicates"])
        if reps < 0:
            raise ExperimentConfigError("replicates must be nonnegative")
        if int(d["seed"]) < 0:
            raise ExperimentConfigError("seed must be nonnegative")
        alpha = float(d.get("alpha", 0.05))
        if not 0 < alpha < 1:
            raise ExperimentConfigError("alpha must lie in (0, 1)")
        out = dict(d)
        out.update(scenarios=scen, n=tuple(int(v) for v in as_tuple(d["n"])), missing_prop=props,
                   modes=modes, replicates=reps, seed=int(d["seed"]), alpha=alpha)
        if d.get("beta") is not None:
            out["beta"] = tuple(float(b) for b in d["beta"])
        cfg = cls(**out)
        try:
            for s in scen:
                scenario_spec(s, cfg.p, 0.0, cfg.beta)
        except ScenarioError as exc:
            raise ExperimentConfigError(str(exc)) from exc
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ExperimentConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(d)

    def selection_config(self, measure="auc") -> SelectionConfig:
        return SelectionConfig(measure=measure, K=self.K, budget=self.budget, M=self.M,
                               alpha=self.alpha, mode="gfwer", k=0, K_inner=self.K_inner,
                               max_iter=self.max_iter, donors=self.donors)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ";".join(str(j + 1) for j in v)
    return str(v)


def donor_violations(dataset, imputations) -> int:
    """Imputed cells whose value was never observed in their column."""
    if dataset.is_complete:
        return 0
    bad = 0
    data = np.column_stack([dataset.outcome, dataset.features])
    for c in range(data.shape[1]):
        obs = dataset.mask[:, c] == 1
        if obs.all():
            continue
        pool = np.unique(data[obs, c])
        for imp in imputations:
            filled = np.column_stack([imp.outcome, imp.features])[~obs, c]
            bad += int((~np.isin(filled, pool)).sum())
    return bad


def run_replicate(cfg: ExperimentConfig, scenario: int, n: int, missing_prop: float, r: int) -> list[dict]:
    """All mode rows for replicate ``r`` of one cell."""
    spec = scenario_spec(scenario, cfg.p, missing_prop, cfg.beta)
    ss = np.random.SeedSequence([cfg.seed, r])
    data_seed, sel_seed, test_seed, eval_seed = (int(c.generate_state(1)[0]) for c in ss.spawn(4))
    ds, truth = gen_scenario(spec, n, data_seed)
    run = select_detailed(ds, cfg.selection_config(), sel_seed)
    tests, init = run.result.tests, run.result.initial_set
    chain = amputation_spec(spec).monotone_chain
    base = {
        "scenario": scenario, "p": spec.p, "n": n, "missing_prop": missing_prop, "replicate": r,
        "seed": data_seed,
        "chain_violations": chain_violations(ds, chain) if missing_prop > 0 else 0,
        "donor_violations": donor_violations(ds, run.imputations),
    }
    test = gen_scenario(replace_missing(spec), cfg.test_n, test_seed)[0] if cfg.evaluate else None
    cache = {}
    rows = []
    for m in cfg.modes:
        k, q, f = m.resolve(n, spec.p, spec.s0)
        if k is not None:
            k = min(k, spec.p - len(init))
        res = augment(tests.p_adjusted, init, m.mode, cfg.alpha, k=k, q=q, f=f)
        sel = res.final_set
        if sel not in cache:
            if cfg.evaluate:
                cache[sel] = evaluate(sel, truth, spec, run.imputations, test=test, seed=eval_seed,
                                      K_inner=cfg.K_inner)
            else:
                cache[sel] = {"test_auc": None, **selection_metrics(sel, truth, spec.p)}
        met = cache[sel]
        rows.append({
            **base, "mode": m.label(n, spec.p, spec.s0), "k_used": res.k_used, "q_used": res.q_used,
            "initial_set": res.initial_set, "final_set": sel, **met,
        })
    return rows


def _mean_se(values):
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return None, None
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def aggregate(rows: list[dict], cfg: ExperimentConfig) -> tuple[list[dict], list[dict]]:
    """Per-cell summaries and per-feature selection frequencies, ordered as first seen."""
    groups: dict = {}
    for row in rows:
        key = (row["scenario"], row["p"], row["n"], row["missing_prop"], row["mode"])
        groups.setdefault(key, []).append(row)
    opt_cache = {}
    agg, probs = [], []
    for key, grp in groups.items():
        scenario, p, n, prop, mode = key
        spec = scenario_spec(scenario, cfg.p, 0.0, cfg.beta)
        if cfg.evaluate and (scenario, p) not in opt_cache:
            opt_seed = int(np.random.SeedSequence([cfg.seed, 2 ** 31 + scenario]).generate_state(1)[0])
            opt_cache[(scenario, p)] = optimal_auc(spec, cfg.mc_n, opt_seed)
        out = {"scenario": scenario, "p": p, "n": n, "missing_prop": prop, "mode": mode,
               "replicates": len(grp)}
        for name in ("sensitivity", "specificity", "test_auc", "fdp"):
            out[f"mean_{name}"], out[f"se_{name}"] = _mean_se(r[name] for r in grp)
        out["optimal_auc"] = opt_cache.get((scenario, p))
        out["mean_n_selected"] = _mean_se(r["n_selected"] for r in grp)[0]
        if mode.startswith("gfwer"):
            k = int(mode[len("gfwer(k="):-1])
            out["prob_false_exceeds_k"] = float(np.mean([r["n_false"] > k for r in grp]))
        else:
            out["prob_false_exceeds_k"] = None
        agg.append(out)
        truth = set(spec.truth)
        for j in range(p):
            probs.append({"scenario": scenario, "p": p, "n": n, "missing_prop": prop, "mode": mode,
                          "feature": j + 1, "active": int(j in truth),
                          "selection_prob": float(np.mean([j in r["final_set"] for r in grp]))})
    return agg, probs


def _write(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def run_experiment(config, outdir, n_jobs: Optional[int] = None) -> dict:
    """Run every (scenario, n, missing proportion) cell and write the result CSVs.

    Replicate ``r`` draws all of its randomness from ``(seed, r)``, so cells
    that differ only in missing proportion share the same complete data.
    ``replicates.csv`` is flushed after each replicate; ``aggregate.csv`` and
    ``selection_probs.csv`` are written at the end. Returns the paths.
    """
    cfg = config if isinstance(config, ExperimentConfig) else (
        ExperimentConfig.from_dict(config) if isinstance(config, dict) else ExperimentConfig.load(config))
    jobs = cfg.n_jobs if n_jobs is None else n_jobs
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rep_path = outdir / "replicates.csv"
    cells = [(s, n, m) for s in cfg.scenarios for n in cfg.n for m in cfg.missing_prop]
    tasks = [(s, n, m, r) for s, n, m in cells for r in range(cfg.replicates)]
    all_rows = []
    with open(rep_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLICATE_COLUMNS)
        fh.flush()
        if jobs == 1:
            results = (run_replicate(cfg, *t) for t in tasks)
        else:
            from joblib import Parallel, delayed

            results = Parallel(n_jobs=jobs, return_as="generator")(
                delayed(run_replicate)(cfg, *t) for t in tasks)
        for rows in results:
            for row in rows:
                w.writerow([_fmt(row.get(c)) for c in REPLICATE_COLUMNS])
            fh.flush()
            all_rows.extend(rows)
    agg, probs = aggregate(all_rows, cfg)
    _write(outdir / "aggregate.csv", AGGREGATE_COLUMNS, agg)
    _write(outdir / "selection_probs.csv", PROBS_COLUMNS, probs)
    return {"replicates": rep_path, "aggregate": outdir / "aggregate.csv",
            "selection_probs": outdir / "selection_probs.csv"}
