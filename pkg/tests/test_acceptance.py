"""End-to-end acceptance criteria; one PASS/FAIL line per criterion.

Simulation criteria store their outputs under ``tests/acceptance/runs``. A run
is reused when its stored ``config.json`` matches; set
``FLEVR_ACCEPTANCE_RERUN=1`` to recompute everything.
"""

import csv
import itertools
import json
import math
import os
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from flevr.missingness import pool_rubin
from flevr.predictiveness import auc, auc_eif, measure_estimate
from flevr.selection import choose_k_q, holm_adjust
from flevr.simulation import run_experiment
from flevr.spvim import sample_subsets, shapley_exact, shapley_solve

pytestmark = pytest.mark.acceptance

RUNS = Path(__file__).parent / "acceptance" / "runs"
REPORT = []

NULL_RUN = {"scenarios": [6], "beta": [0.0] * 6, "n": [300], "missing_prop": [0.0],
            "modes": [{"mode": "gfwer", "k": 0}, {"mode": "gfwer", "k": 1}, {"mode": "fdr", "f": 0.24}],
            "replicates": 500, "seed": 6061, "evaluate": False}
S1_RUN = {"scenarios": [1], "n": [1500], "missing_prop": [0.0], "modes": [{"mode": "gfwer", "k": 5}],
          "replicates": 100, "seed": 8080, "M": 10}
S1_MISSING_RUN = {**S1_RUN, "missing_prop": [0.4], "replicates": 50}
S1_SMALL_N_RUN = {**S1_RUN, "n": [200, 500], "modes": [{"mode": "gfwer", "k": {"200": 6, "500": 6}}]}
S2_RUN = {"scenarios": [2], "n": [1500], "missing_prop": [0.0], "modes": [{"mode": "gfwer", "k": 1}],
          "replicates": 100, "seed": 9090, "M": 10}


def report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    REPORT.append(line)
    print(line)
    assert ok, line


def run_cached(name, config):
    outdir = RUNS / name
    stamp = outdir / "config.json"
    fresh = os.environ.get("FLEVR_ACCEPTANCE_RERUN") == "1"
    if fresh or not stamp.is_file() or json.loads(stamp.read_text()) != config:
        if stamp.exists():
            stamp.unlink()
        run_experiment(config, outdir)
        stamp.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return {key: read_csv(outdir / f"{key}.csv") for key in ("replicates", "aggregate", "selection_probs")}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def holm_direct(pv):
    p = len(pv)
    order = sorted(range(p), key=lambda j: (pv[j], j))
    out = [0.0] * p
    for rank, j in enumerate(order, start=1):
        out[j] = max(min(pv[order[l - 1]] * (p - l + 1), 1.0) for l in range(1, rank + 1))
    return out


def test_criterion_01_shapley_oracle():
    rng = np.random.default_rng(1)
    worst = 0.0
    start = time.perf_counter()
    for g in range(100):
        p = (2, 3, 4)[g % 3]
        values = {s: rng.random() for m in range(p + 1) for s in itertools.combinations(range(p), m)}
        worst = max(worst, np.abs(shapley_solve(sample_subsets(p, 2 ** p), values) - shapley_exact(values)).max())
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-8 and elapsed < 1.0, f"max |diff| = {worst:.2e}, runtime {elapsed:.3f} s")


def test_criterion_02_holm():
    rng = np.random.default_rng(2)
    ok = True
    for _ in range(1000):
        p = int(rng.integers(1, 51))
        pv = rng.random(p)
        if rng.random() < 0.3:
            pv = np.round(pv, 1)
        adj = holm_adjust(pv)
        order = np.argsort(pv, kind="stable")
        ok &= adj.tolist() == holm_direct(pv.tolist())
        ok &= bool((np.diff(adj[order]) >= 0).all() and (adj <= 1).all() and (adj >= pv).all())
    report(2, ok, "1000 vectors match direct evaluation; monotone and capped at 1")


def test_criterion_03_rubin():
    rng = np.random.default_rng(3)
    exact, zero = True, True
    for _ in range(200):
        M, p = int(rng.integers(2, 12)), int(rng.integers(1, 8))
        ests = [SimpleNamespace(psi=rng.normal(size=p), variances=rng.random(p)) for _ in range(M)]
        pooled = pool_rubin(ests)
        exact &= bool((pooled.total_var == pooled.within_var + (M + 1) / M * pooled.between_var).all())
        same = pool_rubin([ests[0]] * M)
        zero &= bool((same.between_var == 0).all())
    report(3, exact and zero, f"identity exact: {exact}; identical imputations give zero between-variance: {zero}")


def test_criterion_04_auc_and_eif():
    rng = np.random.default_rng(4)
    exact, centered = True, 0.0
    for _ in range(500):
        n = int(rng.integers(2, 120))
        y = rng.integers(0, 2, n)
        y[:2] = (0, 1)
        s = np.round(rng.standard_normal(n), int(rng.integers(0, 3)))
        pos, neg = s[y == 1], s[y == 0]
        d = pos[:, None] - neg[None, :]
        exact &= auc(s, y) == ((d > 0).sum() + 0.5 * (d == 0).sum()) / d.size
        centered = max(centered, abs(auc_eif(s, y).mean()))
    n = 200
    y = rng.integers(0, 2, n)
    s = y * 0.8 + rng.standard_normal(n)
    boot = []
    while len(boot) < 2000:
        i = rng.integers(0, n, n)
        if y[i].min() != y[i].max():
            boot.append(auc(s[i], y[i]))
    rel = abs(measure_estimate("auc", s, y).variance - np.var(boot, ddof=1)) / np.var(boot, ddof=1)
    report(4, exact and centered <= 1e-8 and rel <= 0.15,
           f"pairwise match {exact}; max |mean EIF| {centered:.1e}; EIF vs bootstrap variance {rel:.1%}")


REFERENCE_KQ = [(200, 30, 0.762, 6, 0.882), (500, 30, 0.774, 6, 0.826), (1500, 30, 0.809, 5, 0.695),
            (3000, 30, 0.854, 4, 0.564), (200, 500, 0.812, 94, 0.990), (500, 500, 0.824, 88, 0.983),
            (1500, 500, 0.861, 69, 0.962), (3000, 500, 0.904, 48, 0.926)]


def test_criterion_05_reference_k_q():
    misses = []
    for n, p, sp, k, q in REFERENCE_KQ:
        k_hat, q_hat = choose_k_q(n, p, 6, sp)
        if k_hat != k or round(q_hat, 3) != q:
            misses.append(f"(n={n}, p={p}): got ({k_hat}, {q_hat:.3f}) expected ({k}, {q:.3f})")
    report(5, not misses, f"{8 - len(misses)}/8 rows reproduced" + ("; " + "; ".join(misses) if misses else ""))


@pytest.fixture(scope="module")
def null_run():
    return run_cached("global_null", NULL_RUN)


def test_criterion_06_gfwer_control(null_run):
    reps = NULL_RUN["replicates"]
    bound = 0.05 + 3 * math.sqrt(0.05 * 0.95 / reps)
    rates = {}
    for k in (0, 1):
        rows = [r for r in null_run["replicates"] if r["mode"] == f"gfwer(k={k})"]
        assert len(rows) == reps
        rates[k] = np.mean([int(r["n_false"]) > k for r in rows])
    ok = all(v <= bound for v in rates.values())
    report(6, ok, f"P(Q+ > 0) = {rates[0]:.3f}, P(Q+ > 1) = {rates[1]:.3f}, bound {bound:.3f}")


def test_criterion_07_fdr_control(null_run):
    fdp = np.array([float(r["fdp"]) for r in null_run["replicates"] if r["mode"] == "fdr(f=0.24)"])
    se = fdp.std(ddof=1) / math.sqrt(fdp.size)
    bound = 0.2 * 0.95 + 0.05 + 3 * se
    report(7, fdp.mean() <= bound, f"mean FDP = {fdp.mean():.3f}, bound {bound:.3f}")


@pytest.fixture(scope="module")
def s1_run():
    return run_cached("scenario1_complete", S1_RUN)


def test_criterion_08_scenario1(s1_run):
    strong = [float(r["selection_prob"]) for r in s1_run["selection_probs"] if int(r["feature"]) <= 4]
    agg = s1_run["aggregate"][0]
    sens = float(np.mean(strong))
    gap = abs(float(agg["mean_test_auc"]) - float(agg["optimal_auc"]))
    report(8, sens >= 0.9 and gap <= 0.05,
           f"sensitivity (|beta| >= 0.5) = {sens:.3f}; test AUC {float(agg['mean_test_auc']):.3f} "
           f"vs optimal {float(agg['optimal_auc']):.3f}")


def test_criterion_09_scenario2():
    rows = run_cached("scenario2_complete", S2_RUN)["replicates"]
    hits = np.mean([{2, 3, 6} <= {int(j) for j in r["final_set"].split(";") if j} for r in rows])
    pilot = json.loads((Path(__file__).parent / "pilot" / "scenario2_pilot_summary.json").read_text())
    threshold = pilot["enforced_threshold"]
    report(9, hits >= threshold, f"P({{2,3,6}} in S+) = {hits:.2f} over {len(rows)} replicates, "
                                 f"pilot-pinned threshold {threshold}")


def test_criterion_10_missing_data(s1_run):
    runs = run_cached("scenario1_missing40", S1_MISSING_RUN)
    rows = runs["replicates"]
    chain = sum(int(r["chain_violations"]) for r in rows)
    donor = sum(int(r["donor_violations"]) for r in rows)
    sens_missing = np.mean([float(r["sensitivity"]) for r in rows])
    complete = [r for r in s1_run["replicates"] if int(r["replicate"]) < S1_MISSING_RUN["replicates"]]
    sens_complete = np.mean([float(r["sensitivity"]) for r in complete])
    ok = chain == 0 and donor == 0 and abs(sens_missing - sens_complete) <= 0.1
    report(10, ok, f"chain violations {chain}; donor violations {donor}; sensitivity "
                   f"{sens_missing:.3f} (40% missing) vs {sens_complete:.3f} (complete)")


def test_criterion_11_persistence(s1_run):
    agg = run_cached("scenario1_small_n", S1_SMALL_N_RUN)["aggregate"] + s1_run["aggregate"]
    agg.sort(key=lambda r: int(r["n"]))
    means = [float(r["mean_test_auc"]) for r in agg]
    ses = [float(r["se_test_auc"]) for r in agg]
    ok = all(means[i + 1] >= means[i] - 2 * math.hypot(ses[i], ses[i + 1]) for i in range(len(means) - 1))
    detail = ", ".join(f"n={r['n']}: {m:.3f} (se {s:.3f})" for r, m, s in zip(agg, means, ses))
    report(11, ok, f"mean test AUC {detail}")
