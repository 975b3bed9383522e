import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from flevr.cli import main
from flevr.data import write_csv
from flevr.missingness import AmputationSpec, ampute

from conftest import binary_dataset


@pytest.fixture
def data_csv(tmp_path):
    path = tmp_path / "d.csv"
    write_csv(binary_dataset(200, 3, [1.5], seed=1), path)
    return path


@pytest.fixture
def missing_csv(tmp_path):
    ds = binary_dataset(150, 4, [1.5], seed=2)
    ds = ampute(ds, AmputationSpec((0, 2), (1, 3), (), 0.3, (0, 2)), seed=3)
    path = tmp_path / "m.csv"
    write_csv(ds, path)
    return path


def snapshot(root):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*"))


def test_select_writes_json_and_is_deterministic(data_csv, tmp_path, capsys):
    args = ["select", "--input", str(data_csv), "--outcome", "y", "--alpha", "0.05",
            "--mode", "gfwer", "--k", "2", "--seed", "7"]
    assert main(args + ["--output", str(tmp_path / "a.json")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("final set:") and "adjusted_p" in out
    assert main(args + ["--output", str(tmp_path / "b.json")]) == 0
    a = (tmp_path / "a.json").read_text()
    assert a == (tmp_path / "b.json").read_text()
    res = json.loads(a)
    assert res["seed"] == 7 and res["k_used"] == 2
    assert len(res["final_set"]) == len(res["initial_set"]) + 2
    assert all(1 <= j <= 3 for j in res["final_set"])


def test_seed_from_environment(data_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("FLEVR_SEED", "7")
    out = tmp_path / "env.json"
    assert main(["select", "--input", str(data_csv), "--outcome", "y", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["seed"] == 7
    monkeypatch.setenv("FLEVR_SEED", "seven")
    assert main(["select", "--input", str(data_csv), "--outcome", "y", "--output", str(out)]) == 2


def test_select_with_missing_data(missing_csv, tmp_path):
    out = tmp_path / "r.json"
    assert main(["select", "--input", str(missing_csv), "--outcome", "y", "--M", "3",
                 "--mode", "pfp", "--q", "0.3", "--output", str(out), "--threads", "1"]) == 0
    res = json.loads(out.read_text())
    assert res["M"] == 3 and res["mode"] == "pfp"


@pytest.mark.parametrize("argv", [
    ["select", "--input", "d.csv", "--output", "o.json"],
    ["select", "--input", "d.csv", "--outcome", "y", "--output", "o.json", "--mode", "bogus"],
])
def test_missing_or_invalid_flags_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_config_errors_exit_2(data_csv, tmp_path, capsys):
    base = ["select", "--input", str(data_csv), "--outcome", "y", "--output", str(tmp_path / "o.json")]
    assert main(base + ["--alpha", "1.5"]) == 2
    assert main(base + ["--mode", "fdr", "--f", "0.01"]) == 2
    assert main(base + ["--k", "9"]) == 2
    assert main(["select", "--input", str(tmp_path / "none.csv"), "--outcome", "y",
                 "--output", str(tmp_path / "o.json")]) == 2
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "o.json").exists()


def test_runtime_error_exit_1(data_csv, tmp_path, capsys):
    assert main(["select", "--input", str(data_csv), "--outcome", "nope",
                 "--output", str(tmp_path / "o.json")]) == 1
    assert "nope" in capsys.readouterr().err


def test_spvim_command(data_csv, missing_csv, tmp_path):
    out = tmp_path / "s" / "spvim.json"
    assert main(["spvim", "--input", str(data_csv), "--outcome", "y", "--seed", "1",
                 "--output", str(out)]) == 0
    res = json.loads(out.read_text())
    assert len(res["psi"]) == 3 and res["feature_names"] == ["x1", "x2", "x3"]
    assert main(["spvim", "--input", str(missing_csv), "--outcome", "y", "--output", str(out)]) == 2


def test_impute_command(missing_csv, tmp_path):
    outdir = tmp_path / "imp"
    assert main(["impute", "--input", str(missing_csv), "--outcome", "y", "--M", "2",
                 "--max-iter", "3", "--seed", "4", "--output", str(outdir)]) == 0
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["seed"] == 4 and manifest["M"] == 2 and manifest["iterations"] == 3
    assert manifest["donors"] == 5 and manifest["files"] == ["imputed_1.csv", "imputed_2.csv"]
    with open(outdir / "imputed_1.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 151 and not any("NA" in r for r in rows)
    assert snapshot(tmp_path) == sorted(["imp", "imp/imputed_1.csv", "imp/imputed_2.csv",
                                         "imp/manifest.json", "m.csv"])
    assert main(["impute", "--input", str(missing_csv), "--outcome", "y", "--M", "1",
                 "--output", str(outdir)]) == 2


def test_simulate_command(tmp_path, capsys):
    cfg = {"scenarios": [1], "n": [200], "modes": [{"mode": "gfwer", "k": 0}], "replicates": 2,
           "seed": 3, "p": 6, "evaluate": False}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(path), "--output", str(out), "--threads", "1"]) == 0
    with open(out / "replicates.csv", newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 2
    assert snapshot(out) == ["aggregate.csv", "replicates.csv", "selection_probs.csv"]
    path.write_text(json.dumps({**cfg, "scenarios": [9]}))
    assert main(["simulate", "--config", str(path), "--output", str(out)]) == 2
    assert "1-8" in capsys.readouterr().err
    path.write_text("{not json")
    assert main(["simulate", "--config", str(path), "--output", str(out)]) == 2


def test_simulate_seed_flag_overrides_config(tmp_path):
    cfg = {"scenarios": [6], "n": [200], "modes": [{"mode": "gfwer", "k": 0}], "replicates": 1,
           "seed": 3, "evaluate": False}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    main(["simulate", "--config", str(path), "--output", str(tmp_path / "a")])
    main(["simulate", "--config", str(path), "--output", str(tmp_path / "b"), "--seed", "4"])
    a = (tmp_path / "a" / "replicates.csv").read_text()
    assert a != (tmp_path / "b" / "replicates.csv").read_text()


def test_help_exits_zero():
    proc = subprocess.run([sys.executable, "-m", "flevr.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "usage" in proc.stdout
    for cmd in ("select", "spvim", "impute", "simulate"):
        proc = subprocess.run([sys.executable, "-m", "flevr.cli", cmd, "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "--seed" in proc.stdout
