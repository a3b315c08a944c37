import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from aliashmm.cli import main
from aliashmm.errors import ValidationError
from aliashmm.experiments import COLUMNS, SweepConfig, permutation_mse, replicate_seeds, sweep, worker_count
from aliashmm.hmm import simulate
from aliashmm.io import (
    load_model, model_from_dict, model_to_dict, read_outputs, read_states, save_model, write_outputs,
    write_states,
)
from aliashmm.synth import four_state_model

ROOT = Path(__file__).resolve().parents[1]
PAPER4 = ROOT / "configs" / "paper4.json"
MERGED = ROOT / "configs" / "paper4-merged.json"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _sweep_cfg(tmp_path, **kw):
    d = {"model": str(PAPER4), "T": [200, 400], "replicates": 3, "seed": 11, "pipelines": ["mom", "bw-exact"],
         "bw_iterations": 2}
    d.update(kw)
    p = tmp_path / "sweep.json"
    p.write_text(json.dumps(d))
    return p


def test_model_round_trip(tmp_path, model4):
    assert model_to_dict(model4)["aliased_pair"] == [3, 4]
    h = model_from_dict(json.loads(json.dumps(model_to_dict(model4))))
    assert np.array_equal(h.A, model4.A) and h.aliased_pair == model4.aliased_pair
    save_model(tmp_path / "m.json", model4)
    assert np.array_equal(load_model(tmp_path / "m.json").A, model4.A)


def test_shipped_model_is_four_state_example():
    h = load_model(PAPER4)
    assert np.array_equal(h.A, four_state_model().A) and h.aliased_pair == (2, 3)


def test_sequence_round_trip(tmp_path, model4):
    x, y = simulate(model4, 50, seed=1)
    write_outputs(tmp_path / "y.csv", y)
    write_states(tmp_path / "x.csv", x)
    assert np.array_equal(read_outputs(tmp_path / "y.csv"), y)
    assert np.array_equal(read_states(tmp_path / "x.csv"), x)
    assert (tmp_path / "x.csv").read_text().splitlines()[1] == str(x[0] + 1)


def test_read_outputs_rejects_bad_header(tmp_path):
    (tmp_path / "y.csv").write_text("z\n1.0\n")
    with pytest.raises(ValidationError):
        read_outputs(tmp_path / "y.csv")


def test_simulate_length_contract(tmp_path):
    out = tmp_path / "y.csv"
    assert main(["simulate", "--model", str(PAPER4), "--T", "1000", "--seed", "7", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "y" and len(lines) == 1001
    assert read_outputs(out).size == 1000


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        main(["simulate", "--model", str(PAPER4), "--T", "300", "--seed", "7", "--out", str(p),
              "--states-out", str(p) + ".x"])
    assert a.read_bytes() == b.read_bytes()
    assert Path(str(a) + ".x").read_bytes() == Path(str(b) + ".x").read_bytes()


def test_analyze_report(tmp_path):
    out = tmp_path / "a.json"
    assert main(["analyze", "--model", str(PAPER4), "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["minimal"] is True and d["identifiable"] is True


def test_analyze_needs_aliased_pair(capsys):
    assert main(["analyze", "--model", str(MERGED)]) == 2
    assert "2-aliased" in capsys.readouterr().err


def test_detect_identify_learn(tmp_path):
    y = tmp_path / "y.csv"
    main(["simulate", "--model", str(PAPER4), "--T", "20000", "--seed", "3", "--out", str(y)])
    base = ["--model", str(PAPER4), "--y", str(y)]
    assert main(["detect", *base, "--out", str(tmp_path / "d.json")]) == 0
    assert json.loads((tmp_path / "d.json").read_text())["detection"]["verdict"] == "2-aliased"
    assert main(["identify", *base, "--out", str(tmp_path / "i.json")]) == 0
    assert json.loads((tmp_path / "i.json").read_text())["aliased_component"] == 3
    argv = ["learn", *base, "--no-timing", "--model-out", str(tmp_path / "m.json"),
            "--dump-moments", str(tmp_path / "mom.json")]
    assert main(argv + ["--out", str(tmp_path / "l1.json")]) == 0
    assert main(argv + ["--out", str(tmp_path / "l2.json")]) == 0
    assert (tmp_path / "l1.json").read_bytes() == (tmp_path / "l2.json").read_bytes()
    rep = json.loads((tmp_path / "l1.json").read_text())
    assert rep["branch"] == "aliased" and rep["state_components"] == [1, 2, 3, 3]
    assert load_model(tmp_path / "m.json").aliased_pair == (2, 3)
    assert "dM2" in json.loads((tmp_path / "mom.json").read_text())


def test_bw_command(tmp_path):
    y = tmp_path / "y.csv"
    main(["simulate", "--model", str(PAPER4), "--T", "500", "--seed", "3", "--out", str(y)])
    out, tr = tmp_path / "bw.json", tmp_path / "tr.csv"
    assert main(["bw", "--y", str(y), "--n", "4", "--iterations", "3", "--out", str(out),
                 "--trace-out", str(tr)]) == 0
    assert len(json.loads(out.read_text())["transition"]) == 4
    assert len(_rows(tr)) == 4
    assert main(["bw", "--y", str(y), "--iterations", "3"]) == 2


def test_exit_codes(tmp_path, capsys):
    assert main(["analyze", "--model", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n": 2, "transition": [[0.5, 0.5], [0.6, 0.5]],
                               "emissions": [{"mean": 0, "var": 1}, {"mean": 1, "var": 1}]}))
    assert main(["analyze", "--model", str(bad)]) == 2
    (tmp_path / "short.csv").write_text("y\n0.1\n0.2\n")
    assert main(["learn", "--model", str(PAPER4), "--y", str(tmp_path / "short.csv")]) == 2
    spiky = tmp_path / "spiky.json"
    spiky.write_text(json.dumps({"n": 2, "transition": [[0, 1], [1, 0]],
                                 "emissions": [{"mean": 0, "var": 1e-4}, {"mean": 1, "var": 1e-4}]}))
    (tmp_path / "far.csv").write_text("y\n100\n200\n300\n")
    assert main(["bw", "--y", str(tmp_path / "far.csv"), "--model", str(spiky), "--init", "from-model"]) == 3
    assert main(["analyze", "--model", str(PAPER4), "--bogus"]) == 2
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_console_script_usage_exit():
    proc = subprocess.run([sys.executable, "-m", "aliashmm.cli", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr


def test_sweep_rows_and_determinism(tmp_path):
    cfg = _sweep_cfg(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(a), "--no-timing", "--threads", "1"]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(b), "--no-timing", "--threads", "1"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a)
    assert tuple(rows[0].keys()) == COLUMNS
    assert len(rows) == 3 * 2 * 2
    assert [(int(r["T"]), int(r["replicate"]), r["pipeline"]) for r in rows] == [
        (T, rep, p) for T in (200, 400) for rep in range(3) for p in ("mom", "bw-exact")]
    assert all(r["runtime_ms"] == "" for r in rows)


def test_sweep_order_independent_of_workers(tmp_path, monkeypatch):
    cfg = _sweep_cfg(tmp_path, pipelines=["mom"])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    monkeypatch.setenv("AHMM_THREADS", "1")
    main(["sweep", "--config", str(cfg), "--out", str(a), "--no-timing"])
    monkeypatch.setenv("AHMM_THREADS", "3")
    main(["sweep", "--config", str(cfg), "--out", str(b), "--no-timing"])
    assert a.read_bytes() == b.read_bytes()


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("AHMM_THREADS", "5")
    assert worker_count() == 5
    monkeypatch.setenv("AHMM_THREADS", "zero")
    with pytest.raises(ValidationError):
        worker_count()


def test_sweep_config_validation(model4):
    with pytest.raises(ValidationError):
        SweepConfig(model4, [100, 100], 1)
    with pytest.raises(ValidationError):
        SweepConfig(model4, [100], 0)
    with pytest.raises(ValidationError):
        SweepConfig(model4, [100], 1, pipelines=("em",))


def test_sweep_config_error_exit(tmp_path):
    cfg = _sweep_cfg(tmp_path, T=[400, 200])
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 2


def test_replicate_seeds_distinct():
    seeds = {replicate_seeds(5, r) for r in range(200)}
    assert len(seeds) == 200 and replicate_seeds(5, 3) == replicate_seeds(5, 3)


def test_permutation_mse():
    A = np.array([[0.2, 0.7, 0.1], [0.3, 0.1, 0.4], [0.5, 0.2, 0.5]])
    p = [2, 0, 1]
    B = np.empty_like(A)
    B[np.ix_(p, p)] = A
    assert permutation_mse(B, A) == pytest.approx(0.0, abs=1e-30)
    assert permutation_mse(A, A, ["a", "b", "c"], ["a", "b", "c"]) == 0.0


def test_sweep_mom_error_falls_with_T(model4):
    cfg = SweepConfig(model4, [1000, 30000], 8, seed=2, timing=False)
    rows = sweep(cfg, workers=1)
    med = {T: np.median([r["mse_frobenius_sq"] for r in rows if r["T"] == T]) for T in (1000, 30000)}
    assert med[30000] < med[1000]
