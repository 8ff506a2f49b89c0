import json
import subprocess
import sys

import pytest

from pna.cli import main
from pna.suites import read_rows


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        code, _, _ = run(capsys, "generate", "--count", "6", "--n-min", "6", "--n-max", "9", "--seed", "3",
                         "--out", str(tmp_path / name))
        assert code == 0
    for split in ("train", "valid", "test"):
        assert (tmp_path / "a" / f"{split}.jsonl").read_bytes() == (tmp_path / "b" / f"{split}.jsonl").read_bytes()
    echo = json.loads((tmp_path / "a" / "command.json").read_text())
    assert echo["seed"] == 3 and echo["count"] == 6


def test_generate_extrapolation_ranges(tmp_path, capsys):
    code, out, _ = run(capsys, "generate", "--split", "extrapolation", "--count", "4", "--test-count", "40",
                       "--out", str(tmp_path))
    assert code == 0
    assert "n in [15, 25]" in out and "n in [25, 30]" in out and "n in [20, 50]" in out


def test_generate_empty_is_a_data_error(tmp_path, capsys):
    code, _, err = run(capsys, "generate", "--count", "0", "--out", str(tmp_path))
    assert code == 3 and "empty" in err


def test_train_dry_run_and_parameter_overhead(capsys):
    code, out, _ = run(capsys, "train", "--dry-run", "--layer", "pna")
    assert code == 0
    assert "parameters=8286" in out and "relative to gcn at the same width: +25.6%" in out
    assert "node_preds (" in out and "graph_preds (" in out


def test_unknown_layer_lists_valid_names(capsys):
    code, _, err = run(capsys, "train", "--dry-run", "--layer", "diffpool")
    assert code == 2 and "gcn" in err and "mpnn_max" in err


def test_bad_config_is_a_usage_error(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[model]\nhidden = 15\n")
    code, _, _ = run(capsys, "train", "--dry-run", "--config", str(cfg))
    assert code == 2
    with pytest.raises(SystemExit) as e:
        main(["train"])
    assert e.value.code == 2


def test_train_then_eval(tmp_path, capsys):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text("[model]\nhidden = 8\n[train]\nmax_epochs = 2\npatience = 1\nbatch_size = 8\n")
    data = tmp_path / "data"
    assert run(capsys, "generate", "--count", "8", "--n-min", "6", "--n-max", "9", "--out", str(data))[0] == 0
    ckpt = tmp_path / "model.ckpt"
    code, out, _ = run(capsys, "train", "--config", str(cfg), "--data", str(data), "--seed", "1",
                       "--out", str(ckpt))
    assert code == 0 and ckpt.exists() and "best epoch" in out
    rows = read_rows(tmp_path / "model.csv")
    assert {r["split"] for r in rows} == {"valid", "test"}
    code, out, _ = run(capsys, "eval", "--checkpoint", str(ckpt), "--data", str(data), "--breakdown", "family",
                       "--out", str(tmp_path / "ev"))
    assert code == 0 and "combined" in out
    assert any(r["split"].startswith("test@family=") for r in read_rows(tmp_path / "ev" / "metrics.csv"))
    code, _, _ = run(capsys, "eval", "--checkpoint", str(tmp_path / "nope.ckpt"), "--data", str(data),
                     "--out", str(tmp_path / "ev2"))
    assert code == 3
    code, _, _ = run(capsys, "eval", "--checkpoint", str(ckpt), "--data", str(data), "--breakdown", "colour",
                     "--out", str(tmp_path / "ev3"))
    assert code == 2


def test_param_comparison_counts(tmp_path, capsys):
    code, out, _ = run(capsys, "suite", "--kind", "param_comparison", "--counts-only", "--out", str(tmp_path))
    assert code == 0
    rows = {r["model"]: r["params"] for r in read_rows(tmp_path / "param_comparison.csv")}
    assert rows["pna@F16"] == 8286 and rows["gcn@F20"] == 10166
    assert all(rows["pna@F16"] < rows[f"{b}@F20"] for b in ("gcn", "gat", "gin", "mpnn_sum", "mpnn_max"))


def test_suite_and_report(tmp_path, capsys):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text("[model]\nhidden = 8\n[train]\nmax_epochs = 2\npatience = 1\nbatch_size = 8\n"
                   "[data]\nn_train = 8\nn_valid = 4\nn_test = 4\ntrain_range = 6, 9\n"
                   "valid_range = 6, 9\ntest_range = 6, 9\n")
    code, _, _ = run(capsys, "suite", "--kind", "moment_ablation", "--config", str(cfg), "--seeds", "0",
                     "--workers", "1", "--out", str(tmp_path / "s"))
    assert code == 0
    labels = {r["model"] for r in read_rows(tmp_path / "s" / "moment_ablation.csv")}
    assert len(labels) == 6
    code, out, _ = run(capsys, "report", "--in", str(tmp_path / "s" / "moment_ablation.csv"), "--top-k", "1",
                       "--no-charts", "--out", str(tmp_path / "r"))
    assert code == 0 and "## moment_ablation" in out
    code, _, _ = run(capsys, "report", "--in", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "r"))
    assert code == 3


def test_empty_report_exits_zero(tmp_path, capsys):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    code, out, _ = run(capsys, "report", "--in", str(empty), "--out", str(tmp_path / "r"))
    assert code == 0 and "no runs" in out


def test_theory_commands(tmp_path, capsys):
    code, out, _ = run(capsys, "theory", "recover", "--values", "1,2,3", "--out", str(tmp_path))
    assert code == 0 and "RESULT recover pass" in out
    assert json.loads((tmp_path / "theory-recover.json").read_text())["pass"] is True
    code, out, _ = run(capsys, "theory", "scaled-mean", "--features", "1,2,3", "--max-size", "4")
    assert code == 0 and "RESULT scaled-mean pass" in out and "collision" in out
    code, out, _ = run(capsys, "theory", "counterexample", "--aggregators", "mean,max", "--values", "0-4")
    assert code == 0 and "mean+max:" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pna", "theory", "recover", "--values", "0.5,-1,2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "RESULT recover pass" in res.stdout
