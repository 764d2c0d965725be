import json

import pytest
import yaml

from hybridchain.cli import main
from hybridchain.metrics import CSV_HEADER

TINY = {
    "workload": {"gamma": 600, "duration": 0.2},
    "protocol": {"M": 12, "f": 1},
    "bootstrap": {"training_size": 1000, "heldout_size": 500},
}


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


@pytest.fixture
def tiny_config(tmp_path):
    return write_yaml(tmp_path / "run.yaml", TINY)


def test_run_writes_outputs(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", tiny_config, "--seed", "4", "--out", str(out)]) == 0
    for name in ("events.jsonl", "metrics.csv", "metrics.json", "validator_reliability.csv",
                 "user_reliability.csv", "transactions.jsonl", "config.yaml"):
        assert (out / name).exists(), name
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == ",".join(CSV_HEADER)
    assert "accuracy=" in capsys.readouterr().out


def test_run_is_byte_identical(tiny_config, tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--config", tiny_config, "--seed", "9", "--out", str(tmp_path / name)]) == 0
    for f in ("events.jsonl", "metrics.csv", "metrics.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_byzantine_bound_exits_one(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "bad.yaml", {"protocol": {"M": 12, "f": 6}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "Byzantine bound" in capsys.readouterr().err


def test_usage_errors_exit_one(tmp_path):
    assert main(["fly"]) == 1
    assert main(["run", "--seed", "abc"]) == 1
    assert main(["run", "--config", str(tmp_path / "none.yaml")]) == 1


def test_invariant_violation_exits_two(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "starved.yaml", {**TINY, "run": {"genesis_size": 1}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "invariant" in capsys.readouterr().err


def test_sweep_writes_csv(tmp_path, capsys):
    spec = write_yaml(tmp_path / "sweep.yaml", {"axis": "gamma", "points": [300, 600], "repeats": 1, "base": TINY})
    assert main(["sweep", "--config", spec, "--out", str(tmp_path / "s")]) == 0
    lines = (tmp_path / "s" / "sweep_gamma.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 3
    assert capsys.readouterr().out.splitlines() == lines


def test_sweep_bad_axis_exits_one(tmp_path):
    spec = write_yaml(tmp_path / "sweep.yaml", {"axis": "colour", "points": [1], "base": TINY})
    assert main(["sweep", "--config", spec, "--out", str(tmp_path / "s")]) == 1
    spec = write_yaml(tmp_path / "sweep2.yaml", {"axis": "tau", "points": [0.1], "extra": 1})
    assert main(["sweep", "--config", spec]) == 1
    assert main(["sweep"]) == 1


def test_train_exports_weights_that_reload(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "train.yaml", {**TINY, "bootstrap": {}})
    out = tmp_path / "t"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    rec = json.loads((out / "weights.json").read_text())
    assert rec["heldout_accuracy"] >= 0.90
    printed = capsys.readouterr().out
    assert f"heldout_accuracy={rec['heldout_accuracy']:.4f}" in printed

    reuse = write_yaml(tmp_path / "reuse.yaml",
                       {**TINY, "bootstrap": {"weights_file": str(out / "weights.json")}})
    assert main(["run", "--config", reuse, "--out", str(tmp_path / "r")]) == 0


def test_train_rejects_empty_training_set(tmp_path):
    cfg = write_yaml(tmp_path / "t.yaml", {"bootstrap": {"training_size": 0}})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "t")]) == 1


def test_report_rederives_metrics(tiny_config, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", tiny_config, "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert printed.startswith((out / "metrics.csv").read_text())
    assert main(["report", str(out / "missing.jsonl")]) == 1
    (out / "broken.jsonl").write_text("{oops\n")
    assert main(["report", str(out / "broken.jsonl")]) == 1
