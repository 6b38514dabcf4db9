import csv

import pytest

from lighthouse.cli import load_config, read_pairs, resolve, run, train_defaults
from lighthouse.errors import ConfigError

TINY_CFG = """\
# tiny toy run
layers = 1
d_model = 8
heads = 2
head_dim = 4
ffn_dim = 16
vocab = 8
alphabet = 4
seq_len = 16
levels = 3
budget = 2
batch_size = 2
total_steps = 4
stage_1_steps = 2   # trailing comment
warmup_steps = 1
"""


def test_selftest_exit_zero(capsys):
    assert run(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "PASS  degenerate_single_level" in out and "PASS  gradient_check" in out


def test_check_writes_report_and_manifest(tmp_path, capsys):
    out = tmp_path / "report.txt"
    assert run(["check", "--seed", "3", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) >= 12 and all(l.startswith("PASS") for l in lines)
    man = read_pairs(f"{out}.manifest")
    assert man["subcommand"] == "check" and man["seed"] == "3"


def test_unknown_subcommand_and_flag(capsys):
    assert run(["frobnicate"]) != 0
    assert run(["check", "--no-such-flag"]) != 0
    assert "usage" in capsys.readouterr().err


def test_bench_csv_and_manifest(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert run(["bench", "--n", "128,256", "--reps", "1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(l for l in out.read_text().splitlines() if not l.startswith("#")))
    assert [(r["N"], r["mode"]) for r in rows] == [("128", "dense"), ("128", "lighthouse"), ("256", "dense"), ("256", "lighthouse")]
    man = read_pairs(f"{out}.manifest")
    assert man["run.n"] == "128,256" and man["output.sweep"] == str(out)


def test_train_outputs_and_manifest_replay_bytewise(tmp_path, capsys):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text(TINY_CFG)
    first = tmp_path / "first"
    assert run(["train", "--config", str(cfg), "--two-stage", "--baseline", "--out", str(first), "--seed", "5"]) == 0
    two = (first / "two_stage.csv").read_text()
    assert "# spike=" in two and "# steps_to_recover=" in two
    assert (first / "baseline.csv").exists()
    again = tmp_path / "again"
    assert run(["train", "--config", str(first / "manifest.txt"), "--out", str(again)]) == 0
    for name in ("two_stage.csv", "baseline.csv"):
        assert (first / name).read_bytes() == (again / name).read_bytes()
    assert "two-stage / baseline final loss" in capsys.readouterr().out


def test_train_unknown_key_is_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("layers = 1\nlearning_rate = 0.1\n")
    assert run(["train", "--config", str(cfg)]) == 2
    assert "unknown config key(s): learning_rate" in capsys.readouterr().err


def test_config_parsing_rules(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("prefix_coverage = no\ndense_layers = 0, 1\nlr = 3e-4\n")
    values, run_settings = load_config(p, train_defaults())
    assert values["prefix_coverage"] is False and values["dense_layers"] == (0, 1) and values["lr"] == 3e-4
    assert run_settings == {}
    p.write_text("lr = 1\nlr = 2\n")
    with pytest.raises(ConfigError, match="duplicate"):
        read_pairs(p)
    p.write_text("just words\n")
    with pytest.raises(ConfigError, match="key = value"):
        read_pairs(p)
    with pytest.raises(ConfigError):
        resolve({"layers": "two"}, train_defaults())
    with pytest.raises(ConfigError):
        resolve({"prefix_coverage": "maybe"}, train_defaults())


def test_shipped_toy_config_is_the_default():
    from pathlib import Path

    from lighthouse.trainer import TrainConfig

    path = Path(__file__).resolve().parents[1] / "configs" / "toy.cfg"
    values, run_settings = load_config(path, train_defaults())
    assert run_settings == {}
    assert TrainConfig(**values) == TrainConfig()
