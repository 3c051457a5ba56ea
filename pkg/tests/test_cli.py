import csv
import json

import pytest
import jsonschema

from adaptspace import cli
from adaptspace.metrics import aasr

TTO_GOALS = [
    {"kind": "threshold-below", "quality": "packet_loss", "value": 0.10},
    {"kind": "threshold-below", "quality": "latency", "value": 0.05},
    {"kind": "minimize", "quality": "energy"},
]


def write_config(tmp_path, name="short", **extra):
    cfg = {
        "name": name,
        "topology": "topo_v1",
        "goals": TTO_GOALS,
        "strategy": "dlaser_plus",
        "cycles": {"training": 2, "learning": 3},
        "seed": 3,
        "verifier": {"runs_per_option": 60},
        "reducer": {"training_epochs": 1},
        "hyperparams": {"core_layers": [12], "class_layers": [6], "regr_layers": [6]},
    }
    cfg.update(extra)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    return path


def run_cli(*args):
    return cli.main([str(a) for a in args])


def test_short_run_writes_outputs(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert run_cli("run", "--config", cfg, "--out", out) == 0
    for f in ("cycles.csv", "summary.json", "wallclock.csv", "model.ckpt"):
        assert (out / f).is_file()
    rows = list(csv.DictReader(open(out / "cycles.csv")))
    assert len(rows) == 5 and rows[0]["phase"] == "training"
    summary = json.loads((out / "summary.json").read_text())
    jsonschema.validate(summary, cli.summary_schema())
    assert summary["seed"] == 3


def test_summary_aasr_round_trips(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    run_cli("run", "--config", cfg, "--out", out)
    records = cli.read_cycles(out / "cycles.csv", cli.scenario_from_config(json.loads(cfg.read_text()), tmp_path).goals)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["aasr"] == pytest.approx(aasr(records), abs=1e-12)


def test_missing_topology_names_the_path(tmp_path, capsys):
    cfg = write_config(tmp_path, topology="nowhere/topo.json")
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "o") != 0
    assert "nowhere/topo.json" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, colour="blue")
    assert run_cli("run", "--config", cfg) == 2
    assert "colour" in capsys.readouterr().err


def test_seed_override_is_deterministic(tmp_path):
    cfg = write_config(tmp_path)
    for name in ("a", "b"):
        run_cli("run", "--config", cfg, "--seed", 11, "--out", tmp_path / name)
    assert (tmp_path / "a" / "cycles.csv").read_text() == (tmp_path / "b" / "cycles.csv").read_text()
    assert json.loads((tmp_path / "a" / "summary.json").read_text())["seed"] == 11


def test_gridsearch_row_count(tmp_path):
    grid = {"scaler": ["standard", "max-abs"], "batch_size": [64], "learning_rate": [5e-3], "optimizer": ["adam"],
            "core_layers": [[8]], "head_layers": [[[4], [4]]]}
    cfg = write_config(tmp_path, "gs", gridsearch={"train_cycles": 1, "validation_cycles": 1, "epochs": 2, "patience": 1, "grid": grid})
    out = tmp_path / "gs_out"
    assert run_cli("gridsearch", "--config", cfg, "--out", out) == 0
    rows = list(csv.DictReader(open(out / "gridsearch.csv")))
    assert len(rows) == 2
    best = json.loads((out / "best.json").read_text())
    assert best["grid_size"] == 2
    # the winning hyper-parameters can feed a later run
    run_cfg = write_config(tmp_path, "after", hyperparams_file=str(out / "best.json"))
    run_cfg_dict = json.loads(run_cfg.read_text())
    del run_cfg_dict["hyperparams"]
    run_cfg.write_text(json.dumps(run_cfg_dict))
    assert run_cli("run", "--config", run_cfg, "--out", tmp_path / "after_out") == 0


def test_self_compare_has_zero_deltas(tmp_path):
    cfg = write_config(tmp_path)
    run_cli("run", "--config", cfg, "--out", tmp_path / "r")
    assert run_cli("compare", tmp_path / "r", tmp_path / "r", "--out", tmp_path / "cmp") == 0
    rows = list(csv.DictReader(open(tmp_path / "cmp" / "compare.csv")))
    assert len(rows) == 2
    for col in ("packet_loss_delta", "latency_delta", "energy_delta"):
        assert float(rows[1][col]) == 0.0


def test_compare_rejects_mismatched_runs(tmp_path, capsys):
    cfg = write_config(tmp_path)
    run_cli("run", "--config", cfg, "--out", tmp_path / "a")
    run_cli("run", "--config", cfg, "--seed", 5, "--out", tmp_path / "b")
    assert run_cli("compare", tmp_path / "a", tmp_path / "b", "--out", tmp_path / "c") == 2
    assert "differ" in capsys.readouterr().err


def test_bundled_configs_validate():
    for name in cli.BUNDLED_CONFIGS:
        cfg, _ = cli.load_config(name)
        jsonschema.validate(cfg, cli.CONFIG_SCHEMA)


def test_strategy_override(tmp_path):
    cfg = write_config(tmp_path)
    assert run_cli("run", "--config", cfg, "--strategy", "exhaustive_reference", "--out", tmp_path / "x") == 0
    rows = list(csv.DictReader(open(tmp_path / "x" / "cycles.csv")))
    assert all(r["analyzed"] == "216" for r in rows)
    assert not (tmp_path / "x" / "model.ckpt").exists()
