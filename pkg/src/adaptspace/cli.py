"""Command-line driver: ``run``, ``gridsearch`` and ``compare``.

Scenario configs are JSON files (bundled ones can be named directly, e.g. ``tto_v1``).
Outputs of ``run``:

``cycles.csv``
    one row per cycle, see :data:`CYCLE_COLUMNS`; per-head columns follow, named
    ``<head>_tp``, ``<head>_fp``, ``<head>_fn``, ``<head>_tn`` for classification heads
    and ``<head>_rho`` for the regression head. Floats are written in shortest
    round-trip form, so the file re-reads exactly.
``summary.json``
    all metrics, computed from ``cycles.csv`` alone; validated against the bundled
    ``summary.schema.json``.
``model.ckpt``
    the trained model (dlaser_plus only).
``wallclock.csv``
    measured timings, kept apart so that ``cycles.csv`` stays reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import metrics as M
from .domain import QUALITIES, GoalSpec, QualityVector, goals_from_records
from .loop import STRATEGIES, ScenarioRun, collect_dataset, run_scenario
from .neural.gridsearch import expand_grid, grid_search
from .neural.model import DivergenceError, HyperParams
from .reducer import ReducerConfig
from .simnet import BUNDLED_TOPOLOGIES, load_topology
from .verify import VerifierConfig

log = logging.getLogger("adaptspace")

BUNDLED_CONFIGS = ("tto_v1", "tts_v1", "tso_v1", "tso_v2", "tso_v2_toggle", "gridsearch_v1")

CYCLE_COLUMNS = (
    "cycle_index",
    "phase",
    "total",
    "selected",
    "analyzed",
    "explored",
    "selected_option",
    "fallback_used",
    "packet_loss",
    "latency",
    "energy",
    "verification_time",
    "learning_time",
    "full_verification_time",
)

_GOAL_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["threshold-below", "threshold-above", "set-point", "minimize", "maximize"]},
        "quality": {"enum": [q.value for q in QUALITIES]},
        "value": {"type": "number"},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "name": {"type": "string"},
    },
    "required": ["kind", "quality"],
    "additionalProperties": False,
}

_LAYOUT = {"type": "array", "items": {"type": "integer", "minimum": 1}}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "topology": {"type": "string"},
        "goals": {"type": "array", "items": _GOAL_SCHEMA, "minItems": 1},
        "strategy": {"enum": list(STRATEGIES)},
        "cycles": {
            "type": "object",
            "properties": {
                "training": {"type": "integer", "minimum": 0},
                "learning": {"type": "integer", "minimum": 0},
            },
            "required": ["training", "learning"],
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "verifier": {
            "type": "object",
            "properties": {
                "runs_per_option": {"type": "integer", "minimum": 30},
                "relative_accuracy": {"type": "number", "exclusiveMinimum": 0},
                "seconds_per_link_run": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "reducer": {
            "type": "object",
            "properties": {
                "exploration_rate": {"type": "number", "minimum": 0, "maximum": 1},
                "training_epochs": {"type": "integer", "minimum": 1},
                "online_epochs": {"type": "integer", "minimum": 0},
                "scaler_window": {"type": "integer", "minimum": 1},
                "seconds_per_flop": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "hyperparams": {
            "type": "object",
            "properties": {
                "scaler": {"enum": ["standard", "max-abs", "min-max"]},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "optimizer": {"enum": ["adam", "rmsprop"]},
                "core_layers": {**_LAYOUT, "minItems": 1},
                "class_layers": _LAYOUT,
                "regr_layers": _LAYOUT,
            },
            "additionalProperties": False,
        },
        "hyperparams_file": {"type": "string"},
        "uncertainty": {
            "type": "object",
            "properties": {
                "snr_step": {"type": "number", "minimum": 0},
                "load_step": {"type": "number", "minimum": 0},
                "reversion": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "random_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "gridsearch": {
            "type": "object",
            "properties": {
                "train_cycles": {"type": "integer", "minimum": 1},
                "validation_cycles": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 1},
                "patience": {"type": "integer", "minimum": 1},
                "grid": {"type": "object"},
            },
            "required": ["train_cycles", "validation_cycles"],
            "additionalProperties": False,
        },
        "output": {"type": "string"},
    },
    "required": ["topology", "goals"],
    "additionalProperties": False,
}


class CliError(Exception):
    pass


# --- configuration ---------------------------------------------------------------------


def load_config(ref: str) -> tuple[dict, Path]:
    """Read and validate a config; returns it with the directory relative paths resolve against."""
    path = Path(ref)
    if path.is_file():
        text, base = path.read_text(), path.parent
    elif ref in BUNDLED_CONFIGS:
        text = resources.files("adaptspace.data.configs").joinpath(f"{ref}.json").read_text()
        base = Path.cwd()
    else:
        raise CliError(f"config not found: {ref}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{ref}: invalid JSON ({exc})") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError(f"{ref}: invalid config at {where}: {exc.message}") from exc
    return cfg, base


def _resolve(base: Path, ref: str) -> str:
    if ref in BUNDLED_TOPOLOGIES:
        return ref
    p = Path(ref)
    return str(p if p.is_absolute() else base / p)


def scenario_from_config(cfg: dict, base: Path, seed=None, threads=1, verifier_runs=None, strategy=None) -> ScenarioRun:
    goals = goals_from_records(cfg["goals"])
    verifier = VerifierConfig(**cfg.get("verifier", {}))
    if verifier_runs is not None:
        verifier = replace(verifier, runs_per_option=verifier_runs)
    seed = cfg.get("seed", 0) if seed is None else seed
    hp = HyperParams.from_dict(cfg.get("hyperparams", {}))
    if "hyperparams_file" in cfg:
        hp_path = Path(_resolve(base, cfg["hyperparams_file"]))
        if not hp_path.is_file():
            raise CliError(f"hyper-parameter file not found: {hp_path}")
        hp = HyperParams.from_dict(json.loads(hp_path.read_text())["hyperparams"])
    cycles = cfg.get("cycles", {"training": 45, "learning": 100})
    try:
        topology = load_topology(_resolve(base, cfg["topology"]))
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from exc
    return ScenarioRun(
        topology=topology,
        goals=goals,
        strategy=strategy or cfg.get("strategy", "dlaser_plus"),
        training_cycles=cycles["training"],
        learning_cycles=cycles["learning"],
        seed=seed,
        verifier=verifier,
        reducer=ReducerConfig(seed=seed, **cfg.get("reducer", {})),
        hyperparams=hp,
        uncertainty=cfg.get("uncertainty", {}),
        random_fraction=cfg.get("random_fraction", 0.5),
        threads=threads,
    )


# --- cycles.csv ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def head_columns(goals: list[GoalSpec]) -> list[str]:
    cols = []
    for g in goals:
        if g.is_classification:
            cols += [f"{g.name}_{k}" for k in ("tp", "fp", "fn", "tn")]
        else:
            cols.append(f"{g.name}_rho")
    return cols


def write_cycles(path: Path, records: list[M.CycleRecord], goals: list[GoalSpec]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(CYCLE_COLUMNS) + head_columns(goals))
        for r in records:
            row = [
                r.cycle_index, r.phase, r.total, r.selected, r.analyzed, r.explored, r.selected_option,
                r.fallback_used, r.qualities.packet_loss, r.qualities.latency, r.qualities.energy,
                r.verification_time, r.learning_time, r.full_verification_time,
            ]
            for g in goals:
                h = r.heads.get(g.name)
                if g.is_classification:
                    row += [h.tp, h.fp, h.fn, h.tn] if h else ["", "", "", ""]
                else:
                    row.append(h.rho if h else "")
            w.writerow([_fmt(v) for v in row])


def read_cycles(path: Path, goals: list[GoalSpec]) -> list[M.CycleRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            heads = {}
            for g in goals:
                if g.is_classification:
                    if row[f"{g.name}_tp"] != "":
                        heads[g.name] = M.HeadScore(
                            "classification", *(int(row[f"{g.name}_{k}"]) for k in ("tp", "fp", "fn", "tn"))
                        )
                elif row[f"{g.name}_rho"] != "":
                    heads[g.name] = M.HeadScore("regression", rho=float(row[f"{g.name}_rho"]))
            records.append(
                M.CycleRecord(
                    cycle_index=int(row["cycle_index"]),
                    phase=row["phase"],
                    total=int(row["total"]),
                    selected=int(row["selected"]),
                    analyzed=int(row["analyzed"]),
                    explored=int(row["explored"]),
                    selected_option=int(row["selected_option"]),
                    fallback_used=row["fallback_used"] == "1",
                    qualities=QualityVector(float(row["packet_loss"]), float(row["latency"]), float(row["energy"])),
                    verification_time=float(row["verification_time"]),
                    learning_time=float(row["learning_time"]),
                    full_verification_time=float(row["full_verification_time"]),
                    heads=heads,
                )
            )
    return records


# --- summary.json ---------------------------------------------------------------------------


def _num(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def summary_schema() -> dict:
    return json.loads(resources.files("adaptspace.data").joinpath("summary.schema.json").read_text())


def summarize(records: list[M.CycleRecord], goals: list[GoalSpec], meta: dict) -> dict:
    """All metrics of one run; a pure function of its cycle records and goal set."""
    learning = M.learning_records(records)
    aasr, aaer = M.aasr(records), M.aaer(records)
    total = M.total_reduction(records)
    composed = M.compose_reduction(aasr, aaer) if not (math.isnan(aasr) or math.isnan(aaer)) else math.nan
    medians = {}
    for q in QUALITIES:
        vals = sorted(r.qualities[q] for r in learning)
        medians[q.value] = _num(float(np.median(vals))) if vals else None
    heads = {
        name: {k: (_num(v) if k != "kind" else v) for k, v in s.items()} for name, s in M.head_scores(records).items()
    }
    tm = M.timing(records)
    summary = {
        **meta,
        "goals": [g.to_record() for g in goals],
        "cycles": {"training": len(records) - len(learning), "learning": len(learning)},
        "heads": heads,
        "aasr": _num(aasr),
        "aaer": _num(aaer),
        "total_reduction": _num(total),
        "total_reduction_composed": _num(composed),
        "macro": {k: _num(v) for k, v in M.macro_reductions(records).items()},
        "time_reduction": _num(M.time_reduction(records)),
        "timing": {k: _num(v) for k, v in tm.items()},
        "quality_medians": medians,
        "goal_satisfaction": M.goal_satisfaction(records, goals),
        "fallback_cycles": sum(r.fallback_used for r in learning),
    }
    jsonschema.validate(summary, summary_schema())
    return summary


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --- commands --------------------------------------------------------------------------------


def _out_dir(args, cfg, default: str) -> Path:
    out = Path(args.out or cfg.get("output") or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg, base = load_config(args.config)
    run = scenario_from_config(cfg, base, args.seed, args.threads, args.verifier_runs, args.strategy)
    out = _out_dir(args, cfg, f"runs/{cfg.get('name', 'scenario')}")
    log.info("running %s (%s, %d cycles) into %s", cfg.get("name", args.config), run.strategy, run.cycles, out)
    result = run_scenario(run)
    write_cycles(out / "cycles.csv", result.records, run.goals)
    with open(out / "wallclock.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["cycle_index", "verification_wall", "cycle_wall"], lineterminator="\n")
        w.writeheader()
        w.writerows(result.wall_times)
    records = read_cycles(out / "cycles.csv", run.goals)
    meta = {
        "name": cfg.get("name", ""),
        "strategy": run.strategy,
        "seed": run.seed,
        "topology": run.topology.name,
        "space_size": len(run.topology.space()),
    }
    _write_json(out / "summary.json", summarize(records, run.goals, meta))
    if result.model is not None:
        result.model.save(out / "model.ckpt")
    print(f"wrote {out}/cycles.csv ({len(records)} cycles) and summary.json")
    return 0


def cmd_gridsearch(args) -> int:
    cfg, base = load_config(args.config)
    if "gridsearch" not in cfg:
        raise CliError(f"{args.config}: no 'gridsearch' section")
    gs = cfg["gridsearch"]
    run = scenario_from_config(cfg, base, args.seed, args.threads, args.verifier_runs, "exhaustive_reference")
    out = _out_dir(args, cfg, f"runs/{cfg.get('name', 'gridsearch')}")
    n_train, n_val = gs["train_cycles"], gs["validation_cycles"]
    data = collect_dataset(run, n_train + n_val)

    def stack(part):
        x = np.vstack([d[0] for d in part])
        y = {k: np.concatenate([d[1][k] for d in part]) for k in part[0][1]}
        return x, y

    grid = expand_grid(gs.get("grid"))
    result = grid_search(
        grid, stack(data[:n_train]), stack(data[n_train:]), run.goals,
        epochs=gs.get("epochs", 200), patience=gs.get("patience", 20), seed=run.seed,
    )
    score_cols = sorted({k for r in result.rows for k in r.head_scores})
    hp_cols = ["scaler", "batch_size", "learning_rate", "optimizer", "core_layers", "class_layers", "regr_layers"]
    with open(out / "gridsearch.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + hp_cols + ["n_params", "epochs_run", "validation_loss"] + score_cols)
        for r in result.rows:
            d = r.hyperparams.to_dict()
            hp_vals = [json.dumps(d[c]) if isinstance(d[c], list) else d[c] for c in hp_cols]
            scores = [r.head_scores.get(c, "") for c in score_cols]
            w.writerow([_fmt(v) for v in [r.index] + hp_vals + [r.n_params, r.epochs_run, r.validation_loss] + scores])
    best = result.best_row
    _write_json(
        out / "best.json",
        {
            "index": best.index,
            "hyperparams": best.hyperparams.to_dict(),
            "validation_loss": best.validation_loss,
            "n_params": best.n_params,
            "head_scores": {k: _num(v) for k, v in best.head_scores.items()},
            "grid_size": len(grid),
            "seed": run.seed,
        },
    )
    result.model.save(out / "model.ckpt")
    print(f"wrote {out}/gridsearch.csv ({len(grid)} rows) and best.json")
    return 0


def _load_run(d: Path):
    summary_path, cycles_path = d / "summary.json", d / "cycles.csv"
    if not summary_path.is_file() or not cycles_path.is_file():
        raise CliError(f"{d}: not a completed run (needs summary.json and cycles.csv)")
    summary = json.loads(summary_path.read_text())
    goals = goals_from_records(summary["goals"])
    return summary, goals, read_cycles(cycles_path, goals)


def cmd_compare(args) -> int:
    """Compare runs against the first one (the reference)."""
    if len(args.runs) < 2:
        raise CliError("compare needs at least two run directories")
    runs = [(Path(d), *_load_run(Path(d))) for d in args.runs]
    _, ref_summary, ref_goals, ref_records = runs[0]
    for d, s, goals, recs in runs[1:]:
        if s["seed"] != ref_summary["seed"] or [r.cycle_index for r in recs] != [r.cycle_index for r in ref_records]:
            raise CliError(f"{d}: seed or cycles differ from {runs[0][0]}")
        if [r.phase for r in recs] != [r.phase for r in ref_records]:
            raise CliError(f"{d}: training/learning split differs from {runs[0][0]}")
    out = Path(args.out or "compare")
    out.mkdir(parents=True, exist_ok=True)
    labels = [f"{i}:{d.name}" for i, (d, *_) in enumerate(runs)]
    head_names = sorted({h for _, s, _, _ in runs for h in s["heads"]})
    cols = ["run", "strategy", "aasr", "aaer", "total_reduction", "time_reduction", "time_reduction_vs_reference"]
    kinds = {h: k["kind"] for _, s, _, _ in runs for h, k in s["heads"].items()}
    cols += [f"{h}_f1" if kinds[h] == "classification" else f"{h}_rho" for h in head_names]
    for q in QUALITIES:
        cols += [f"{q.value}_median", f"{q.value}_delta"]
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for label, (d, s, goals, recs) in zip(labels, runs):
            qs = M.quality_summary(recs, ref_records, ref_goals)
            row = [label, s["strategy"], M.aasr(recs), M.aaer(recs), M.total_reduction(recs),
                   M.time_reduction(recs), M.time_reduction(recs, ref_records)]
            for h in head_names:
                hs = s["heads"].get(h, {})
                row.append(hs.get("f1", hs.get("rho", "")))
            for q in QUALITIES:
                row += [qs["qualities"][q.value]["median"], qs["qualities"][q.value]["delta"]]
            w.writerow(["" if v is None else _fmt(v) for v in row])
    with open(out / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cycle_index", "phase"] + [f"{lab}:{q.value}" for lab in labels for q in QUALITIES])
        for i, ref in enumerate(ref_records):
            row = [ref.cycle_index, ref.phase]
            for _, _, _, recs in runs:
                row += [recs[i].qualities[q] for q in QUALITIES]
            w.writerow([_fmt(v) for v in row])
    print(f"wrote {out}/compare.csv ({len(runs)} runs) and series.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptspace", description="Adaptation-space reduction experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="config file or bundled config name")
        sp.add_argument("--seed", type=int, default=None, help="override the config's top-level seed")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="verification worker threads")
        sp.add_argument("--verifier-runs", type=int, default=None, help="Monte-Carlo runs per option")

    run = sub.add_parser("run", help="run a scenario")
    common(run)
    run.add_argument("--strategy", choices=STRATEGIES, default=None, help="override the config's strategy")
    run.set_defaults(func=cmd_run)

    gs = sub.add_parser("gridsearch", help="offline hyper-parameter search")
    common(gs)
    gs.set_defaults(func=cmd_gridsearch)

    cmp_ = sub.add_parser("compare", help="compare completed runs; the first is the reference")
    cmp_.add_argument("runs", nargs="+", help="run directories")
    cmp_.add_argument("--out", default=None, help="output directory")
    cmp_.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, FileNotFoundError, ValueError, jsonschema.ValidationError, DivergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
