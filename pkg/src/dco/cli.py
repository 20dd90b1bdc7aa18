"""Command-line driver: ``dco {tune,calibrate,predict,experiment,ablation,sweep}``.

Exit codes: 0 success, 2 configuration or input error, 3 no feasible
candidate / threshold (a fallback was used; output is still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from .conformal import CalibratedRule, calibrate, parse_alpha
from .harness import (
    METHODS,
    ExperimentConfig,
    _data_and_plan,
    ablate_split_ratios,
    derive_seed,
    parse_ratio,
    run_experiment,
    sweep_alpha,
    to_jsonable,
)
from .riskcontrol import BqConfig
from .scores import (
    Candidate,
    GaussianPosteriorModel,
    PrecomputedTask,
    SchemaError,
    SyntheticTask,
    classification_candidates,
    load_precomputed,
    regression_candidates,
)
from .tuning import GridPolicy, dco_tune

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_FALLBACK = 0, 2, 3
TOP_ROWS = 10

_ALPHA = {"oneOf": [{"type": "string", "pattern": r"^\s*(\d+\s*/\s*\d+|0?\.\d+|\d+(\.\d+)?([eE]-?\d+)?)\s*$"}, {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}]}
_RATIO = {"oneOf": [{"type": "string", "pattern": r"^\s*\d+(\.\d+)?\s*/\s*\d+(\.\d+)?\s*$"}, {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}]}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["task"],
    "properties": {
        "task": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["regression", "classification", "precomputed"]},
                "dimension": {"type": "integer", "minimum": 1},
                "noise_scale": {"type": "number", "exclusiveMinimum": 0},
                "class_count": {"type": "integer", "minimum": 2},
                "rng_seed": {"type": "integer", "minimum": 0},
                "signal_scale": {"type": "number", "exclusiveMinimum": 0},
                "directory": {"type": "string"},
            },
        },
        "candidates": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "kind"],
                "properties": {"id": {"type": "string"}, "kind": {"type": "string"}, "params": {"type": "object"}},
            },
        },
        "alpha": _ALPHA,
        "alphas": {"type": "array", "minItems": 1, "items": _ALPHA},
        "methods": {"type": "array", "minItems": 1, "items": {"enum": list(METHODS)}},
        "n_seeds": {"type": "integer", "minimum": 1},
        "tune_ratio": _RATIO,
        "ratios": {"type": "array", "minItems": 1, "items": _RATIO},
        "n_train": {"type": "integer", "minimum": 1},
        "budget": {"type": "integer", "minimum": 2},
        "n_test": {"type": "integer", "minimum": 1},
        "fixed_candidate": {"type": "string"},
        "bq": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "loss_bound_B": {"type": "number", "exclusiveMinimum": 0},
                "mc_draws_M": {"type": "integer", "minimum": 1},
                "rng_seed": {"type": "integer", "minimum": 0},
                "common_draws": {"type": "boolean"},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "policy": {"enum": ["quantile", "scores", "explicit"]},
                "count": {"type": "integer", "minimum": 1},
                "values": {"type": "array", "minItems": 1, "items": {"type": "number"}},
            },
        },
        "tighten": {"type": "number", "minimum": 0},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "wilcoxon_pairs": {
            "type": "array",
            "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"enum": list(METHODS)}},
        },
        "stratify": {"type": "boolean"},
        "fixed_train": {"type": "boolean"},
        "out": {"type": "string"},
    },
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def load_config(path, overrides: dict | None = None) -> dict:
    """Read, apply command-line overrides, and validate a JSON run config."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    return raw


def build_task(task_conf: dict):
    kind = task_conf["kind"]
    if kind == "precomputed":
        if "directory" not in task_conf:
            raise ConfigError("precomputed task needs a directory")
        try:
            return PrecomputedTask.from_directory(task_conf["directory"])
        except (OSError, SchemaError) as exc:
            raise ConfigError(str(exc)) from exc
    if "directory" in task_conf:
        raise ConfigError("directory is only valid for precomputed tasks")
    return SyntheticTask(**task_conf)


def build_candidates(conf: dict, task) -> list[Candidate]:
    if "candidates" in conf:
        cands = [Candidate.from_dict(c) for c in conf["candidates"]]
    elif isinstance(task, PrecomputedTask):
        cands = task.candidates
    elif task.kind == "regression":
        cands = regression_candidates()
    else:
        cands = classification_candidates()
    ids = [c.id for c in cands]
    if len(set(ids)) != len(ids):
        raise ConfigError("candidate ids must be unique")
    want = "precomputed" if isinstance(task, PrecomputedTask) else task.kind
    for c in cands:
        if c.kind != want:
            raise ConfigError(f"candidate {c.id} has kind {c.kind}, task is {want}")
        if isinstance(task, PrecomputedTask) and c.id not in task.tables:
            raise ConfigError(f"no score file for candidate {c.id}")
    return cands


def build_experiment_config(conf: dict) -> ExperimentConfig:
    defaults = ExperimentConfig()
    grid = conf.get("grid", {})
    grid_policy = GridPolicy(
        policy=grid.get("policy", "quantile"),
        count=grid.get("count", 80),
        values=tuple(grid["values"]) if "values" in grid else None,
    )
    tune_ratio = conf.get("tune_ratio", defaults.tune_ratio)
    parse_ratio(tune_ratio)
    return ExperimentConfig(
        n_train=conf.get("n_train", defaults.n_train),
        budget=conf.get("budget", defaults.budget),
        n_test=conf.get("n_test", defaults.n_test),
        tune_ratio=str(tune_ratio),
        fixed_candidate=conf.get("fixed_candidate"),
        bq=BqConfig(**conf.get("bq", {})),
        grid=grid_policy,
        tighten=conf.get("tighten", 0.0),
        master_seed=conf.get("master_seed", 0),
        wilcoxon_pairs=tuple(tuple(p) for p in conf.get("wilcoxon_pairs", ())),
        stratify=conf.get("stratify", True),
        fixed_train=conf.get("fixed_train", False),
    )


def _prepare(args) -> tuple[dict, object, list[Candidate], ExperimentConfig]:
    overrides = {
        "master_seed": getattr(args, "seed", None),
        "methods": _split_list(getattr(args, "methods", None)),
        "alpha": getattr(args, "alpha", None),
        "n_seeds": getattr(args, "seeds", None),
        "ratios": _split_list(getattr(args, "ratios", None)),
    }
    conf = load_config(args.config, overrides)
    try:
        task = build_task(conf["task"])
        cands = build_candidates(conf, task)
        cfg = build_experiment_config(conf)
        if "alpha" in conf:
            parse_alpha(conf["alpha"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return conf, task, cands, cfg


def _split_list(text):
    if text is None:
        return None
    return [t.strip() for t in text.split(",") if t.strip()]


def _out_dir(args, conf) -> Path:
    out = getattr(args, "out", None) or conf.get("out") or "."
    return Path(out)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to a temporary file in the target directory, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _stamp(payload: dict, master_seed) -> dict:
    return {"schema_version": SCHEMA_VERSION, "master_seed": master_seed, **payload}


def _candidate_table(rows, limit=TOP_ROWS) -> str:
    feasible = sorted((r for r in rows if r.feasible), key=lambda r: (r.emp_size, r.p95_size, r.candidate.id))
    rest = sorted((r for r in rows if not r.feasible), key=lambda r: (r.emp_risk, r.emp_size, r.candidate.id))
    ordered = (feasible + rest)[:limit]
    lines = [f"{'id':<14} {'variant':<14} {'lambda':>10} {'status':>10} {'avg size':>9} {'P95':>7}"]
    for r in ordered:
        lam = "-" if r.lambda_min is None else f"{r.lambda_min:.4f}"
        variant = str(r.candidate.params.get("score_variant", "-"))
        status = "feasible" if r.feasible else "infeasible"
        lines.append(f"{r.candidate.id:<14} {variant:<14} {lam:>10} {status:>10} {r.emp_size:>9.3f} {r.p95_size:>7.3f}")
    if len(rows) > limit:
        lines.append(f"... {len(rows) - limit} more candidates in the JSON output")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _single_split(task, cands, cfg):
    seed = derive_seed(cfg.master_seed, 0)
    data, plan = _data_and_plan(task, cfg, seed)
    return seed, data, plan


def _tune(conf, task, cands, cfg):
    alpha = parse_alpha(conf.get("alpha", "1/5"))
    seed, data, plan = _single_split(task, cands, cfg)
    result = dco_tune(task, data.view(plan.train), data.view(plan.tune), cands, alpha, cfg.grid, cfg.tighten, seed=derive_seed(seed, 3))
    return alpha, seed, data, plan, result


def cmd_tune(args) -> int:
    conf, task, cands, cfg = _prepare(args)
    alpha, seed, data, plan, result = _tune(conf, task, cands, cfg)
    payload = _stamp({**result.to_dict(), "split_sizes": list(plan.sizes), "seed": seed}, cfg.master_seed)
    write_atomic(_out_dir(args, conf) / "tune_result.json", _dump(payload))
    print(_candidate_table(result.table))
    print(f"selected {result.selected.id}" + (" (fallback: no feasible candidate)" if result.fallback_used else ""))
    return EXIT_FALLBACK if result.fallback_used else EXIT_OK


def cmd_calibrate(args) -> int:
    conf, task, cands, cfg = _prepare(args)
    alpha, seed, data, plan, result = _tune(conf, task, cands, cfg)
    rule = calibrate(result.selected_model, data.view(plan.cal), alpha)
    out = _out_dir(args, conf)
    write_atomic(out / "tune_result.json", _dump(_stamp({**result.to_dict(), "split_sizes": list(plan.sizes), "seed": seed}, cfg.master_seed)))
    write_atomic(out / "rule.json", _dump(_stamp(rule.to_dict(), cfg.master_seed)))
    print(f"selected {rule.candidate.id}, threshold {rule.threshold:.6g} from m_cal={rule.m_cal}")
    return EXIT_FALLBACK if result.fallback_used else EXIT_OK


def _read_features(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0]
    if header[0] != "sample_id" or not all(h.startswith("x") for h in header[1:]) or len(header) < 2:
        raise SchemaError(f"{path}: header must be sample_id,x0,x1,...")
    try:
        X = np.array([[float(c) for c in r[1:]] for r in rows[1:]], dtype=float).reshape(len(rows) - 1, len(header) - 1)
    except ValueError:
        raise SchemaError(f"{path}: non-numeric feature cell") from None
    return [r[0] for r in rows[1:]], X


def cmd_predict(args) -> int:
    try:
        with open(args.rule, encoding="utf-8") as fh:
            rule = CalibratedRule.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot load rule {args.rule}: {exc}") from exc
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    t = rule.threshold
    if rule.candidate.kind == "precomputed":
        table = load_precomputed(args.input, require_labels=False)
        w.writerow(["sample_id", "full_set", "size", "labels"])
        for sid, row in zip(table.sample_ids, table.scores):
            labels = np.flatnonzero(row <= t).tolist()
            w.writerow([sid, int(rule.infinite), len(labels), " ".join(map(str, labels))])
    else:
        model = rule.model
        if model is None:
            raise ConfigError("rule has no embedded model")
        if model.candidate.id != rule.candidate.id:
            raise ConfigError("rule and embedded model name different candidates")
        ids, X = _read_features(args.input)
        if X.shape[1] != _feature_dim(model):
            raise SchemaError(f"{args.input}: expected {_feature_dim(model)} features, got {X.shape[1]}")
        if isinstance(model, GaussianPosteriorModel):
            lo, hi = model.intervals(X, t)
            w.writerow(["sample_id", "full_set", "lower", "upper"])
            for sid, a, b in zip(ids, lo, hi):
                w.writerow([sid, int(rule.infinite), to_jsonable(float(a)), to_jsonable(float(b))])
        else:
            w.writerow(["sample_id", "full_set", "size", "labels"])
            for sid, labels in zip(ids, model.label_sets(X, t)):
                w.writerow([sid, int(rule.infinite), len(labels), " ".join(map(str, labels))])
    out = Path(args.out) if args.out else Path(".")
    write_atomic(out / "predictions.csv", buf.getvalue())
    return EXIT_OK


def _feature_dim(model) -> int:
    if isinstance(model, GaussianPosteriorModel):
        return model.coef_mean.size - 1
    return model.centroids.shape[1]


def _methods(conf) -> list[str]:
    return conf.get("methods", ["dco", "direct", "bq_fixed", "split_cp"])


def _fallback_any(report) -> bool:
    return any(t.fallback_used for t in report.trials)


def cmd_experiment(args) -> int:
    conf, task, cands, cfg = _prepare(args)
    alpha = conf.get("alpha", "1/5")
    report = run_experiment(task, cands, alpha, _methods(conf), conf.get("n_seeds", 200), cfg)
    out = _out_dir(args, conf)
    write_atomic(out / "report.json", report.to_json() + "\n")
    write_atomic(out / "per_seed.csv", report.per_seed_csv())
    print(report.summary_table())
    return EXIT_OK


def _multi_output(out: Path, key: str, labels, reports, master_seed) -> None:
    entries = [{key: lab, **r.to_dict()} for lab, r in zip(labels, reports)]
    payload = _stamp({"mode": "ablation" if key == "ratio" else "sweep", "reports": entries}, master_seed)
    write_atomic(out / "report.json", json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    for i, (lab, r) in enumerate(zip(labels, reports)):
        lines = r.per_seed_csv().splitlines()
        if i == 0:
            buf.write(f"{key},{lines[0]}\n")
        for line in lines[1:]:
            buf.write(f"{lab},{line}\n")
    write_atomic(out / "per_seed.csv", buf.getvalue())


def cmd_ablation(args) -> int:
    conf, task, cands, cfg = _prepare(args)
    ratios = [str(r) for r in conf.get("ratios", ["20/80", "33/67", "50/50", "67/33", "80/20"])]
    try:
        for r in ratios:
            parse_ratio(r)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    methods = conf.get("methods", ["dco"])
    reports = ablate_split_ratios(task, cands, conf.get("alpha", "1/5"), ratios, conf.get("n_seeds", 200), cfg, methods)
    _multi_output(_out_dir(args, conf), "ratio", ratios, reports, cfg.master_seed)
    print(f"{'ratio':<8} {'method':<20} {'coverage':>9} {'avg size':>9} {'P95 std':>8} {'stability':>9}")
    for r_label, rep in zip(ratios, reports):
        for m in rep.methods:
            s = rep.summary(m)
            print(f"{r_label:<8} {m:<20} {s['coverage']['mean']:>9.4f} {s['avg_size']['mean']:>9.4f} {s['p95_size']['std']:>8.4f} {rep.stability(m):>9.3f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    conf, task, cands, cfg = _prepare(args)
    alphas = conf.get("alphas", [conf["alpha"]] if "alpha" in conf else ["1/5", "1/10", "1/20"])
    try:
        parsed = [parse_alpha(a) for a in alphas]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    reports = sweep_alpha(task, cands, parsed, _methods(conf), conf.get("n_seeds", 200), cfg)
    _multi_output(_out_dir(args, conf), "alpha", [str(a) for a in alphas], reports, cfg.master_seed)
    for a, rep in zip(alphas, reports):
        print(f"alpha = {a}")
        print(rep.summary_table())
    return EXIT_OK


COMMANDS = {
    "tune": cmd_tune,
    "calibrate": cmd_calibrate,
    "predict": cmd_predict,
    "experiment": cmd_experiment,
    "ablation": cmd_ablation,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dco", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("tune", "calibrate", "experiment", "ablation", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--alpha")
        if name in ("experiment", "ablation", "sweep"):
            sp.add_argument("--methods")
            sp.add_argument("--seeds", type=int)
        if name == "ablation":
            sp.add_argument("--ratios")
    sp = sub.add_parser("predict")
    sp.add_argument("--rule", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
