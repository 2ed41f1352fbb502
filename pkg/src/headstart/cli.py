"""Experiment runner: JSON config in, results.json and curves.csv out.

Subcommands:
  run      execute a continual-learning experiment per initializer
  compare  efficiency gain between two result files
  synth    generate synthetic feature files in the binary format

Every initializer inside one run shares the data, schedule, pretrained
head, and random streams, so curves differ only through initialization.
Outputs are pure functions of the config: reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .datastore import FeatureDataset, TaskSchedule, add_bias_column, load_features, partition_tasks, save_features
from .evaluation import EvalLog, EvalRecord, average_accuracy, efficiency_gain
from .exceptions import GridMismatchError, HeadstartError
from .initializers import InitStrategy
from .losses import LossKind
from .stats import compute_stats, nc1, nc2
from .synth import SynthSpec, class_means, gen_stream
from .trainer import ExperimentResult, TrainConfig, load_head, pretrain_head, run_continual


class ConfigError(ValueError):
    """The experiment config file is missing, malformed, or inconsistent."""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="headstart", description="continual linear-head experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config", help="path to the experiment config")

    p_cmp = sub.add_parser("compare", help="efficiency gain between two results files")
    p_cmp.add_argument("reference", help="results.json of the reference run")
    p_cmp.add_argument("test", help="results.json of the test run")

    p_syn = sub.add_parser("synth", help="generate synthetic feature files")
    p_syn.add_argument("--classes", type=int, required=True)
    p_syn.add_argument("--dim", type=int, required=True)
    p_syn.add_argument("--mean-layout", default="simplex_etf",
                       choices=["simplex_etf", "simplex-etf", "random_gaussian", "random-gaussian"])
    p_syn.add_argument("--mean-scale", type=float, default=1.0)
    p_syn.add_argument("--within-std", type=float, default=0.1)
    p_syn.add_argument("--samples-per-class", type=int, default=100)
    p_syn.add_argument("--test-samples-per-class", type=int, default=None)
    p_syn.add_argument("--mean-offset", type=float, default=0.0)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--out-train", required=True)
    p_syn.add_argument("--out-test", required=True)

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "compare":
        return cmd_compare(args.reference, args.test)
    return cmd_synth(args)


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------- run

_TRAIN_DEFAULTS = {
    "iterations_per_task": 600,
    "buffer_capacity": 24000,
    "batch_size": 256,
    "learning_rate": 1e-3,
    "weight_decay": 0.05,
    "eval_every": 50,
    "seed": 0,
    "track_ls_deviation": True,
}
_LOSS_DEFAULTS = {"kind": "ce", "kappa": 15.0, "beta": 30.0}
_INIT_DEFAULTS = {"kind": "least_square", "lambda": 0.05, "seed": 0}


def _merge(defaults: dict, given: dict, where: str) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(given)
    return merged


def _build_loss(raw: dict) -> LossKind:
    cfg = _merge(_LOSS_DEFAULTS, raw, "train.loss")
    return LossKind(kind=cfg["kind"], kappa=cfg["kappa"], beta=cfg["beta"])


def _build_init(raw: dict) -> InitStrategy:
    cfg = _merge(_INIT_DEFAULTS, raw, "initializers[]")
    return InitStrategy(kind=cfg["kind"], lam=cfg["lambda"], seed=cfg["seed"])


def _build_data(raw: dict) -> tuple[FeatureDataset, FeatureDataset, dict]:
    if "synth" in raw:
        spec_cfg = dict(raw["synth"])
        spec = SynthSpec(**spec_cfg)
        train, test = gen_stream(spec)
        return train, test, {"synth": asdict(spec)}
    if "train_path" in raw and "test_path" in raw:
        fmt = raw.get("format", "binary")
        train = load_features(raw["train_path"], fmt, split="train")
        test = load_features(raw["test_path"], fmt, split="test")
        return train, test, {
            "train_path": raw["train_path"], "test_path": raw["test_path"], "format": fmt,
        }
    raise ConfigError("data needs either a 'synth' spec or train_path/test_path")


def load_experiment(config_path):
    """Parse and normalize an experiment config file."""
    try:
        raw = json.loads(Path(config_path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    for key in ("data", "schedule", "train", "initializers"):
        if key not in raw:
            raise ConfigError(f"config is missing {key!r}")
    try:
        train_data, test_data, data_echo = _build_data(raw["data"])
        sched_cfg = _merge(
            {"pretrain_class_count": None, "num_cl_tasks": None,
             "classes_per_task": None, "order_seed": 0},
            raw["schedule"], "schedule",
        )
        for key, value in sched_cfg.items():
            if value is None:
                raise ConfigError(f"schedule.{key} is required")
        train_cfg = _merge(
            dict(_TRAIN_DEFAULTS, loss={}), raw["train"], "train"
        )
        loss = _build_loss(train_cfg.pop("loss"))
        initializers = [_build_init(cfg) for cfg in raw["initializers"]]
        if not initializers:
            raise ConfigError("at least one initializer is required")
        pretrain = raw.get("pretrain", "train")
        if isinstance(pretrain, str):
            pretrain = {"method": pretrain}
        if pretrain.get("method") not in ("train", "least_square", "load"):
            raise ConfigError("pretrain.method must be train, least_square, or load")
        output_dir = raw.get("output_dir", ".")
    except (TypeError, ValueError, HeadstartError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    schedule = partition_tasks(
        train_data,
        sched_cfg["pretrain_class_count"],
        sched_cfg["num_cl_tasks"],
        sched_cfg["classes_per_task"],
        sched_cfg["order_seed"],
    )
    return {
        "train_data": train_data,
        "test_data": test_data,
        "schedule": schedule,
        "sched_cfg": sched_cfg,
        "train_cfg": train_cfg,
        "loss": loss,
        "initializers": initializers,
        "pretrain": pretrain,
        "output_dir": output_dir,
        "echo": {
            "data": data_echo,
            "schedule": sched_cfg,
            "train": dict(train_cfg, loss=asdict(loss)),
            "initializers": [asdict(s) for s in initializers],
            "pretrain": pretrain,
        },
    }


def _init_name(strategy: InitStrategy, taken: set) -> str:
    name = strategy.kind
    k = 2
    while name in taken:
        name = f"{strategy.kind}_{k}"
        k += 1
    taken.add(name)
    return name


def _fingerprint(echo: dict) -> str:
    grid_part = {k: v for k, v in echo.items() if k != "initializers"}
    blob = json.dumps(grid_part, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _record_dict(record: EvalRecord) -> dict:
    return {
        "task": record.task_id,
        "iteration": record.iteration,
        "global_step": record.global_step,
        "acc_pre": record.acc_pre,
        "acc_new": record.acc_new,
        "acc_old": record.acc_old,
        "acc_all": record.acc_all,
        "loss_new": record.loss_new,
        "loss_new_test": record.loss_new_test,
        "buffer_size": record.buffer_size,
    }


def _run_dict(result: ExperimentResult) -> dict:
    return {
        "records": [_record_dict(r) for r in result.records],
        "boundaries": [
            {
                "task": b.task_id,
                "ls_dev": b.ls_dev,
                "nc1": b.nc1,
                "nc2": b.nc2,
                "nc3": b.nc3,
                "nc4": b.nc4,
                "checkpoint_ls_devs": b.checkpoint_ls_devs,
            }
            for b in result.boundaries
        ],
        "steps_per_task": {str(k): v for k, v in result.steps_per_task.items()},
        "buffer_size_per_task": {str(k): v for k, v in result.buffer_size_per_task.items()},
    }


def _log_from_dicts(records: list[dict], fingerprint: str) -> EvalLog:
    return EvalLog(
        records=[
            EvalRecord(
                task_id=r["task"],
                iteration=r["iteration"],
                global_step=r["global_step"],
                acc_pre=r["acc_pre"],
                acc_new=r["acc_new"],
                acc_old=r["acc_old"],
                acc_all=r["acc_all"],
                loss_new=r["loss_new"],
                loss_new_test=r["loss_new_test"],
                buffer_size=r.get("buffer_size", 0),
            )
            for r in records
        ],
        config_fingerprint=fingerprint,
    )


def _gain_dict(gain) -> dict:
    return {
        "per_task": [
            {
                "task": g.task_id,
                "gain": g.gain,
                "threshold": g.threshold,
                "reference_iteration": g.reference_iteration,
                "test_iteration": g.test_iteration,
                "unreachable": g.threshold_unreachable,
            }
            for g in gain.per_task
        ],
        "mean": gain.mean,
    }


def execute_experiment(experiment: dict) -> dict:
    """Run every initializer over the shared data and assemble the results."""
    base = dict(experiment["train_cfg"])
    loss = experiment["loss"]
    schedule: TaskSchedule = experiment["schedule"]
    pre_cfg = experiment["pretrain"]
    fingerprint = _fingerprint(experiment["echo"])

    probe_config = TrainConfig(loss=loss, init=experiment["initializers"][0], **base)
    if pre_cfg["method"] == "load":
        head = load_head(pre_cfg["path"])
    else:
        head = pretrain_head(
            experiment["train_data"], schedule, probe_config, pre_cfg["method"]
        )

    taken: set = set()
    names, results = [], {}
    for strategy in experiment["initializers"]:
        name = _init_name(strategy, taken)
        config = TrainConfig(loss=loss, init=strategy, **base)
        result = run_continual(
            config, experiment["train_data"], experiment["test_data"], schedule, head
        )
        names.append(name)
        results[name] = result

    runs = {name: _run_dict(results[name]) for name in names}
    gains = {}
    random_names = [n for n, s in zip(names, experiment["initializers"]) if s.kind == "random"]
    if random_names:
        reference = EvalLog(results[random_names[0]].records, fingerprint)
        for name in names:
            if name == random_names[0]:
                continue
            log = EvalLog(results[name].records, fingerprint)
            gains[f"{name}_vs_{random_names[0]}"] = _gain_dict(
                efficiency_gain(reference, log)
            )
    cl_task_ids = [t.task_id for t in schedule.tasks[1:]]
    return {
        "config": experiment["echo"],
        "fingerprint": fingerprint,
        "grid": {
            "eval_every": base["eval_every"],
            "iterations_per_task": base["iterations_per_task"],
            "cl_task_ids": cl_task_ids,
        },
        "initializers": names,
        "runs": runs,
        "efficiency_gain": gains,
    }


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_outputs(payload: dict, output_dir) -> tuple[Path, Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.json"
    curves_path = out / "curves.csv"
    results_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    lines = ["init,task,iteration,acc_pre,acc_new,acc_old,acc_all,loss_new"]
    for name in payload["initializers"]:
        for r in payload["runs"][name]["records"]:
            lines.append(",".join([
                name,
                str(r["task"]),
                str(r["iteration"]),
                _format_cell(r["acc_pre"]),
                _format_cell(r["acc_new"]),
                _format_cell(r["acc_old"]),
                _format_cell(r["acc_all"]),
                _format_cell(r["loss_new"]),
            ]))
    curves_path.write_text("\n".join(lines) + "\n")
    return results_path, curves_path


def cmd_run(config_path) -> int:
    """Execute an experiment config; writes results.json and curves.csv."""
    try:
        experiment = load_experiment(config_path)
    except ConfigError as exc:
        return _fail(1, str(exc))
    try:
        payload = execute_experiment(experiment)
        write_outputs(payload, experiment["output_dir"])
    except (HeadstartError, OSError, ValueError) as exc:
        return _fail(2, f"{type(exc).__name__}: {exc}")
    return 0


# ---------------------------------------------------------------- compare

def cmd_compare(reference_path, test_path) -> int:
    """Print per-task and mean efficiency gain of test over reference runs.

    Uses the first initializer log of each results file. Exits 1 when the
    files are unreadable or their evaluation grids disagree.
    """
    try:
        ref_payload = json.loads(Path(reference_path).read_text())
        test_payload = json.loads(Path(test_path).read_text())
        ref_name = ref_payload["initializers"][0]
        test_name = test_payload["initializers"][0]
        ref_log = _log_from_dicts(
            ref_payload["runs"][ref_name]["records"], ref_payload.get("fingerprint", "")
        )
        test_log = _log_from_dicts(
            test_payload["runs"][test_name]["records"], test_payload.get("fingerprint", "")
        )
        gain = efficiency_gain(ref_log, test_log)
    except (OSError, json.JSONDecodeError, KeyError, IndexError) as exc:
        return _fail(1, f"cannot load results: {exc!r}")
    except GridMismatchError as exc:
        return _fail(1, f"MismatchedGrids: {exc}")
    deltas = {}
    for task_id in ref_log.task_ids():
        if task_id < 2:
            continue
        ref0 = ref_log.task_records(task_id)[0].acc_new
        test0 = test_log.task_records(task_id)[0].acc_new
        deltas[str(task_id)] = test0 - ref0
    print(json.dumps({
        "reference": ref_name,
        "test": test_name,
        "efficiency_gain": _gain_dict(gain),
        "iteration0_acc_new_delta": deltas,
    }, sort_keys=True, indent=2))
    return 0


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    """Generate a synthetic stream, save both splits, print sanity metrics."""
    try:
        spec = SynthSpec(
            class_count=args.classes,
            dim=args.dim,
            mean_layout=args.mean_layout.replace("-", "_"),
            mean_scale=args.mean_scale,
            within_std=args.within_std,
            samples_per_class=args.samples_per_class,
            test_samples_per_class=args.test_samples_per_class,
            mean_offset=args.mean_offset,
            seed=args.seed,
        )
    except (ValueError, HeadstartError) as exc:
        return _fail(1, str(exc))
    train, test = gen_stream(spec)
    save_features(train, args.out_train)
    save_features(test, args.out_test)
    stats = compute_stats(add_bias_column(train.features), train.labels)
    print(json.dumps({
        "train_samples": train.num_samples,
        "test_samples": test.num_samples,
        "nc1": nc1(stats),
        "nc2_means": nc2(class_means(spec).T),
    }, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
