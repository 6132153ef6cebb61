"""Command-line pipeline: simulate | build-dataset | train | eval | verify | all.

A single JSON configuration file with sections (bearing, schedule, sim,
train, eval) feeds every subcommand; flags override file values.  Each
subcommand writes its outputs plus a run_manifest.json with the resolved
configuration snapshot into its output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from . import __version__
from .core import (BearingConfig, ConfigError, LoadSchedule, SimParams,
                   bearing_config_from_dict, load_config_file,
                   load_schedule_from_dict, loaded_roller_index,
                   sim_params_from_dict)
from .evaluation import single_step_eval, verification_sweep
from .graphs import SamplingPolicy, save_dataset_manifest
from .reports import emit_report
from .simulator import simulate
from .training import (TrainConfig, build_split, expected_trajectory_grid,
                       load_checkpoint, save_checkpoint, save_history_csv,
                       train, trajectory_filename)
from .trajfile import load_trajectory, save_trajectory

CONFIG_SECTIONS = ("bearing", "schedule", "sim", "train", "eval")

DEFAULT_EVAL = {
    "windows": [[0, 250], [2500, 2750]],
    "sweep_range": [-0.05, 0.05],
    "sweep_points": 101,
}


def _train_config_from_dict(data: dict) -> TrainConfig:
    known = set(TrainConfig.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown train config keys: {', '.join(unknown)}")
    tc = TrainConfig(**data)
    tc.validate()
    return tc


def resolve_config(path: str | None, seed: int | None = None) -> dict:
    """Merge the config file over defaults; returns plain dict sections."""
    raw = load_config_file(path) if path else {}
    unknown = sorted(set(raw) - set(CONFIG_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    resolved = {
        "bearing": asdict(bearing_config_from_dict(raw.get("bearing", {}))),
        "schedule": {**asdict(load_schedule_from_dict(raw.get("schedule", {}))),
                     "direction": list(raw.get("schedule", {}).get(
                         "direction", (0.0, -1.0)))},
        "sim": asdict(sim_params_from_dict(raw.get("sim", {}))),
        "train": asdict(_train_config_from_dict(raw.get("train", {}))),
        "eval": {**DEFAULT_EVAL, **raw.get("eval", {})},
    }
    bad_eval = sorted(set(resolved["eval"]) - set(DEFAULT_EVAL))
    if bad_eval:
        raise ConfigError(f"unknown eval config keys: {', '.join(bad_eval)}")
    if seed is not None:
        resolved["train"]["seed"] = seed
        resolved["sim"]["seed"] = seed
    return resolved


def _write_manifest(out_dir: str, subcommand: str, resolved: dict,
                    inputs: list[str], outputs: list[str], seed,
                    started: float) -> None:
    doc = {
        "subcommand": subcommand,
        "config": resolved,
        "inputs": inputs,
        "outputs": sorted(os.path.relpath(p, out_dir) for p in outputs),
        "seed": seed,
        "tool_version": __version__,
        "timings": {"wall_seconds": time.time() - started},
    }
    path = os.path.join(out_dir, "run_manifest.json")
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1)
    os.replace(tmp, path)


def _simulate_one(task) -> str:
    bearing, schedule, sim, out_path = task
    config = bearing_config_from_dict(bearing)
    sched = load_schedule_from_dict(schedule)
    params = sim_params_from_dict(sim)
    save_trajectory(out_path, simulate(config, sched, params))
    return out_path


def _worker_count() -> int:
    env = os.environ.get("BEARNET_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def cmd_simulate(resolved: dict, out_dir: str, seed) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    tasks = []
    for n, load in expected_trajectory_grid():
        bearing = {**resolved["bearing"], "n_rollers": n}
        schedule = {**resolved["schedule"], "base_load": float(load)}
        out_path = os.path.join(out_dir, trajectory_filename(n, load))
        tasks.append((bearing, schedule, resolved["sim"], out_path))
    workers = _worker_count()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_simulate_one, tasks))
    else:
        outputs = [_simulate_one(t) for t in tasks]
    for path in outputs:
        print(f"wrote {path}")
    return outputs


def cmd_build_dataset(resolved: dict, traj_dir: str, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    policy = SamplingPolicy()
    train_ds, test_ds = build_split(traj_dir, policy)
    outputs = []
    for ds, name in ((train_ds, "dataset_train.json"),
                     (test_ds, "dataset_test.json")):
        path = os.path.join(out_dir, name)
        save_dataset_manifest(path, ds.split, ds.provenance, policy, ds.stats)
        outputs.append(path)
        print(f"wrote {path} ({len(ds.graphs)} graphs)")
    return outputs


def cmd_train(resolved: dict, traj_dir: str, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    train_ds, _ = build_split(traj_dir)
    tc = _train_config_from_dict(resolved["train"])
    ckpt, history = train(train_ds, tc,
                          bearing_configs=[{**resolved["bearing"], "n_rollers": n}
                                           for n in (13, 14, 16)])
    ckpt_path = os.path.join(out_dir, "checkpoint.json")
    save_checkpoint(ckpt_path, ckpt)
    hist_path = os.path.join(out_dir, "history.csv")
    save_history_csv(hist_path, history)
    print(f"wrote {ckpt_path} (final eval loss {history[-1][2]:.6g})")
    return [ckpt_path, hist_path]


def cmd_eval(resolved: dict, ckpt_path: str, traj_dir: str,
             out_dir: str) -> list[str]:
    ckpt = load_checkpoint(ckpt_path)
    from .training import TEST_LOAD, TEST_ROLLER_COUNT
    test_path = os.path.join(
        traj_dir, trajectory_filename(TEST_ROLLER_COUNT, TEST_LOAD))
    traj = load_trajectory(test_path)
    windows = tuple(tuple(w) for w in resolved["eval"]["windows"])
    rows = single_step_eval(ckpt, traj, windows)
    for r in rows:
        r.trajectory_id = os.path.basename(test_path)
    return emit_report(rows, [], out_dir, windows=windows,
                       loaded_roller=loaded_roller_index(traj.config))


def cmd_verify(resolved: dict, ckpt_path: str, out_dir: str) -> list[str]:
    ckpt = load_checkpoint(ckpt_path)
    from .training import TEST_ROLLER_COUNT
    config = bearing_config_from_dict(
        {**resolved["bearing"], "n_rollers": TEST_ROLLER_COUNT})
    lo, hi = resolved["eval"]["sweep_range"]
    rows = verification_sweep(ckpt, config, (lo, hi),
                              resolved["eval"]["sweep_points"])
    return emit_report([], rows, out_dir)


def run(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="bearnet",
        description="bearing simulation and graph-network surrogate pipeline")
    parser.add_argument("subcommand",
                        choices=["simulate", "build-dataset", "train", "eval",
                                 "verify", "all"])
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, help="override config seeds")
    parser.add_argument("--checkpoint", help="checkpoint file (eval/verify)")
    parser.add_argument("--trajectories", help="trajectory directory")
    args = parser.parse_args(argv)

    started = time.time()
    resolved = resolve_config(args.config, args.seed)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    sub = args.subcommand

    def need(value, flag):
        if not value:
            parser.error(f"{sub} requires {flag}")
        return value

    if sub == "simulate":
        outputs = cmd_simulate(resolved, out_dir, args.seed)
        inputs = [args.config] if args.config else []
    elif sub == "build-dataset":
        traj = need(args.trajectories, "--trajectories")
        outputs = cmd_build_dataset(resolved, traj, out_dir)
        inputs = [traj]
    elif sub == "train":
        traj = need(args.trajectories, "--trajectories")
        outputs = cmd_train(resolved, traj, out_dir)
        inputs = [traj]
    elif sub == "eval":
        ckpt = need(args.checkpoint, "--checkpoint")
        traj = need(args.trajectories, "--trajectories")
        outputs = cmd_eval(resolved, ckpt, traj, out_dir)
        inputs = [ckpt, traj]
    elif sub == "verify":
        ckpt = need(args.checkpoint, "--checkpoint")
        outputs = cmd_verify(resolved, ckpt, out_dir)
        inputs = [ckpt]
    else:  # all
        traj_dir = os.path.join(out_dir, "trajectories")
        outputs = cmd_simulate(resolved, traj_dir, args.seed)
        _write_manifest(traj_dir, "simulate", resolved, [], outputs,
                        args.seed, started)
        t = time.time()
        ds_dir = os.path.join(out_dir, "dataset")
        ds_out = cmd_build_dataset(resolved, traj_dir, ds_dir)
        _write_manifest(ds_dir, "build-dataset", resolved, [traj_dir], ds_out,
                        args.seed, t)
        t = time.time()
        train_dir = os.path.join(out_dir, "train")
        train_out = cmd_train(resolved, traj_dir, train_dir)
        _write_manifest(train_dir, "train", resolved, [traj_dir], train_out,
                        args.seed, t)
        ckpt_path = train_out[0]
        t = time.time()
        eval_dir = os.path.join(out_dir, "eval")
        eval_out = cmd_eval(resolved, ckpt_path, traj_dir, eval_dir)
        _write_manifest(eval_dir, "eval", resolved, [ckpt_path], eval_out,
                        args.seed, t)
        t = time.time()
        verify_dir = os.path.join(out_dir, "verify")
        verify_out = cmd_verify(resolved, ckpt_path, verify_dir)
        _write_manifest(verify_dir, "verify", resolved, [ckpt_path],
                        verify_out, args.seed, t)
        outputs = outputs + ds_out + train_out + eval_out + verify_out
        _write_manifest(out_dir, "all", resolved,
                        [args.config] if args.config else [], [], args.seed,
                        started)
        return 0
    _write_manifest(out_dir, sub, resolved,
                    [i for i in inputs if i], outputs, args.seed, started)
    return 0


def main() -> None:
    try:
        sys.exit(run(sys.argv[1:]))
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
