"""JSON Lines persistence for trajectories.

Line 1 is a header object {format_version, config, schedule, sim_params};
every following line is one step record.  Positions and velocities are
serialized in mm and mm/s, forces in N.  Floats use Python's shortest
round-trip decimal representation.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict

import numpy as np

from .core import (BearingState, RigidBody2D, bearing_config_from_dict,
                   load_schedule_from_dict, sim_params_from_dict)
from .simulator import FORMAT_VERSION, RollerContact, StepRecord, Trajectory


class TrajectoryFormatError(ValueError):
    """Trajectory file is malformed or has an unsupported version."""


def _vec(a) -> list[float]:
    return [float(a[0]), float(a[1])]


def _record_to_dict(rec: StepRecord) -> dict:
    return {
        "step": rec.step,
        "time": rec.time,
        "state": {
            "inner": {"position": _vec(rec.state.inner.position * 1000.0),
                      "velocity": _vec(rec.state.inner.velocity * 1000.0)},
            "outer": {"position": _vec(rec.state.outer.position * 1000.0),
                      "velocity": _vec(rec.state.outer.velocity * 1000.0)},
        },
        "external_force": _vec(rec.external_force),
        "rollers": [
            {"index": rc.index, "angle": rc.angle, "center": _vec(rc.center),
             "deflection_total": rc.deflection_total,
             "q_inner": _vec(rc.q_inner), "q_outer": _vec(rc.q_outer),
             "load_magnitude": rc.load_magnitude}
            for rc in rec.rollers
        ],
        "net_force_inner": _vec(rec.net_force_inner),
        "net_force_outer": _vec(rec.net_force_outer),
    }


def _record_from_dict(d: dict) -> StepRecord:
    def body(b):
        return RigidBody2D(np.asarray(b["position"]) / 1000.0,
                           np.asarray(b["velocity"]) / 1000.0)

    rollers = [RollerContact(index=r["index"], angle=r["angle"],
                             center=np.asarray(r["center"], dtype=float),
                             deflection_total=r["deflection_total"],
                             q_inner=np.asarray(r["q_inner"], dtype=float),
                             q_outer=np.asarray(r["q_outer"], dtype=float),
                             load_magnitude=r["load_magnitude"])
               for r in d["rollers"]]
    return StepRecord(step=d["step"], time=d["time"],
                      state=BearingState(body(d["state"]["inner"]),
                                         body(d["state"]["outer"])),
                      external_force=np.asarray(d["external_force"], dtype=float),
                      rollers=rollers,
                      net_force_inner=np.asarray(d["net_force_inner"], dtype=float),
                      net_force_outer=np.asarray(d["net_force_outer"], dtype=float))


def save_trajectory(path, traj: Trajectory) -> None:
    """Write a trajectory atomically (tmp file + rename)."""
    header = {
        "format_version": traj.format_version,
        "config": asdict(traj.config),
        "schedule": {**asdict(traj.schedule),
                     "direction": list(traj.schedule.direction)},
        "sim_params": asdict(traj.params),
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec in traj.records:
            fh.write(json.dumps(_record_to_dict(rec)) + "\n")
    os.replace(tmp, path)


def load_trajectory(path) -> Trajectory:
    with open(path) as fh:
        header_line = fh.readline()
        if not header_line:
            raise TrajectoryFormatError(f"{path}: empty trajectory file")
        header = json.loads(header_line)
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise TrajectoryFormatError(
                f"{path}: format_version {version} unsupported "
                f"(expected {FORMAT_VERSION})")
        records = [_record_from_dict(json.loads(line)) for line in fh if line.strip()]
    return Trajectory(
        config=bearing_config_from_dict(header["config"]),
        schedule=load_schedule_from_dict(header["schedule"]),
        params=sim_params_from_dict(header["sim_params"]),
        records=records,
        format_version=version,
    )
