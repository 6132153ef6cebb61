"""Single-step load prediction and physics-verification evaluations.

Both evaluations feed ground-truth states through the trained network and
compare decoded forces against the simulator (or the closed-form contact
law for the displacement sweep).  Normalization statistics always come
from the checkpoint; nothing is recomputed from test data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact import contact_constant, contact_force
from .core import BearingConfig, BearingState, derived_geometry
from .graphs import (denormalize_edge_predictions, denormalize_node_predictions,
                     normalize_graph, snapshot_to_graph)
from .network import forward_batch
from .simulator import StepRecord, Trajectory, assemble_forces
from .training import Checkpoint, model_from_checkpoint

DEFAULT_WINDOWS = ((0, 250), (2500, 2750))

# Ground-truth magnitudes below this carry no meaningful percentage error.
PCT_ERROR_MIN_TRUTH = 1.0


def percentage_error(pred: float, truth: float) -> float | None:
    """Signed percentage error, or None when the truth is below 1 N."""
    if abs(truth) < PCT_ERROR_MIN_TRUTH:
        return None
    return 100.0 * (pred - truth) / truth


@dataclass
class EvalRow:
    trajectory_id: str
    step: int
    entity: str                  # "inner", "outer", or "roller_<k>"
    predicted_force: np.ndarray  # N, 2-vector
    predicted_load: float        # N
    true_force: np.ndarray       # N, 2-vector
    true_load: float             # N
    pct_error: float | None


@dataclass
class SweepRow:
    displacement_mm: float       # inner-ring vertical displacement u
    roller_deflection_mm: float  # signed total interference of the bottom roller
    predicted_load: float        # N
    true_load: float             # N


def _predict(model, stats, graph):
    g = normalize_graph(graph, stats)
    edge_preds, node_preds, _ = forward_batch(
        model, g.node_features[None], g.edge_features[None])
    return (denormalize_edge_predictions(edge_preds[0], stats),
            denormalize_node_predictions(node_preds[0], stats))


def single_step_eval(ckpt: Checkpoint, trajectory: Trajectory,
                     windows=DEFAULT_WINDOWS) -> list[EvalRow]:
    """Per-step, per-entity predictions over the evaluation windows.

    The roller load scalar is the magnitude of the decoded force on the
    roller -> inner-ring edge; ring rows use the node decoder.  The roller
    count may differ from anything seen in training: features are
    per-dimension, so the model accepts any count.
    """
    model = model_from_checkpoint(ckpt)
    stats = ckpt.stats
    config = trajectory.config
    geom = derived_geometry(config)
    n = config.n_rollers
    rows: list[EvalRow] = []
    for rec in trajectory.records:
        if not any(lo <= rec.step <= hi for lo, hi in windows):
            continue
        graph = snapshot_to_graph(rec, config, geom)
        edge_preds, node_preds = _predict(model, stats, graph)
        for name, row, true_force in (("inner", 0, rec.net_force_inner),
                                      ("outer", 1, rec.net_force_outer)):
            pred = node_preds[row]
            pred_mag = float(np.linalg.norm(pred))
            true_mag = float(np.linalg.norm(true_force))
            rows.append(EvalRow("", rec.step, name, pred, pred_mag,
                                true_force, true_mag,
                                percentage_error(pred_mag, true_mag)))
        for k in range(n):
            pred = edge_preds[k]  # roller_k -> inner edge
            pred_mag = float(np.linalg.norm(pred))
            true_mag = rec.rollers[k].load_magnitude
            rows.append(EvalRow("", rec.step, f"roller_{k}", pred, pred_mag,
                                rec.rollers[k].q_inner, true_mag,
                                percentage_error(pred_mag, true_mag)))
    return rows


def bottom_roller_index(config: BearingConfig) -> int:
    """Index of the roller nearest bottom dead center (-90 degrees)."""
    spacing = 360.0 / config.n_rollers
    return int(round((-90.0 - config.reference_angle) / spacing)) % config.n_rollers


def artificial_state_record(config: BearingConfig, displacement_mm: float
                            ) -> StepRecord:
    """Synthetic snapshot: outer ring at the origin, inner ring displaced
    vertically, zero velocities, zero external force."""
    geom = derived_geometry(config)
    law = contact_constant(config.roller_length)
    state = BearingState.zero()
    state.inner.position = np.array([0.0, displacement_mm / 1000.0])
    external = np.zeros(2)
    net_inner, net_outer, rollers = assemble_forces(
        state, external, config, geom, law)
    return StepRecord(step=0, time=0.0, state=state, external_force=external,
                      rollers=rollers, net_force_inner=net_inner,
                      net_force_outer=net_outer)


def verification_sweep(ckpt: Checkpoint, config: BearingConfig,
                       u_range=(-0.05, 0.05), n_points: int = 101
                       ) -> list[SweepRow]:
    """Predicted vs closed-form load of the bottom roller as the inner
    ring is displaced vertically (mm)."""
    lo, hi = u_range
    geom = derived_geometry(config)
    if max(abs(lo), abs(hi)) >= geom.roller_radius:
        raise ValueError(
            f"displacement range {u_range} mm reaches the roller radius")
    model = model_from_checkpoint(ckpt)
    law = contact_constant(config.roller_length)
    bottom = bottom_roller_index(config)
    rows: list[SweepRow] = []
    for u in np.linspace(lo, hi, n_points):
        rec = artificial_state_record(config, float(u))
        graph = snapshot_to_graph(rec, config, geom)
        edge_preds, _ = _predict(model, ckpt.stats, graph)
        predicted = float(np.linalg.norm(edge_preds[bottom]))
        true = contact_force(law, abs(min(u, 0.0)) / 2.0)
        rows.append(SweepRow(displacement_mm=float(u),
                             roller_deflection_mm=float(-u),
                             predicted_load=predicted, true_load=true))
    return rows
