"""Graph construction from simulator snapshots, plus dataset assembly.

Node order is fixed: [inner ring, outer ring, roller_0 .. roller_{N-1}].
Node features (9): position mm (2), velocity mm/s (2), external force N (2),
type one-hot (inner, outer, roller).  Roller rows are all-zero apart from
the type flag.

Each roller connects to both rings with a bidirectional edge pair.  Edge
features (3): dx = anchor(receiver) - anchor(sender) in mm and its
magnitude, where the anchor of a roller is its center and the anchor of a
ring is the raceway surface point on the ray from the ring center through
the roller center.  The edge target is the contact force exerted on the
receiver, so paired edges carry exactly opposite targets.

Edge index layout (N rollers, 4N edges):
    [0,   N)  roller_k -> inner
    [N,  2N)  inner    -> roller_k
    [2N, 3N)  roller_k -> outer
    [3N, 4N)  outer    -> roller_k
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import BearingConfig, DerivedGeometry
from .simulator import StepRecord, Trajectory

NODE_FEATURE_DIM = 9
EDGE_FEATURE_DIM = 3
TARGET_DIM = 2
ONE_HOT_DIMS = (6, 7, 8)

STD_FLOOR = 1.0e-8


@dataclass
class Graph:
    node_features: np.ndarray   # [n_nodes, 9]
    senders: np.ndarray         # [n_edges] int
    receivers: np.ndarray       # [n_edges] int
    edge_features: np.ndarray   # [n_edges, 3]
    node_targets: np.ndarray    # [n_nodes, 2]
    edge_targets: np.ndarray    # [n_edges, 2]
    meta: tuple = ("", -1)      # (source trajectory id, step)

    @property
    def n_rollers(self) -> int:
        return self.node_features.shape[0] - 2


def edge_topology(n_rollers: int) -> tuple[np.ndarray, np.ndarray]:
    """Sender/receiver index arrays for the fixed 4N edge layout."""
    rollers = np.arange(2, 2 + n_rollers)
    inner = np.zeros(n_rollers, dtype=int)
    outer = np.ones(n_rollers, dtype=int)
    senders = np.concatenate([rollers, inner, rollers, outer])
    receivers = np.concatenate([inner, rollers, outer, rollers])
    return senders, receivers


def snapshot_to_graph(record: StepRecord, config: BearingConfig,
                      geom: DerivedGeometry, traj_id: str = "") -> Graph:
    """Build the graph for one recorded simulator step."""
    n = config.n_rollers
    oi = record.state.inner.position * 1000.0
    oo = record.state.outer.position * 1000.0
    centers = np.stack([rc.center for rc in record.rollers])

    node_features = np.zeros((n + 2, NODE_FEATURE_DIM))
    node_features[0, 0:2] = oi
    node_features[0, 2:4] = record.state.inner.velocity * 1000.0
    node_features[0, 6] = 1.0
    node_features[1, 0:2] = oo
    node_features[1, 2:4] = record.state.outer.velocity * 1000.0
    node_features[1, 4:6] = record.external_force
    node_features[1, 7] = 1.0
    node_features[2:, 8] = 1.0

    def ring_anchor(center_of_ring, radius):
        ray = centers - center_of_ring
        norms = np.linalg.norm(ray, axis=1, keepdims=True)
        if np.any(norms < 1.0e-9):
            raise ValueError(
                "roller center coincides with a ring center; anchor undefined")
        return center_of_ring + radius * ray / norms

    anchor_inner = ring_anchor(oi, geom.inner_raceway_radius)
    anchor_outer = ring_anchor(oo, geom.outer_raceway_radius)

    dx_to_inner = anchor_inner - centers
    dx_to_outer = anchor_outer - centers
    dx = np.concatenate([dx_to_inner, -dx_to_inner, dx_to_outer, -dx_to_outer])
    edge_features = np.concatenate(
        [dx, np.linalg.norm(dx, axis=1, keepdims=True)], axis=1)

    q_inner = np.stack([rc.q_inner for rc in record.rollers])
    q_outer = np.stack([rc.q_outer for rc in record.rollers])
    edge_targets = np.concatenate([q_inner, -q_inner, q_outer, -q_outer])

    node_targets = np.zeros((n + 2, TARGET_DIM))
    node_targets[0] = record.net_force_inner
    node_targets[1] = record.net_force_outer

    senders, receivers = edge_topology(n)
    return Graph(node_features=node_features, senders=senders,
                 receivers=receivers, edge_features=edge_features,
                 node_targets=node_targets, edge_targets=edge_targets,
                 meta=(traj_id, record.step))


@dataclass(frozen=True)
class SamplingPolicy:
    """Keep every step inside the transient windows, stride elsewhere."""

    windows: tuple[tuple[int, int], ...] = ((0, 250), (2500, 2750))
    stride: int = 10

    def keeps(self, step: int) -> bool:
        if any(lo <= step <= hi for lo, hi in self.windows):
            return True
        return step % self.stride == 0


def sample_dataset(trajectories: list[Trajectory],
                   policy: SamplingPolicy = SamplingPolicy(),
                   traj_ids: list[str] | None = None) -> list[Graph]:
    """Graphs for the policy-selected steps, in trajectory then step order."""
    if not trajectories:
        raise ValueError("sample_dataset needs at least one trajectory")
    versions = {t.format_version for t in trajectories}
    if len(versions) > 1:
        raise ValueError(f"mixed trajectory format versions: {sorted(versions)}")
    if traj_ids is None:
        traj_ids = [str(i) for i in range(len(trajectories))]
    from .core import derived_geometry

    graphs: list[Graph] = []
    for traj, tid in zip(trajectories, traj_ids):
        geom = derived_geometry(traj.config)
        for rec in traj.records:
            if policy.keeps(rec.step):
                graphs.append(snapshot_to_graph(rec, traj.config, geom, tid))
    return graphs


@dataclass
class NormStats:
    """Per-dimension z-score statistics; one-hot dims stay unscaled."""

    node_mean: np.ndarray
    node_std: np.ndarray
    edge_mean: np.ndarray
    edge_std: np.ndarray
    node_target_mean: np.ndarray
    node_target_std: np.ndarray
    edge_target_mean: np.ndarray
    edge_target_std: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d: dict) -> "NormStats":
        return NormStats(**{k: np.asarray(v, dtype=float) for k, v in d.items()})


def compute_norm_stats(graphs: list[Graph]) -> NormStats:
    """Mean/std over all nodes and edges of all graphs (training split only)."""
    if not graphs:
        raise ValueError("compute_norm_stats needs at least one graph")
    nodes = np.concatenate([g.node_features for g in graphs])
    edges = np.concatenate([g.edge_features for g in graphs])
    node_t = np.concatenate([g.node_targets for g in graphs])
    edge_t = np.concatenate([g.edge_targets for g in graphs])

    def stats(a):
        mean = a.mean(axis=0)
        std = np.maximum(a.std(axis=0), STD_FLOOR)
        return mean, std

    node_mean, node_std = stats(nodes)
    node_mean[list(ONE_HOT_DIMS)] = 0.0
    node_std[list(ONE_HOT_DIMS)] = 1.0
    edge_mean, edge_std = stats(edges)
    nt_mean, nt_std = stats(node_t)
    et_mean, et_std = stats(edge_t)
    return NormStats(node_mean, node_std, edge_mean, edge_std,
                     nt_mean, nt_std, et_mean, et_std)


def normalize_graph(g: Graph, stats: NormStats) -> Graph:
    """Z-score features and targets; returns a new Graph."""
    if g.node_features.shape[1] != stats.node_mean.shape[0]:
        raise ValueError("node feature dimension does not match stats")
    return Graph(
        node_features=(g.node_features - stats.node_mean) / stats.node_std,
        senders=g.senders, receivers=g.receivers,
        edge_features=(g.edge_features - stats.edge_mean) / stats.edge_std,
        node_targets=(g.node_targets - stats.node_target_mean) / stats.node_target_std,
        edge_targets=(g.edge_targets - stats.edge_target_mean) / stats.edge_target_std,
        meta=g.meta,
    )


def denormalize_edge_predictions(preds: np.ndarray, stats: NormStats) -> np.ndarray:
    if preds.shape[-1] != stats.edge_target_mean.shape[0]:
        raise ValueError("edge prediction dimension does not match stats")
    return preds * stats.edge_target_std + stats.edge_target_mean


def denormalize_node_predictions(preds: np.ndarray, stats: NormStats) -> np.ndarray:
    if preds.shape[-1] != stats.node_target_mean.shape[0]:
        raise ValueError("node prediction dimension does not match stats")
    return preds * stats.node_target_std + stats.node_target_mean


@dataclass
class Dataset:
    graphs: list[Graph]
    stats: NormStats
    split: str
    provenance: list[str] = field(default_factory=list)


MANIFEST_VERSION = 1


def save_dataset_manifest(path, split: str, sources: list[str],
                          policy: SamplingPolicy, stats: NormStats) -> None:
    doc = {
        "format_version": MANIFEST_VERSION,
        "split": split,
        "sources": list(sources),
        "policy": {"windows": [list(w) for w in policy.windows],
                   "stride": policy.stride},
        "stats": stats.to_dict(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_dataset_manifest(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: unsupported dataset manifest version")
    doc["stats"] = NormStats.from_dict(doc["stats"])
    doc["policy"] = SamplingPolicy(
        windows=tuple(tuple(w) for w in doc["policy"]["windows"]),
        stride=doc["policy"]["stride"])
    return doc
