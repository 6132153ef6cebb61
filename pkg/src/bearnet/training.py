"""Train/test split assembly, the optimization loop, and checkpoints.

The split follows the case study: trajectories from bearings with 13, 14
and 16 rollers over the 5000..23000 N load grid form the training set;
the single 15-roller, 13000 N trajectory is the test set.  Normalization
statistics come from the training split only and travel with the
checkpoint.  Early stopping monitors the last trajectory of each training
roller count, which is excluded from gradient updates; the official test
trajectory is never used for model selection.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ConfigError
from .graphs import (Dataset, Graph, NormStats, SamplingPolicy,
                     compute_norm_stats, normalize_graph, sample_dataset)
from .network import (GnnHyperParams, GnnModel, MlpParams, OptState,
                      adam_step, flatten_params, forward_batch,
                      loss_and_gradients, model_init, parameter_manifest,
                      unflatten_params, _group_graphs)
from .trajfile import load_trajectory

CHECKPOINT_VERSION = 1

TRAIN_ROLLER_COUNTS = (13, 14, 16)
TEST_ROLLER_COUNT = 15
LOAD_GRID = tuple(range(5000, 23001, 2000))
TEST_LOAD = 13000


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0e-4
    batch_size: int = 32
    n_steps: int = 50000
    w_edge: float = 1.0
    w_node: float = 1.0
    seed: int = 0
    eval_every: int = 500
    patience: int = 20          # evals without improvement before stopping
    lr_decay: float = 1.0       # multiplicative factor applied per step

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        for name in ("batch_size", "n_steps", "w_edge", "w_node",
                     "eval_every", "patience"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 < self.lr_decay <= 1.0:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")


def trajectory_filename(n_rollers: int, load: float) -> str:
    return f"traj_r{n_rollers}_l{int(load)}.jsonl"


def expected_trajectory_grid() -> list[tuple[int, int]]:
    """(roller count, load) pairs for the full simulation grid."""
    grid = [(n, load) for n in TRAIN_ROLLER_COUNTS for load in LOAD_GRID]
    grid.append((TEST_ROLLER_COUNT, TEST_LOAD))
    return grid


class MissingTrajectoriesError(FileNotFoundError):
    def __init__(self, missing: list[tuple[int, int]]):
        self.missing = missing
        names = ", ".join(trajectory_filename(n, l) for n, l in missing)
        super().__init__(f"missing {len(missing)} trajectory file(s): {names}")


def build_split(traj_dir, policy: SamplingPolicy = SamplingPolicy()
                ) -> tuple[Dataset, Dataset]:
    """Load the trajectory grid and assemble (train, test) datasets."""
    missing = [(n, l) for n, l in expected_trajectory_grid()
               if not os.path.exists(os.path.join(traj_dir, trajectory_filename(n, l)))]
    if missing:
        raise MissingTrajectoriesError(missing)

    def collect(pairs):
        graphs, sources = [], []
        for n, load in pairs:
            name = trajectory_filename(n, load)
            traj = load_trajectory(os.path.join(traj_dir, name))
            graphs.extend(sample_dataset([traj], policy, traj_ids=[name]))
            sources.append(name)
        return graphs, sources

    train_pairs = [(n, l) for n in TRAIN_ROLLER_COUNTS for l in LOAD_GRID]
    train_graphs, train_sources = collect(train_pairs)
    test_graphs, test_sources = collect([(TEST_ROLLER_COUNT, TEST_LOAD)])
    stats = compute_norm_stats(train_graphs)
    return (Dataset(train_graphs, stats, "train", train_sources),
            Dataset(test_graphs, stats, "test", test_sources))


def holdout_trajectory_ids(graphs: list[Graph]) -> set[str]:
    """Last-seen trajectory id per roller count (early-stopping slice)."""
    last: dict[int, str] = {}
    seen: dict[int, list[str]] = {}
    for g in graphs:
        tid = g.meta[0]
        ids = seen.setdefault(g.n_rollers, [])
        if tid not in ids:
            ids.append(tid)
    for count, ids in seen.items():
        if len(ids) > 1:
            last[count] = ids[-1]
    return set(last.values())


@dataclass
class Checkpoint:
    format_version: int
    bearing_configs: list[dict]
    train_config: dict
    hyper: GnnHyperParams
    stats: NormStats
    params: np.ndarray                       # flat parameter vector
    manifest: list[tuple[str, int, tuple[int, ...]]]
    history: list[tuple[int, float, float]]  # (step, train loss, eval loss)


class CheckpointError(ValueError):
    """Checkpoint file is corrupt or incompatible."""


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, last_good: Checkpoint | None):
        self.step = step
        self.last_good = last_good
        super().__init__(f"non-finite loss at training step {step}")


def model_from_checkpoint(ckpt: Checkpoint) -> GnnModel:
    """Rebuild the model, validating the manifest against the hyperparameters."""
    template = model_init(ckpt.hyper, seed=0)
    expected = parameter_manifest(template)
    got = [(name, int(off), tuple(shape)) for name, off, shape in ckpt.manifest]
    if got != [(n, o, tuple(s)) for n, o, s in expected]:
        raise CheckpointError(
            "checkpoint manifest does not match the declared hyperparameters "
            f"(latent {ckpt.hyper.latent_size}, blocks {ckpt.hyper.n_blocks})")
    template.params = unflatten_params(template, ckpt.params)
    return template


def _mean_loss(model: GnnModel, graphs: list[Graph], w_edge: float,
               w_node: float, chunk: int = 256) -> float:
    """Forward-only mean loss, chunked by roller-count group."""
    total = len(graphs)
    loss = 0.0
    for n_rollers, idx in _group_graphs(graphs).items():
        for start in range(0, len(idx), chunk):
            part = idx[start:start + chunk]
            X = np.stack([graphs[i].node_features for i in part])
            Ef = np.stack([graphs[i].edge_features for i in part])
            ep, npred, _ = forward_batch(model, X, Ef)
            Te = np.stack([graphs[i].edge_targets for i in part])
            Tn = np.stack([graphs[i].node_targets for i in part])
            loss += (w_edge * np.sum((ep - Te) ** 2) / Te[0].size
                     + w_node * np.sum((npred - Tn) ** 2) / Tn[0].size) / total
    return float(loss)


def train(dataset: Dataset, config: TrainConfig,
          hyper: GnnHyperParams = GnnHyperParams(),
          bearing_configs: list[dict] | None = None
          ) -> tuple[Checkpoint, list[tuple[int, float, float]]]:
    """Run the seeded optimization loop and return the best-eval checkpoint.

    Graphs are normalized internally with the dataset's statistics.  When
    the dataset spans several trajectories per roller count, the last one
    of each count is held out of gradient updates and monitored for early
    stopping; otherwise the training graphs double as the monitor set.
    """
    config.validate()
    hyper.validate()
    stats = dataset.stats
    norm = [normalize_graph(g, stats) for g in dataset.graphs]
    holdout_ids = holdout_trajectory_ids(dataset.graphs)
    holdout = [g for g, raw in zip(norm, dataset.graphs)
               if raw.meta[0] in holdout_ids]
    fit_graphs = [g for g, raw in zip(norm, dataset.graphs)
                  if raw.meta[0] not in holdout_ids]
    if not holdout:
        holdout = fit_graphs

    model = model_init(hyper, config.seed)
    pvec = flatten_params(model.params)
    manifest = parameter_manifest(model)
    opt = OptState.init(pvec.size, config.learning_rate)
    rng = np.random.default_rng(config.seed)

    def make_checkpoint(vec, history):
        return Checkpoint(format_version=CHECKPOINT_VERSION,
                          bearing_configs=list(bearing_configs or []),
                          train_config=asdict(config), hyper=hyper,
                          stats=stats, params=vec.copy(), manifest=manifest,
                          history=list(history))

    history: list[tuple[int, float, float]] = []
    best_vec = pvec.copy()
    best_eval = np.inf
    strikes = 0
    order = rng.permutation(len(fit_graphs))
    cursor = 0
    for step in range(config.n_steps):
        if cursor + config.batch_size > len(order):
            order = rng.permutation(len(fit_graphs))
            cursor = 0
        idx = order[cursor:cursor + config.batch_size]
        cursor += config.batch_size
        batch = [fit_graphs[i] for i in idx]
        try:
            loss, grads = loss_and_gradients(
                model, batch, config.w_edge, config.w_node)
        except FloatingPointError:
            raise TrainingDivergedError(step, make_checkpoint(best_vec, history))
        gvec = flatten_params(grads)
        opt.learning_rate = config.learning_rate * config.lr_decay ** step
        pvec, opt = adam_step(pvec, gvec, opt)
        model.params = unflatten_params(model, pvec)
        if (step + 1) % config.eval_every == 0 or step + 1 == config.n_steps:
            eval_loss = _mean_loss(model, holdout, config.w_edge, config.w_node)
            history.append((step + 1, float(loss), eval_loss))
            if eval_loss < best_eval:
                best_eval = eval_loss
                best_vec = pvec.copy()
                strikes = 0
            else:
                strikes += 1
                if strikes >= config.patience:
                    break
    if not history:
        # Fewer steps than eval_every: keep the final parameters.
        eval_loss = _mean_loss(model, holdout, config.w_edge, config.w_node)
        history.append((config.n_steps, eval_loss, eval_loss))
        best_vec = pvec.copy()
    return make_checkpoint(best_vec, history), history


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    doc = {
        "format_version": ckpt.format_version,
        "bearing_configs": ckpt.bearing_configs,
        "train_config": ckpt.train_config,
        "hyper": asdict(ckpt.hyper),
        "stats": ckpt.stats.to_dict(),
        "n_params": int(ckpt.params.size),
        "manifest": [[name, off, list(shape)] for name, off, shape in ckpt.manifest],
        "params": ckpt.params.tolist(),
        "history": [list(h) for h in ckpt.history],
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint file ({exc})") from None
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {doc.get('format_version')} "
            f"unsupported (expected {CHECKPOINT_VERSION})")
    params = np.asarray(doc["params"], dtype=float)
    if params.size != doc["n_params"]:
        raise CheckpointError(
            f"{path}: parameter count {params.size} != declared {doc['n_params']}")
    manifest = [(name, int(off), tuple(shape))
                for name, off, shape in doc["manifest"]]
    offset = 0
    for name, off, shape in manifest:
        if off != offset:
            raise CheckpointError(
                f"{path}: manifest entry {name} at offset {off}, expected {offset}")
        offset += int(np.prod(shape))
    if offset != params.size:
        raise CheckpointError(
            f"{path}: manifest covers {offset} params, file has {params.size}")
    ckpt = Checkpoint(
        format_version=doc["format_version"],
        bearing_configs=doc["bearing_configs"],
        train_config=doc["train_config"],
        hyper=GnnHyperParams(**doc["hyper"]),
        stats=NormStats.from_dict(doc["stats"]),
        params=params, manifest=manifest,
        history=[tuple(h) for h in doc["history"]],
    )
    return ckpt


def save_history_csv(path, history: list[tuple[int, float, float]]) -> None:
    with open(path, "w") as fh:
        fh.write("step,train_loss,eval_loss\n")
        for step, train_loss, eval_loss in history:
            fh.write(f"{step},{train_loss!r},{eval_loss!r}\n")
