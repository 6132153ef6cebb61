"""Scikit-learn style front end for the graph force surrogate.

GraphBuilder turns simulator step records into graphs (a stateless
transformer); GraphNetRegressor wraps dataset normalization, training and
prediction behind fit/predict with get_params/set_params support.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import BearingConfig, derived_geometry
from .graphs import (Dataset, Graph, compute_norm_stats,
                     denormalize_edge_predictions,
                     denormalize_node_predictions, normalize_graph,
                     snapshot_to_graph)
from .network import GnnHyperParams, forward_batch
from .training import Checkpoint, TrainConfig, model_from_checkpoint, train


def check_graphs(graphs, allow_empty: bool = False) -> list[Graph]:
    """Validate a graph collection before fit/predict."""
    graphs = list(graphs)
    if not graphs and not allow_empty:
        raise ValueError("expected at least one graph")
    for i, g in enumerate(graphs):
        if not isinstance(g, Graph):
            raise TypeError(f"item {i} is {type(g).__name__}, expected Graph")
        n = g.n_rollers
        if n < 1 or g.edge_features.shape[0] != 4 * n:
            raise ValueError(
                f"graph {i}: {g.edge_features.shape[0]} edges inconsistent "
                f"with {n} rollers")
    return graphs


class GraphBuilder(BaseEstimator, TransformerMixin):
    """Transform simulator StepRecords into Graphs for one bearing config."""

    def __init__(self, config: BearingConfig = BearingConfig()):
        self.config = config

    def fit(self, records=None, y=None):
        self.config.validate()
        return self

    def transform(self, records) -> list[Graph]:
        geom = derived_geometry(self.config)
        return [snapshot_to_graph(rec, self.config, geom) for rec in records]


class GraphNetRegressor(BaseEstimator):
    """Message-passing force surrogate with a fit/predict interface.

    fit() computes normalization statistics from the training graphs,
    runs the seeded Adam loop, and stores the best checkpoint; predict()
    returns denormalized (edge_forces, node_forces) arrays per graph.
    """

    def __init__(self, latent_size: int = 64, n_blocks: int = 3,
                 n_hidden_layers: int = 2, learning_rate: float = 1.0e-4,
                 lr_decay: float = 1.0, batch_size: int = 32,
                 n_steps: int = 50000, w_edge: float = 1.0,
                 w_node: float = 1.0, seed: int = 0, eval_every: int = 500,
                 patience: int = 20):
        self.latent_size = latent_size
        self.n_blocks = n_blocks
        self.n_hidden_layers = n_hidden_layers
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.w_edge = w_edge
        self.w_node = w_node
        self.seed = seed
        self.eval_every = eval_every
        self.patience = patience

    def _train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate,
                           lr_decay=self.lr_decay, batch_size=self.batch_size,
                           n_steps=self.n_steps, w_edge=self.w_edge,
                           w_node=self.w_node, seed=self.seed,
                           eval_every=self.eval_every, patience=self.patience)

    def fit(self, graphs, y=None):
        graphs = check_graphs(graphs)
        stats = compute_norm_stats(graphs)
        dataset = Dataset(graphs, stats, "train")
        hyper = GnnHyperParams(latent_size=self.latent_size,
                               n_blocks=self.n_blocks,
                               n_hidden_layers=self.n_hidden_layers)
        self.checkpoint_, self.history_ = train(dataset, self._train_config(),
                                                hyper)
        self.model_ = model_from_checkpoint(self.checkpoint_)
        self.stats_ = self.checkpoint_.stats
        return self

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "GraphNetRegressor":
        """A fitted regressor wrapping an existing checkpoint."""
        tc = ckpt.train_config
        est = cls(latent_size=ckpt.hyper.latent_size,
                  n_blocks=ckpt.hyper.n_blocks,
                  n_hidden_layers=ckpt.hyper.n_hidden_layers,
                  **{k: tc[k] for k in ("learning_rate", "lr_decay",
                                        "batch_size", "n_steps", "w_edge",
                                        "w_node", "seed", "eval_every",
                                        "patience")})
        est.checkpoint_ = ckpt
        est.model_ = model_from_checkpoint(ckpt)
        est.stats_ = ckpt.stats
        est.history_ = list(ckpt.history)
        return est

    def predict(self, graphs) -> list[tuple[np.ndarray, np.ndarray]]:
        if not hasattr(self, "model_"):
            raise RuntimeError("regressor is not fitted")
        graphs = check_graphs(graphs, allow_empty=True)
        out = []
        for g in graphs:
            gn = normalize_graph(g, self.stats_)
            ep, npred, _ = forward_batch(self.model_, gn.node_features[None],
                                         gn.edge_features[None])
            out.append((denormalize_edge_predictions(ep[0], self.stats_),
                        denormalize_node_predictions(npred[0], self.stats_)))
        return out
