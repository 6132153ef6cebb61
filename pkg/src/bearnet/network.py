"""Encode-process-decode message-passing network with analytic gradients.

All math is 64-bit numpy.  Nodes and edges are lifted to latent vectors,
M unshared processor blocks update edges from (edge, sender, receiver)
latents and nodes from (node, aggregated incoming edge) latents with
residual connections, then two decoder heads emit a 2D force per edge and
per node.

Incoming edge latents at a node are summed after sorting the addends by
value along the aggregation axis.  The sorted order is canonical for the
multiset of addends, which makes the forward pass exactly invariant under
roller relabeling (a plain left-to-right sum is order sensitive in
floating point); the gradient of a sum is order-free, so backward is
unaffected.

Batching stacks graphs of identical roller count into dense [G, ...]
arrays; the fixed edge layout of graphs.edge_topology lets every gather
and scatter be a slice, keeping evaluation deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph


class DimensionError(ValueError):
    """Array dimensions do not match the model."""


class NonFiniteError(FloatingPointError):
    """A latent, loss, or gradient became non-finite."""


@dataclass
class MlpParams:
    """Affine + ReLU chain; the final layer is affine only."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def mlp_init(layer_sizes: list[int], seed: int) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    return _mlp_init_rng(layer_sizes, np.random.default_rng(seed))


def _mlp_init_rng(layer_sizes: list[int], rng: np.random.Generator) -> MlpParams:
    if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
        raise ValueError(f"need at least two positive layer sizes, got {layer_sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _affine(h: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """h @ w.T + b with a row-position-independent reduction order.

    BLAS kernels for very narrow outputs sum over the inner dimension in an
    order that can depend on where a row sits in the matrix, which breaks
    bit-exact permutation equivariance; einsum's fixed loop does not.
    """
    if w.shape[0] < 8:
        return np.einsum("...k,ok->...o", h, w) + b
    return h @ w.T + b


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the MLP on [..., in_dim] input."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.weights[0].shape[1]:
        raise DimensionError(
            f"input dim {x.shape[-1]} != expected {params.weights[0].shape[1]}")
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = _affine(h, w, b)
        if i != last:
            h = np.maximum(h, 0.0)
    return h


def _mlp_forward_cached(params: MlpParams, x: np.ndarray):
    """Forward pass keeping per-layer inputs for the backward pass."""
    inputs = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        h = _affine(h, w, b)
        if i != last:
            h = np.maximum(h, 0.0)
    return h, inputs


def _mlp_backward(params: MlpParams, inputs: list[np.ndarray],
                  d_out: np.ndarray):
    """Gradients w.r.t. input and parameters given upstream d_out."""
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    d = d_out
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        x = inputs[i]
        if i != last:
            # inputs[i + 1] is this layer's post-ReLU output; z > 0 exactly
            # where the output is > 0.
            d = d * (inputs[i + 1] > 0.0)
        flat_d = d.reshape(-1, d.shape[-1])
        flat_x = x.reshape(-1, x.shape[-1])
        grads_w[i] = flat_d.T @ flat_x
        grads_b[i] = flat_d.sum(axis=0)
        d = d @ params.weights[i]
    return d, MlpParams(grads_w, grads_b)


@dataclass(frozen=True)
class GnnHyperParams:
    latent_size: int = 64
    n_blocks: int = 3
    n_hidden_layers: int = 2
    node_in: int = 9
    edge_in: int = 3
    target_dim: int = 2

    def validate(self) -> None:
        if self.n_blocks < 1:
            raise ValueError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.latent_size < 1 or self.n_hidden_layers < 0:
            raise ValueError("latent_size and n_hidden_layers must be positive")


@dataclass
class GnnModel:
    hyper: GnnHyperParams
    params: dict[str, MlpParams]

    def component_names(self) -> list[str]:
        return list(self.params)

    def n_params(self) -> int:
        return sum(p.n_params() for p in self.params.values())


def _component_sizes(hp: GnnHyperParams) -> dict[str, list[int]]:
    L, h = hp.latent_size, hp.n_hidden_layers
    hidden = [L] * h
    sizes = {
        "node_encoder": [hp.node_in] + hidden + [L],
        "edge_encoder": [hp.edge_in] + hidden + [L],
    }
    for m in range(hp.n_blocks):
        sizes[f"block{m}_edge"] = [3 * L] + hidden + [L]
        sizes[f"block{m}_node"] = [2 * L] + hidden + [L]
    sizes["edge_decoder"] = [L] + hidden + [hp.target_dim]
    sizes["node_decoder"] = [L] + hidden + [hp.target_dim]
    return sizes


def model_init(hp: GnnHyperParams, seed: int) -> GnnModel:
    """Deterministically initialize all component MLPs from one seed."""
    hp.validate()
    rng = np.random.default_rng(seed)
    params = {name: _mlp_init_rng(sizes, rng)
              for name, sizes in _component_sizes(hp).items()}
    return GnnModel(hyper=hp, params=params)


def _sorted_sum(a: np.ndarray, axis: int) -> np.ndarray:
    """Sum along an axis in value-canonical (sorted) order."""
    return np.sort(a, axis=axis).sum(axis=axis)


def _aggregate(E: np.ndarray, n: int) -> np.ndarray:
    """Incoming-edge latent sums per node for the fixed 4N edge layout."""
    agg_inner = _sorted_sum(E[:, 0:n, :], axis=1)
    agg_outer = _sorted_sum(E[:, 2 * n:3 * n, :], axis=1)
    agg_rollers = E[:, n:2 * n, :] + E[:, 3 * n:4 * n, :]
    return np.concatenate(
        [agg_inner[:, None, :], agg_outer[:, None, :], agg_rollers], axis=1)


def _scatter_agg_grad(dagg: np.ndarray, n: int) -> np.ndarray:
    dE = np.zeros((dagg.shape[0], 4 * n, dagg.shape[2]))
    dE[:, 0:n, :] = dagg[:, 0:1, :]
    dE[:, 2 * n:3 * n, :] = dagg[:, 1:2, :]
    dE[:, n:2 * n, :] = dagg[:, 2:, :]
    dE[:, 3 * n:4 * n, :] = dagg[:, 2:, :]
    return dE


def _gather_nodes(V: np.ndarray, n: int):
    """Sender and receiver latents for every edge, [G, 4N, L] each."""
    rollers = V[:, 2:, :]
    inner = V[:, 0:1, :]
    outer = V[:, 1:2, :]
    inner_n = np.broadcast_to(inner, rollers.shape)
    outer_n = np.broadcast_to(outer, rollers.shape)
    senders = np.concatenate([rollers, inner_n, rollers, outer_n], axis=1)
    receivers = np.concatenate([inner_n, rollers, outer_n, rollers], axis=1)
    return senders, receivers


def _scatter_nodes_grad(dS: np.ndarray, dR: np.ndarray, n: int) -> np.ndarray:
    dV = np.zeros((dS.shape[0], n + 2, dS.shape[2]))
    dV[:, 2:, :] += dS[:, 0:n, :] + dS[:, 2 * n:3 * n, :]
    dV[:, 0, :] += dS[:, n:2 * n, :].sum(axis=1)
    dV[:, 1, :] += dS[:, 3 * n:4 * n, :].sum(axis=1)
    dV[:, 0, :] += dR[:, 0:n, :].sum(axis=1)
    dV[:, 1, :] += dR[:, 2 * n:3 * n, :].sum(axis=1)
    dV[:, 2:, :] += dR[:, n:2 * n, :] + dR[:, 3 * n:4 * n, :]
    return dV


def forward_batch(model: GnnModel, X: np.ndarray, Ef: np.ndarray,
                  keep_cache: bool = False, check_finite: bool = False):
    """Run the network on stacked graphs of one roller count.

    X: [G, N+2, node_in] node features, Ef: [G, 4N, edge_in] edge features.
    Returns (edge_preds, node_preds, cache).
    """
    hp = model.hyper
    n = X.shape[1] - 2
    if Ef.shape[1] != 4 * n:
        raise DimensionError(
            f"expected {4 * n} edges for {n} rollers, got {Ef.shape[1]}")
    if X.shape[-1] != hp.node_in or Ef.shape[-1] != hp.edge_in:
        raise DimensionError("feature dimensions do not match the model")

    cache: dict = {"n": n}
    V, cache["node_encoder"] = _mlp_forward_cached(model.params["node_encoder"], X)
    E, cache["edge_encoder"] = _mlp_forward_cached(model.params["edge_encoder"], Ef)
    for m in range(hp.n_blocks):
        S, R = _gather_nodes(V, n)
        e_in = np.concatenate([E, S, R], axis=-1)
        dE, cache[f"block{m}_edge"] = _mlp_forward_cached(
            model.params[f"block{m}_edge"], e_in)
        E = E + dE
        agg = _aggregate(E, n)
        v_in = np.concatenate([V, agg], axis=-1)
        dV, cache[f"block{m}_node"] = _mlp_forward_cached(
            model.params[f"block{m}_node"], v_in)
        V = V + dV
        if check_finite and not (np.all(np.isfinite(E)) and np.all(np.isfinite(V))):
            raise NonFiniteError(f"non-finite latents after processor block {m}")
    edge_preds, cache["edge_decoder"] = _mlp_forward_cached(
        model.params["edge_decoder"], E)
    node_preds, cache["node_decoder"] = _mlp_forward_cached(
        model.params["node_decoder"], V)
    if not keep_cache:
        cache = None
    return edge_preds, node_preds, cache


def backward_batch(model: GnnModel, cache: dict, d_edge_preds: np.ndarray,
                   d_node_preds: np.ndarray) -> dict[str, MlpParams]:
    """Parameter gradients given upstream gradients on both heads."""
    hp = model.hyper
    n = cache["n"]
    L = hp.latent_size
    grads: dict[str, MlpParams] = {}
    dE, grads["edge_decoder"] = _mlp_backward(
        model.params["edge_decoder"], cache["edge_decoder"], d_edge_preds)
    dV, grads["node_decoder"] = _mlp_backward(
        model.params["node_decoder"], cache["node_decoder"], d_node_preds)
    for m in range(hp.n_blocks - 1, -1, -1):
        d_vin, grads[f"block{m}_node"] = _mlp_backward(
            model.params[f"block{m}_node"], cache[f"block{m}_node"], dV)
        dV = dV + d_vin[..., :L]
        dE = dE + _scatter_agg_grad(d_vin[..., L:], n)
        d_ein, grads[f"block{m}_edge"] = _mlp_backward(
            model.params[f"block{m}_edge"], cache[f"block{m}_edge"], dE)
        dE = dE + d_ein[..., :L]
        dV = dV + _scatter_nodes_grad(d_ein[..., L:2 * L], d_ein[..., 2 * L:], n)
    _, grads["node_encoder"] = _mlp_backward(
        model.params["node_encoder"], cache["node_encoder"], dV)
    _, grads["edge_encoder"] = _mlp_backward(
        model.params["edge_encoder"], cache["edge_encoder"], dE)
    return grads


def gnn_forward(model: GnnModel, graph: Graph):
    """Predictions (edge [4N, 2], node [N+2, 2]) for one normalized graph."""
    edge_preds, node_preds, _ = forward_batch(
        model, graph.node_features[None], graph.edge_features[None],
        check_finite=True)
    return edge_preds[0], node_preds[0]


def loss_fn(edge_preds: np.ndarray, node_preds: np.ndarray,
            edge_targets: np.ndarray, node_targets: np.ndarray,
            w_edge: float = 1.0, w_node: float = 1.0) -> float:
    """Weighted MSE over normalized edge and node targets."""
    if edge_preds.shape != edge_targets.shape:
        raise DimensionError(
            f"edge shapes differ: {edge_preds.shape} vs {edge_targets.shape}")
    if node_preds.shape != node_targets.shape:
        raise DimensionError(
            f"node shapes differ: {node_preds.shape} vs {node_targets.shape}")
    return float(w_edge * np.mean((edge_preds - edge_targets) ** 2)
                 + w_node * np.mean((node_preds - node_targets) ** 2))


def _group_graphs(graphs: list[Graph]) -> dict[int, list[int]]:
    """Indices grouped by roller count, groups in ascending count order."""
    groups: dict[int, list[int]] = {}
    for i, g in enumerate(graphs):
        groups.setdefault(g.n_rollers, []).append(i)
    return dict(sorted(groups.items()))


def loss_and_gradients(model: GnnModel, graphs: list[Graph],
                       w_edge: float = 1.0, w_node: float = 1.0):
    """Mean loss over a batch of normalized graphs and its exact gradients.

    Graphs are grouped by roller count for dense evaluation; group order
    and in-group order are deterministic, so accumulation is reproducible.
    """
    if not graphs:
        raise ValueError("empty batch")
    total = len(graphs)
    loss = 0.0
    grads: dict[str, MlpParams] | None = None
    for n_rollers, idx in _group_graphs(graphs).items():
        X = np.stack([graphs[i].node_features for i in idx])
        Ef = np.stack([graphs[i].edge_features for i in idx])
        Te = np.stack([graphs[i].edge_targets for i in idx])
        Tn = np.stack([graphs[i].node_targets for i in idx])
        edge_preds, node_preds, cache = forward_batch(
            model, X, Ef, keep_cache=True)
        res_e = edge_preds - Te
        res_n = node_preds - Tn
        per_edge_elems = res_e[0].size
        per_node_elems = res_n[0].size
        loss += (w_edge * np.sum(res_e ** 2) / per_edge_elems
                 + w_node * np.sum(res_n ** 2) / per_node_elems) / total
        d_edge = 2.0 * w_edge * res_e / (per_edge_elems * total)
        d_node = 2.0 * w_node * res_n / (per_node_elems * total)
        g = backward_batch(model, cache, d_edge, d_node)
        if grads is None:
            grads = g
        else:
            for name in grads:
                for i in range(len(grads[name].weights)):
                    grads[name].weights[i] += g[name].weights[i]
                    grads[name].biases[i] += g[name].biases[i]
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite batch loss: {loss}")
    # Backward fills the dict in reverse order; realign with the model so
    # flatten_params agrees between parameters and gradients.
    grads = {name: grads[name] for name in model.params}
    return loss, grads


# --- flat parameter view ------------------------------------------------

def parameter_manifest(model: GnnModel) -> list[tuple[str, int, tuple[int, ...]]]:
    """(name, offset, shape) entries tiling the flat parameter vector."""
    entries = []
    offset = 0
    for comp, p in model.params.items():
        for i, w in enumerate(p.weights):
            entries.append((f"{comp}.W{i}", offset, w.shape))
            offset += w.size
        for i, b in enumerate(p.biases):
            entries.append((f"{comp}.b{i}", offset, b.shape))
            offset += b.size
    return entries


def flatten_params(params: dict[str, MlpParams]) -> np.ndarray:
    parts = []
    for p in params.values():
        parts.extend(w.ravel() for w in p.weights)
        parts.extend(b.ravel() for b in p.biases)
    return np.concatenate(parts)


def unflatten_params(model: GnnModel, vec: np.ndarray) -> dict[str, MlpParams]:
    """Rebuild structured parameters from a flat vector (shapes from model)."""
    out: dict[str, MlpParams] = {}
    offset = 0
    for comp, p in model.params.items():
        weights, biases = [], []
        for w in p.weights:
            weights.append(vec[offset:offset + w.size].reshape(w.shape).copy())
            offset += w.size
        for b in p.biases:
            biases.append(vec[offset:offset + b.size].reshape(b.shape).copy())
            offset += b.size
        out[comp] = MlpParams(weights, biases)
    if offset != vec.size:
        raise DimensionError(
            f"flat vector has {vec.size} entries, model needs {offset}")
    return out


# --- Adam ----------------------------------------------------------------

@dataclass
class OptState:
    """Bias-corrected Adam state over the flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    learning_rate: float = 1.0e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1.0e-8

    @staticmethod
    def init(n_params: int, learning_rate: float) -> "OptState":
        return OptState(m=np.zeros(n_params), v=np.zeros(n_params),
                        learning_rate=learning_rate)


def adam_step(params: np.ndarray, grads: np.ndarray,
              state: OptState) -> tuple[np.ndarray, OptState]:
    """One standard bias-corrected Adam update on flat vectors."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise DimensionError("parameter/gradient/state shapes do not align")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads ** 2
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = OptState(m=m, v=v, step=t, learning_rate=state.learning_rate,
                         beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_params, new_state
