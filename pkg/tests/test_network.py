import numpy as np
import pytest

from bearnet.core import (BearingConfig, LoadSchedule, SimParams,
                          derived_geometry)
from bearnet.graphs import (Graph, SamplingPolicy, compute_norm_stats,
                            normalize_graph, sample_dataset)
from bearnet.network import (DimensionError, GnnHyperParams, MlpParams,
                             NonFiniteError, OptState, adam_step,
                             flatten_params, gnn_forward, loss_and_gradients,
                             loss_fn, mlp_forward, mlp_init, model_init,
                             parameter_manifest, unflatten_params)
from bearnet.simulator import simulate

SMALL = GnnHyperParams(latent_size=8, n_blocks=1)


@pytest.fixture(scope="module")
def norm_graphs():
    traj = simulate(BearingConfig(n_rollers=15),
                    LoadSchedule(base_load=13000.0), SimParams(n_steps=80))
    graphs = sample_dataset([traj], SamplingPolicy(windows=(), stride=10))
    stats = compute_norm_stats(graphs)
    return [normalize_graph(g, stats) for g in graphs]


def permute_rollers(g: Graph, perm: np.ndarray) -> Graph:
    """Relabel rollers by perm, keeping the canonical edge-block layout."""
    node_order = np.concatenate([[0, 1], 2 + perm])
    edge_order = np.concatenate([perm + k * len(perm) for k in range(4)])
    return Graph(node_features=g.node_features[node_order],
                 senders=g.senders, receivers=g.receivers,
                 edge_features=g.edge_features[edge_order],
                 node_targets=g.node_targets[node_order],
                 edge_targets=g.edge_targets[edge_order], meta=g.meta)


class TestMlp:
    def test_init_shapes_and_bounds(self):
        p = mlp_init([3, 5, 2], seed=0)
        assert [w.shape for w in p.weights] == [(5, 3), (2, 5)]
        assert np.all(np.abs(p.weights[0]) <= 1.0 / np.sqrt(3))
        assert np.all(np.abs(p.weights[1]) <= 1.0 / np.sqrt(5))
        assert all(np.all(b == 0.0) for b in p.biases)

    def test_init_deterministic(self):
        a, b = mlp_init([3, 4, 2], 7), mlp_init([3, 4, 2], 7)
        assert all(np.array_equal(x, y)
                   for x, y in zip(a.weights, b.weights))

    def test_forward_hand_computed(self):
        w0 = np.array([[1.0, -1.0], [0.5, 0.5]])
        w1 = np.array([[2.0, -1.0]])
        p = MlpParams([w0, w1], [np.array([0.0, -1.0]), np.array([0.5])])
        # h = relu([x0-x1, 0.5 x0 + 0.5 x1 - 1]); y = 2 h0 - h1 + 0.5
        assert mlp_forward(p, np.array([3.0, 1.0])) == pytest.approx([3.5])
        assert mlp_forward(p, np.array([0.0, 2.0])) == pytest.approx([0.5])

    def test_param_count_oracle(self):
        # [3, 64, 64, 2]: 3*64+64 + 64*64+64 + 64*2+2 = 4546
        assert mlp_init([3, 64, 64, 2], 0).n_params() == 4546

    def test_bad_input_dim(self):
        with pytest.raises(DimensionError):
            mlp_forward(mlp_init([3, 4, 2], 0), np.zeros(5))

    def test_bad_layer_sizes(self):
        with pytest.raises(ValueError):
            mlp_init([3], 0)


class TestModel:
    def test_component_inventory(self):
        model = model_init(GnnHyperParams(), seed=0)
        assert list(model.params) == [
            "node_encoder", "edge_encoder",
            "block0_edge", "block0_node", "block1_edge", "block1_node",
            "block2_edge", "block2_node", "edge_decoder", "node_decoder"]
        assert model.params["block0_edge"].layer_sizes == [192, 64, 64, 64]
        assert model.params["block0_node"].layer_sizes == [128, 64, 64, 64]
        assert model.params["edge_decoder"].layer_sizes == [64, 64, 64, 2]

    def test_unshared_blocks(self):
        model = model_init(GnnHyperParams(), seed=0)
        assert not np.array_equal(model.params["block0_edge"].weights[0],
                                  model.params["block1_edge"].weights[0])

    def test_flatten_roundtrip_and_manifest(self):
        model = model_init(SMALL, seed=3)
        vec = flatten_params(model.params)
        assert vec.size == model.n_params()
        entries = parameter_manifest(model)
        last_name, last_off, last_shape = entries[-1]
        assert last_off + int(np.prod(last_shape)) == vec.size
        clone = unflatten_params(model, vec)
        for name in model.params:
            for w1, w2 in zip(model.params[name].weights, clone[name].weights):
                assert np.array_equal(w1, w2)

    def test_unflatten_rejects_wrong_size(self):
        model = model_init(SMALL, seed=3)
        with pytest.raises(DimensionError):
            unflatten_params(model, np.zeros(model.n_params() + 1))


class TestForward:
    def test_zero_processor_is_identity_on_latents(self, norm_graphs):
        # zeroing the processor and decoder hidden stack makes both heads
        # depend on the encoders alone; with zero decoder weights the
        # output is exactly the decoder bias
        model = model_init(SMALL, seed=0)
        for name, p in model.params.items():
            if name.startswith("block") or name.endswith("decoder"):
                for w in p.weights:
                    w[:] = 0.0
        model.params["edge_decoder"].biases[-1][:] = [1.5, -2.0]
        model.params["node_decoder"].biases[-1][:] = [0.25, 0.75]
        e, v = gnn_forward(model, norm_graphs[0])
        assert np.all(e == np.array([1.5, -2.0]))
        assert np.all(v == np.array([0.25, 0.75]))

    def test_permutation_equivariance_bit_exact(self, norm_graphs):
        model = model_init(SMALL, seed=1)
        g = norm_graphs[2]
        perm = np.random.default_rng(5).permutation(g.n_rollers)
        e1, v1 = gnn_forward(model, g)
        e2, v2 = gnn_forward(model, permute_rollers(g, perm))
        edge_order = np.concatenate([perm + k * g.n_rollers for k in range(4)])
        node_order = np.concatenate([[0, 1], 2 + perm])
        assert np.array_equal(e1[edge_order], e2)
        assert np.array_equal(v1[node_order], v2)

    def test_non_finite_latents_raise(self, norm_graphs):
        model = model_init(SMALL, seed=1)
        model.params["node_encoder"].weights[0][:] = 1e300
        model.params["block0_node"].weights[0][:] = 1e300
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NonFiniteError):
                gnn_forward(model, norm_graphs[0])

    def test_wrong_feature_dim_rejected(self, norm_graphs):
        model = model_init(GnnHyperParams(latent_size=8, n_blocks=1,
                                          node_in=7), seed=0)
        with pytest.raises(DimensionError):
            gnn_forward(model, norm_graphs[0])


class TestLoss:
    def test_perfect_prediction_zero(self):
        e = np.ones((8, 2))
        v = np.ones((4, 2))
        assert loss_fn(e, v, e.copy(), v.copy()) == 0.0

    def test_unit_residual_weighted(self):
        e = np.zeros((8, 2))
        v = np.zeros((4, 2))
        loss = loss_fn(e + 1.0, v + 1.0, e, v, w_edge=2.0, w_node=0.5)
        assert loss == pytest.approx(2.5)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            loss_fn(np.zeros((8, 2)), np.zeros((4, 2)),
                    np.zeros((7, 2)), np.zeros((4, 2)))

    def test_batch_loss_matches_per_graph_mean(self, norm_graphs):
        model = model_init(SMALL, seed=2)
        batch = norm_graphs[:4]
        loss, _ = loss_and_gradients(model, batch)
        singles = []
        for g in batch:
            e, v = gnn_forward(model, g)
            singles.append(loss_fn(e, v, g.edge_targets, g.node_targets))
        assert loss == pytest.approx(np.mean(singles), rel=1e-12)


class TestGradients:
    def test_finite_difference_check(self, norm_graphs):
        model = model_init(SMALL, seed=4)
        batch = norm_graphs[:2]
        _, grads = loss_and_gradients(model, batch)
        flat_g = flatten_params(grads)
        theta = flatten_params(model.params)
        rng = np.random.default_rng(0)
        picks = rng.choice(theta.size, size=60, replace=False)
        h = 1e-6
        worst = 0.0
        for i in picks:
            tp = theta.copy()
            tp[i] += h
            model_p = type(model)(model.hyper, unflatten_params(model, tp))
            lp, _ = loss_and_gradients(model_p, batch)
            tm = theta.copy()
            tm[i] -= h
            model_m = type(model)(model.hyper, unflatten_params(model, tm))
            lm, _ = loss_and_gradients(model_m, batch)
            fd = (lp - lm) / (2.0 * h)
            if abs(fd - flat_g[i]) < 1e-9:
                continue  # below central-difference roundoff noise
            denom = max(abs(fd), abs(flat_g[i]))
            worst = max(worst, abs(fd - flat_g[i]) / denom)
        assert worst < 1e-4

    def test_gradients_deterministic(self, norm_graphs):
        model = model_init(SMALL, seed=4)
        l1, g1 = loss_and_gradients(model, norm_graphs[:3])
        l2, g2 = loss_and_gradients(model, norm_graphs[:3])
        assert l1 == l2
        assert np.array_equal(flatten_params(g1), flatten_params(g2))

    def test_empty_batch_rejected(self, norm_graphs):
        with pytest.raises(ValueError):
            loss_and_gradients(model_init(SMALL, seed=0), [])


class TestAdam:
    def test_first_step_moves_by_lr_against_gradient_sign(self):
        params = np.array([1.0, -2.0, 0.5])
        grads = np.array([0.3, -0.7, 0.0])
        state = OptState.init(3, learning_rate=0.01)
        new, state = adam_step(params, grads, state)
        # bias correction makes the first update ~lr * sign(grad)
        assert new[0] == pytest.approx(1.0 - 0.01, rel=1e-6)
        assert new[1] == pytest.approx(-2.0 + 0.01, rel=1e-6)
        assert new[2] == params[2]
        assert state.step == 1

    def test_two_steps_oracle(self):
        # frozen from the standard Adam recurrence with constant gradient
        params = np.array([0.0])
        state = OptState.init(1, learning_rate=0.1)
        g = np.array([2.0])
        p1, state = adam_step(params, g, state)
        p2, state = adam_step(p1, g, state)
        assert p1[0] == pytest.approx(-0.09999999950000009, abs=1e-15)
        assert p2[0] == pytest.approx(-0.19999999899999946, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            adam_step(np.zeros(3), np.zeros(4), OptState.init(3, 0.1))

    def test_descent_on_quadratic(self):
        theta = np.array([5.0, -3.0])
        state = OptState.init(2, learning_rate=0.05)
        for _ in range(400):
            theta, state = adam_step(theta, 2.0 * theta, state)
        assert np.linalg.norm(theta) < 1e-2
