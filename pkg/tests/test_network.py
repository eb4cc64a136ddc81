"""Network forward pass, initialization, transforms, and the fused jet kernel."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinnrel.autodiff import Jet, value_and_grad
from pinnrel.network import (
    NetworkParams,
    Surrogate,
    _stack_columns,
    forward,
    fused_net_apply,
    init_params,
    mlp_jet,
    net_apply,
)


def reference_forward(weights, biases, x):
    """Independent re-implementation of the layer recursion."""
    h = np.asarray(x, dtype=np.float64)
    for i in range(len(weights) - 1):
        h = np.tanh(h.dot(weights[i]) + biases[i])
    return h.dot(weights[-1]) + biases[-1]


class TestNetworkParams:
    def test_parameter_count(self):
        p = init_params((2, 50, 50, 1), seed=7)
        assert p.parameter_count == 2 * 50 + 50 + 50 * 50 + 50 + 50 * 1 + 1 == 2751

    def test_same_seed_identical(self):
        a = init_params((3, 10, 1), seed=5)
        b = init_params((3, 10, 1), seed=5)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_glorot_variance(self):
        p = init_params((50, 50, 1), seed=0)
        var = np.var(p.weights[0])
        expected = 2.0 / (50 + 50)  # uniform(-L, L) variance = L^2/3 = 2/(fans)
        assert var == pytest.approx(expected, rel=0.2)

    def test_flatten_roundtrip(self):
        p = init_params((2, 7, 3, 1), seed=2)
        q = NetworkParams.unflatten(p.layer_sizes, p.flatten())
        for wa, wb in zip(p.leaves(), q.leaves()):
            np.testing.assert_array_equal(wa, wb)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            NetworkParams((2, 3, 1), [np.zeros((2, 2))], [np.zeros(3)])


class TestForward:
    def test_zero_parameters_give_zero(self):
        sizes = (2, 4, 1)
        p = NetworkParams(sizes, [np.zeros((2, 4)), np.zeros((4, 1))], [np.zeros(4), np.zeros(1)])
        out = forward(p, np.array([0.3, -1.0]))
        np.testing.assert_array_equal(out, [0.0])

    def test_single_neuron_hand_value(self):
        p = NetworkParams(
            (1, 1, 1),
            [np.array([[1.0]]), np.array([[2.0]])],
            [np.array([0.0]), np.array([1.0])],
        )
        assert forward(p, np.array([0.0]))[0] == 1.0

    def test_vs_independent_reference(self):
        p = init_params((2, 50, 1), seed=11)
        x = np.random.default_rng(0).uniform(-1, 1, size=(10, 2))
        ours = forward(p, x)
        theirs = reference_forward(p.weights, p.biases, x)
        assert np.max(np.abs(ours - theirs)) < 1e-12


class TestFusedKernel:
    @pytest.mark.parametrize("layer_sizes,dirs", [
        ((2, 9, 1), {"t": ([1.0, 0.0], 1)}),
        ((3, 8, 8, 1), {"x": ([1.0, 0.0, 0.0], 2), "t": ([0.0, 0.1, 0.0], 1)}),
        ((7, 6, 6, 3), {"t": ([1.0] + [0.0] * 6, 1)}),
    ])
    def test_matches_generic_jet_path(self, layer_sizes, dirs):
        p = init_params(layer_sizes, seed=3)
        n = 17
        x = np.random.default_rng(4).uniform(-1, 1, size=(n, layer_sizes[0]))
        seeds = {k: np.array(v[0]) for k, v in dirs.items()}
        orders = {k: v[1] for k, v in dirs.items()}
        fused = mlp_jet(p.weights, p.biases, x, seeds, orders)

        jet_in = Jet(
            x,
            {k: np.broadcast_to(s, x.shape) for k, s in seeds.items()},
            {k: 0.0 for k, o in orders.items() if o == 2},
        )
        generic = net_apply(p.weights, p.biases, jet_in)
        np.testing.assert_allclose(np.asarray(fused.value), generic.value, atol=1e-14)
        for k in seeds:
            np.testing.assert_allclose(np.asarray(fused.d1[k]), np.asarray(generic.d1[k]), atol=1e-13)
        for k, o in orders.items():
            if o == 2:
                np.testing.assert_allclose(np.asarray(fused.d2[k]), np.asarray(generic.d2[k]), atol=1e-13)

    def test_parameter_gradients_match_generic(self):
        p = init_params((3, 10, 10, 1), seed=8)
        x = np.random.default_rng(9).uniform(-1, 1, size=(25, 3))
        seeds = {"x": np.array([1.0, 0.0, 0.0]), "t": np.array([0.0, 1.0, 0.0])}
        orders = {"x": 2, "t": 1}

        def fused_obj(ts):
            jet = mlp_jet(ts[0::2], ts[1::2], x, seeds, orders)
            r = jet.d1["t"] + jet.value * jet.d1["x"] - 0.05 * jet.d2["x"]
            return (r * r).mean()

        def generic_obj(ts):
            jet_in = Jet(x, {k: np.broadcast_to(s, x.shape) for k, s in seeds.items()}, {"x": 0.0})
            out = net_apply(ts[0::2], ts[1::2], jet_in)
            r = out.d1["t"] + out.value * out.d1["x"] - 0.05 * out.d2["x"]
            return (r * r).mean()

        v1, g1 = value_and_grad(fused_obj, p.leaves())
        v2, g2 = value_and_grad(generic_obj, p.leaves())
        assert v1 == pytest.approx(v2, rel=1e-14)
        for a, b in zip(g1, g2):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_fused_dispatch_plain_numpy_columns(self):
        # without jets the dispatch reduces to the plain forward pass
        p = init_params((2, 5, 1), seed=0)
        cols = [np.ones((3, 1)), np.zeros((3, 1))]
        out = fused_net_apply(p.weights, p.biases, cols)
        np.testing.assert_array_equal(
            out, net_apply(p.weights, p.biases, np.hstack(cols))
        )


def random_surrogate(transform, seed):
    sizes = {"decay": (2, 12, 1), "burgers": (3, 12, 1), "cascade": (7, 12, 3)}[transform]
    consts = {"decay": {"u0": 1.0}, "burgers": {"t_scale": 0.1}, "cascade": {}}[transform]
    rng = np.random.default_rng(seed)
    weights = [rng.normal(size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(size=b) for b in sizes[1:]]
    return Surrogate(NetworkParams(sizes, weights, biases), transform, consts)


class TestHardConstraints:
    @given(st.integers(0, 10**6))
    @settings(max_examples=100, deadline=None)
    def test_decay_initial_condition(self, seed):
        s = random_surrogate("decay", seed)
        z = np.random.default_rng(seed).uniform(-7, 3, size=(5, 1))
        coords = np.column_stack([np.zeros(5), z[:, 0]])
        assert np.max(np.abs(s(coords) - 1.0)) < 1e-12

    @given(st.integers(0, 10**6))
    @settings(max_examples=100, deadline=None)
    def test_burgers_boundary_conditions(self, seed):
        s = random_surrogate("burgers", seed)
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, 10, size=5)
        d = rng.uniform(0, 0.1, size=5)
        right = s(np.column_stack([np.ones(5), t, d]))
        left = s(np.column_stack([-np.ones(5), t, d]))
        assert np.max(np.abs(right + 1.0)) < 1e-12
        assert np.max(np.abs(left[:, 0] - (1.0 + d))) < 1e-12

    @given(st.integers(0, 10**6))
    @settings(max_examples=100, deadline=None)
    def test_burgers_initial_condition(self, seed):
        s = random_surrogate("burgers", seed)
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, size=5)
        d = rng.uniform(0, 0.1, size=5)
        out = s(np.column_stack([x, np.zeros(5), d]))[:, 0]
        ic = -1.0 + (1.0 - x) * (1.0 + d / 2.0)
        assert np.max(np.abs(out - ic)) < 1e-12

    @given(st.integers(0, 10**6))
    @settings(max_examples=100, deadline=None)
    def test_cascade_initial_condition(self, seed):
        s = random_surrogate("cascade", seed)
        z = np.random.default_rng(seed).uniform(-1, 1, size=(5, 6))
        out = s(np.column_stack([np.zeros(5), z]))
        np.testing.assert_allclose(out, np.tile([0.0, 1.0, 0.0], (5, 1)), atol=1e-12)


class TestSurrogateValidation:
    def test_wrong_input_count_rejected(self):
        p = init_params((3, 5, 1), seed=0)
        with pytest.raises(ValueError):
            Surrogate(p, "decay")

    def test_unknown_transform_rejected(self):
        p = init_params((2, 5, 1), seed=0)
        with pytest.raises(ValueError):
            Surrogate(p, "heat")

    def test_stack_columns_broadcasts_scalars(self):
        out = _stack_columns([np.ones((4, 1)), 2.0])
        assert out.shape == (4, 2)
        np.testing.assert_array_equal(out[:, 1], 2.0)
