"""Derivative engine tests: jets vs finite differences, tape vs hand gradients."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinnrel.autodiff import (
    DerivativeRequest,
    Jet,
    NumericOverflowError,
    Tensor,
    UnsupportedOrderError,
    eval_with_input_derivatives,
    gradient_wrt_parameters,
    value_and_grad,
)
from pinnrel.network import init_params, net_apply


def central_diff(f, x, h=1e-4):
    return (f(x + h) - f(x - h)) / (2 * h)


def central_diff2(f, x, h=1e-4):
    return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)


class TestInputDerivatives:
    def test_square(self):
        reqs = [DerivativeRequest(0, 1), DerivativeRequest(0, 2)]
        value, d = eval_with_input_derivatives(lambda x: x * x, [3.0], reqs)
        assert value == 9.0
        assert d[reqs[0]] == 6.0
        assert d[reqs[1]] == 2.0

    def test_tanh_at_zero(self):
        reqs = [DerivativeRequest(0, 1), DerivativeRequest(0, 2)]
        value, d = eval_with_input_derivatives(lambda x: x.tanh(), [0.0], reqs)
        assert value == 0.0
        assert d[reqs[0]] == 1.0
        assert d[reqs[1]] == 0.0

    def test_network_derivatives_vs_finite_differences(self):
        params = init_params((2, 50, 50, 1), seed=7)
        rng = np.random.default_rng(0)
        t0, z0 = rng.uniform(0.2, 0.8), rng.uniform(-3, 1)

        def f(t):
            x = np.array([[t, z0]])
            return float(net_apply(params.weights, params.biases, x)[0, 0])

        reqs = [DerivativeRequest(0, 1), DerivativeRequest(0, 2)]

        def program(t, z):
            return net_apply(params.weights, params.biases, Jet.hstack([t, z]))

        value, d = eval_with_input_derivatives(program, [t0, z0], reqs)
        assert value == pytest.approx(f(t0), rel=1e-12)
        assert d[reqs[0]] == pytest.approx(central_diff(f, t0), rel=1e-6)
        # second-difference roundoff floor is ~4 eps |f| / h^2, above 1e-6 rel
        assert d[reqs[1]] == pytest.approx(central_diff2(f, t0), rel=1e-5)

    def test_rejects_order_three(self):
        with pytest.raises(UnsupportedOrderError):
            eval_with_input_derivatives(
                lambda x: x, [1.0], [DerivativeRequest(0, 3)]
            )

    def test_overflow_detected(self):
        with pytest.raises(NumericOverflowError):
            eval_with_input_derivatives(
                lambda x: (x * x).exp().exp(), [50.0], [DerivativeRequest(0, 1)]
            )


class TestJetAlgebra:
    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_product_rule(self, a, b):
        x = Jet(a, {0: 1.0}, {0: 0.0})
        out = (x * x) * (x + b)
        # d/dx [x^2 (x+b)] = 3x^2 + 2bx ; d2 = 6x + 2b
        assert np.isclose(out.d1[0], 3 * a * a + 2 * b * a, atol=1e-12)
        assert np.isclose(out.d2[0], 6 * a + 2 * b, atol=1e-12)

    @given(st.floats(0.5, 3.0))
    def test_quotient_and_power_agree(self, a):
        x = Jet(a, {0: 1.0}, {0: 0.0})
        q = 1.0 / x
        p = x ** (-1)
        assert np.isclose(q.d1[0], p.d1[0])
        assert np.isclose(q.d2[0], p.d2[0])

    def test_exp_chain(self):
        x = Jet(0.3, {0: 1.0}, {0: 0.0})
        out = (x * 2.0).exp()
        assert np.isclose(out.d1[0], 2 * np.exp(0.6))
        assert np.isclose(out.d2[0], 4 * np.exp(0.6))


class TestParameterGradients:
    def test_quadratic_identity(self):
        theta = np.arange(6.0).reshape(2, 3)
        value, grads = value_and_grad(lambda ts: (ts[0] * ts[0]).sum() * 0.5, [theta])
        assert value == pytest.approx(0.5 * np.sum(theta**2))
        np.testing.assert_allclose(grads[0], theta)

    def test_constant_objective_gives_zeros(self):
        theta = np.ones(4)
        value, grads = value_and_grad(lambda ts: 3.0, [theta])
        assert value == 3.0
        np.testing.assert_array_equal(grads[0], np.zeros(4))

    def test_network_loss_gradient_vs_finite_differences(self):
        params = init_params((2, 8, 1), seed=1)
        x = np.random.default_rng(2).uniform(-1, 1, size=(20, 2))

        def loss_of(leaves):
            out = net_apply(leaves[0::2], leaves[1::2], x)
            return (out * out).mean()

        grad = gradient_wrt_parameters(loss_of, params.leaves())
        theta = params.flatten()
        h = 1e-5
        for i in np.random.default_rng(3).choice(theta.size, 15, replace=False):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += h
            tm[i] -= h
            from pinnrel.network import NetworkParams

            fp = loss_of(NetworkParams.unflatten(params.layer_sizes, tp).leaves())
            fm = loss_of(NetworkParams.unflatten(params.layer_sizes, tm).leaves())
            fd = (fp - fm) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-10)

    def test_broadcasting_gradients(self):
        w = np.ones((3, 2))
        b = np.array([1.0, 2.0])

        def obj(ts):
            return ((ts[0] + ts[1]) * (ts[0] + ts[1])).sum()

        _, grads = value_and_grad(obj, [w, b])
        assert grads[0].shape == w.shape
        assert grads[1].shape == b.shape
        np.testing.assert_allclose(grads[1], 2 * (w + b).sum(axis=0))

    def test_getitem_scatters(self):
        v = np.arange(4.0)
        _, grads = value_and_grad(lambda ts: (ts[0][1:3] * ts[0][1:3]).sum(), [v])
        np.testing.assert_allclose(grads[0], [0.0, 2.0, 4.0, 0.0])

    def test_nonfinite_objective_raises(self):
        with pytest.raises(NumericOverflowError):
            value_and_grad(lambda ts: (ts[0] * 1e400).sum(), [np.ones(2)])


class TestForwardOverReverse:
    def test_input_derivative_is_parameter_differentiable(self):
        # d/dW of (du/dt) must match finite differences of du/dt in W
        params = init_params((1, 5, 1), seed=4)
        t0 = 0.7

        def dudt(leaves):
            jet = Jet(np.array([[t0]]), {0: np.ones((1, 1))}, {})
            out = net_apply(leaves[0::2], leaves[1::2], jet)
            return out.d1[0].sum() if isinstance(out.d1[0], Tensor) else float(out.d1[0])

        grad = gradient_wrt_parameters(dudt, params.leaves())
        theta = params.flatten()
        h = 1e-6
        from pinnrel.network import NetworkParams

        def plain(theta_vec):
            # exact du/dt via a numpy-component jet at perturbed parameters
            p = NetworkParams.unflatten(params.layer_sizes, theta_vec)
            jet = Jet(np.array([[t0]]), {0: np.ones((1, 1))}, {})
            return float(np.asarray(net_apply(p.weights, p.biases, jet).d1[0]))

        for i in [0, 3, 7, grad.size - 1]:
            tp, tm = theta.copy(), theta.copy()
            tp[i] += h
            tm[i] -= h
            fd = (plain(tp) - plain(tm)) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-8)
