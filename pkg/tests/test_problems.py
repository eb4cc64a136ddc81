"""Residual correctness, limit states, and layer location for the benchmarks."""

import numpy as np
import pytest

from pinnrel.autodiff import Jet
from pinnrel.network import init_params
from pinnrel.oracles import burgers_fd_solve, cascade_rk4, decay_exact
from pinnrel.problems import (
    BurgersConstants,
    CascadeConstants,
    DecayConstants,
    NoRootError,
    burgers_layer_batch,
    burgers_problem,
    cascade_cleared_residuals,
    cascade_denominators,
    cascade_problem,
    decay_problem,
    limit_state_cascade,
    limit_state_decay,
    residual_batch,
    residual_burgers,
    residual_cascade,
    residual_decay,
    transition_layer_location,
)
from pinnrel.training import make_surrogate

RATES = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
CASCADE = CascadeConstants(nominal_rates=RATES, e3p0=0.3)


def jet_value(x):
    return np.asarray(x.value if isinstance(x, Jet) else x)


class TestDecayResidual:
    def test_exact_solution_annihilates(self):
        # oracle-backed double: u = exp(-Z t) solves du/dt + Z u = 0
        def exact(t, z):
            u = (-(z * t)).exp() if isinstance(t, Jet) else np.exp(-z * t)
            return [u]

        rng = np.random.default_rng(0)
        t = rng.uniform(0, 1, 20)
        z = rng.uniform(-3, 1, 20)
        r = residual_decay(exact, t, z)
        assert np.max(np.abs(jet_value(r))) < 1e-10

    def test_zero_network_gives_residual_z(self):
        # u_NN = 0 -> u_hat = 1, du/dt = 0 -> R = Z
        prob = decay_problem()
        params = init_params((2, 5, 1), seed=0)
        for w in params.weights:
            w[:] = 0.0
        surr = make_surrogate(prob, params)
        z = np.array([-2.0, 0.5, 1.0])
        r = residual_decay(surr, np.array([0.3, 0.5, 0.9]), z)
        np.testing.assert_allclose(jet_value(r).ravel(), z, atol=1e-14)

    def test_time_zero_product_rule(self):
        # u_hat = t u_NN + 1: at t=0, R = u_NN(0, Z) + Z
        prob = decay_problem()
        params = init_params((2, 8, 1), seed=3)
        surr = make_surrogate(prob, params)
        z = np.array([-1.5, 0.0, 0.7])
        r = jet_value(residual_decay(surr, np.zeros(3), z)).ravel()
        u_nn = np.array(
            [surr.params and _net_value(params, [0.0, zi]) for zi in z]
        )
        np.testing.assert_allclose(r, u_nn + z, atol=1e-12)

    def test_residual_vs_finite_differences(self):
        prob = decay_problem()
        params = init_params((2, 10, 1), seed=5)
        surr = make_surrogate(prob, params)
        t0, z0 = 0.4, -1.2
        r = float(jet_value(residual_decay(surr, [t0], [z0]))[0, 0])
        h = 1e-6
        u = lambda t: float(surr(np.array([t, z0]))[0])
        fd = (u(t0 + h) - u(t0 - h)) / (2 * h) + z0 * u(t0)
        assert r == pytest.approx(fd, rel=1e-6)


def _net_value(params, coords):
    from pinnrel.network import forward

    return float(forward(params, np.asarray(coords, dtype=np.float64))[0])


class TestBurgersResidual:
    def test_constant_field_double(self):
        const = lambda x, t, d: [Jet.constant(np.full((np.asarray(x.value).shape[0], 1), 0.7))]
        r = residual_burgers(const, [0.1], [1.0], [0.05], nu=0.05)
        assert np.max(np.abs(jet_value(r))) == 0.0

    def test_linear_field_double(self):
        # u = x: R = 0 + x * 1 - 0 = x
        lin = lambda x, t, d: [x]
        xs = np.array([-0.5, 0.0, 0.8])
        r = residual_burgers(lin, xs, np.ones(3), np.zeros(3), nu=0.05)
        np.testing.assert_allclose(jet_value(r).ravel(), xs, atol=1e-14)

    def test_residual_vs_finite_differences(self):
        prob = burgers_problem()
        params = init_params((3, 12, 1), seed=6)
        surr = make_surrogate(prob, params)
        rng = np.random.default_rng(7)
        pts = np.column_stack(
            [rng.uniform(-0.9, 0.9, 20), rng.uniform(0.5, 9.5, 20), rng.uniform(0, 0.1, 20)]
        )
        r = jet_value(
            residual_burgers(surr, pts[:, 0], pts[:, 1], pts[:, 2], nu=0.05)
        ).ravel()
        h = 1e-4
        for i in range(20):
            x0, t0, d0 = pts[i]
            u = lambda x, t: float(surr(np.array([x, t, d0]))[0])
            ut = (u(x0, t0 + h) - u(x0, t0 - h)) / (2 * h)
            ux = (u(x0 + h, t0) - u(x0 - h, t0)) / (2 * h)
            uxx = (u(x0 + h, t0) - 2 * u(x0, t0) + u(x0 - h, t0)) / (h * h)
            fd = ut + u(x0, t0) * ux - 0.05 * uxx
            assert r[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestCascadeResidual:
    def test_rk4_trajectory_annihilates(self):
        z = np.random.default_rng(1).uniform(-1, 1, 6)
        traj = cascade_rk4(z, RATES, dt=5e-4, t_end=5.0, save_every=1000)

        # piecewise trajectory double with exact time derivative from the ODE
        from pinnrel.oracles import _cascade_vmax, cascade_rhs

        vmax = _cascade_vmax(z, RATES, 0.1)
        states = traj.states[1:]  # skip t=0 (residuals evaluated mid-run)
        e = [states[:, [i]] for i in range(3)]
        de = cascade_rhs(states, vmax, 0.2)
        de_cols = [de[:, [i]] for i in range(3)]
        vcols = [np.full((states.shape[0], 1), vmax[i]) for i in range(6)]
        rs = cascade_cleared_residuals(e, de_cols, vcols, 0.2)
        for r in rs:
            assert np.max(np.abs(r)) < 1e-6

    def test_time_zero_hand_reduction(self):
        # at t=0 the transform forces e = (0,1,0); R2 reduces to
        # (Km3 + 0)(Km4 + 1) de2/dt + v4 * 1 * (Km3 + 0)
        km = 0.2
        de = [np.array([[0.3]]), np.array([[-0.4]]), np.array([[0.1]])]
        e = [np.array([[0.0]]), np.array([[1.0]]), np.array([[0.0]])]
        v = [np.array([[1.0]])] * 6
        r1, r2, r3 = cascade_cleared_residuals(e, de, v, km)
        expected_r2 = (km + 0.0) * (km + 1.0) * de[1][0, 0] + 1.0 * 1.0 * (km + 0.0)
        assert r2[0, 0] == pytest.approx(expected_r2, abs=1e-15)

    def test_cleared_equals_denominator_form_times_denominators(self):
        from pinnrel.oracles import cascade_rhs

        rng = np.random.default_rng(2)
        for _ in range(20):
            e = rng.uniform(0.01, 0.99, 3)
            de = rng.normal(size=3)
            vmax = rng.uniform(0.5, 2.0, 6)
            km, g4, drive = 0.2, 0.0, 1.0
            d1, d2, d3 = cascade_denominators(e[0], e[1], e[2], km, g4)
            rhs = cascade_rhs(e, vmax, km, g4, drive)
            cleared = cascade_cleared_residuals(
                [np.array([[v]]) for v in e],
                [np.array([[v]]) for v in de],
                [np.array([[v]]) for v in vmax],
                km, g4, drive,
            )
            expected = [(de[i] - rhs[i]) * d for i, d in enumerate((d1, d2, d3))]
            for got, want in zip(cleared, expected):
                assert got[0, 0] == pytest.approx(want, rel=1e-10)

    def test_residual_batch_shapes(self):
        prob = cascade_problem(CASCADE)
        params = init_params((7, 6, 3), seed=0)
        surr = make_surrogate(prob, params)
        colloc = np.random.default_rng(3).uniform(0.1, 0.9, size=(11, 7))
        rs = residual_batch(prob, surr, colloc)
        assert len(rs) == 3
        for r in rs:
            assert jet_value(r).shape == (11, 1)


class TestLimitStates:
    def test_decay_threshold(self):
        assert limit_state_decay(0.5, 0.5) == 0.0
        assert limit_state_decay(1.0, 0.5) == 0.5

    def test_decay_failure_boundary_at_ln2(self):
        u = decay_exact(1.0, np.log(2.0))
        assert limit_state_decay(u, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_cascade_threshold(self):
        assert limit_state_cascade(0.3, 0.3) == 0.0
        assert limit_state_cascade(0.0, 0.3) == pytest.approx(-0.3)

    def test_layer_location_linear(self):
        assert transition_layer_location(lambda x: -x) == pytest.approx(0.0, abs=1e-6)
        assert transition_layer_location(lambda x: -x + 0.2) == pytest.approx(0.2, abs=1e-6)

    def test_layer_location_no_root(self):
        with pytest.raises(NoRootError):
            transition_layer_location(lambda x: np.ones_like(x))

    def test_layer_batch_matches_scalar(self):
        shifts = np.array([0.0, 0.1, -0.3])
        u_eval = lambda X: -X + shifts[:, None]
        z = burgers_layer_batch(u_eval, 3)
        np.testing.assert_allclose(z, shifts, atol=1e-6)

    def test_layer_batch_norow_is_nan(self):
        u_eval = lambda X: np.ones_like(X)
        z = burgers_layer_batch(u_eval, 2)
        assert np.all(np.isnan(z))


class TestConstants:
    def test_decay_validation(self):
        with pytest.raises(ValueError):
            DecayConstants(u0=0.4, u_d=0.5)

    def test_burgers_validation(self):
        with pytest.raises(ValueError):
            BurgersConstants(nu=-1.0)

    def test_cascade_validation(self):
        with pytest.raises(ValueError):
            CascadeConstants(nominal_rates=(1.0,) * 5, e3p0=0.3)

    def test_domains(self):
        assert decay_problem().domain.bounds == ((0.0, 1.0), (-7.0, 3.0))
        assert burgers_problem().domain.bounds == ((-1.0, 1.0), (0.0, 10.0), (0.0, 0.1))
        assert cascade_problem(CASCADE).domain.bounds[0] == (0.0, 5.0)
