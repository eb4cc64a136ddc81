"""The three benchmark problems: residuals, limit states, domains.

Residual evaluators accept either a :class:`~pinnrel.network.Surrogate` or any
callable taking coordinate column jets and returning output columns, so exact
solutions and other test doubles can be substituted for the network.

Column conventions: decay (t, Z); burgers (x, t, delta); cascade (t, Z1..Z6).
Failure convention everywhere: J < 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .autodiff import Jet
from .network import Surrogate
from .stochastic import DomainBox, Marginal

__all__ = [
    "NoRootError",
    "DecayConstants",
    "BurgersConstants",
    "CascadeConstants",
    "BenchmarkProblem",
    "decay_problem",
    "burgers_problem",
    "cascade_problem",
    "residual_decay",
    "residual_burgers",
    "residual_cascade",
    "cascade_cleared_residuals",
    "cascade_denominators",
    "residual_batch",
    "surrogate_limit_state",
    "limit_state_decay",
    "limit_state_cascade",
    "limit_state_burgers",
    "transition_layer_location",
    "burgers_layer_batch",
]


class NoRootError(Exception):
    """The field has no sign change on the search interval."""


# -- constants ----------------------------------------------------------------


@dataclass(frozen=True)
class DecayConstants:
    u0: float = 1.0
    u_d: float = 0.5
    t_eval: float = 1.0  # derived: reproduces the exact Pf at t = 1

    def __post_init__(self):
        if not self.u0 > self.u_d > 0:
            raise ValueError("decay constants require u0 > u_d > 0")


@dataclass(frozen=True)
class BurgersConstants:
    nu: float = 0.05  # declared assumption; not a reported value
    e: float = 0.1
    z0: float = 0.45
    t_eval: float = 10.0

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        if not 0.0 <= self.z0 < 1.0:
            raise ValueError("threshold z0 must lie in [0, 1)")


@dataclass(frozen=True)
class CascadeConstants:
    nominal_rates: tuple  # six nominal max rates; required configuration
    e3p0: float
    sigma_v: float = 0.1
    km: float = 0.2
    g4: float = 0.0
    drive: float = 1.0
    t_eval: float = 5.0
    t_horizon: float = 5.0

    def __post_init__(self):
        rates = tuple(float(v) for v in self.nominal_rates)
        if len(rates) != 6 or any(v <= 0 for v in rates):
            raise ValueError("six positive nominal rates are required")
        if self.km <= 0:
            raise ValueError("Michaelis constants must be positive")
        object.__setattr__(self, "nominal_rates", rates)


# -- problem bundles ----------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkProblem:
    id: str
    domain: DomainBox  # collocation box over all network inputs
    marginals: tuple
    constants: object
    residual_arity: int
    output_arity: int

    def __post_init__(self):
        if self.residual_arity != self.output_arity:
            raise ValueError("residual arity must match output arity")


def decay_problem(constants=None):
    c = constants or DecayConstants()
    z = Marginal.normal(-2.0, 1.0)
    domain = DomainBox(((0.0, c.t_eval),) + (z.collocation_interval(),))
    return BenchmarkProblem("decay", domain, (z,), c, 1, 1)


def burgers_problem(constants=None):
    c = constants or BurgersConstants()
    delta = Marginal.uniform(0.0, c.e)
    domain = DomainBox(((-1.0, 1.0), (0.0, c.t_eval), (0.0, c.e)))
    return BenchmarkProblem("burgers", domain, (delta,), c, 1, 1)


def cascade_problem(constants):
    zs = tuple(Marginal.uniform(-1.0, 1.0) for _ in range(6))
    bounds = ((0.0, constants.t_horizon),) + tuple((-1.0, 1.0) for _ in range(6))
    return BenchmarkProblem("cascade", DomainBox(bounds), zs, constants, 3, 3)


# -- residual evaluators --------------------------------------------------------


def _col(v):
    return np.asarray(v, dtype=np.float64).reshape(-1, 1)


def _apply_field(field, cols, weights=None, biases=None):
    if isinstance(field, Surrogate):
        return field.apply(cols, weights=weights, biases=biases)
    out = field(*cols)
    return out if isinstance(out, (list, tuple)) else [out]


def _check_finite(r, problem_id):
    value = r.value if isinstance(r, Jet) else r
    arr = getattr(value, "value", value)  # unwrap Tensor
    if not np.all(np.isfinite(np.asarray(arr, dtype=np.float64))):
        raise FloatingPointError(f"non-finite {problem_id} residual")


def residual_decay(field, t, z, weights=None, biases=None):
    """du/dt + Z u at the given points (vectorized over rows)."""
    t_jet = Jet.seed(_col(t), "t")
    z_col = _col(z)
    (u,) = _apply_field(field, [t_jet, Jet.constant(z_col)], weights, biases)
    r = u.d1.get("t", 0.0) + z_col * u.value
    _check_finite(r, "decay")
    return r


def residual_burgers(field, x, t, delta, nu, weights=None, biases=None):
    """u_t + u u_x - nu u_xx at the given points."""
    x_jet = Jet.seed(_col(x), "x", second_order=True)
    t_jet = Jet.seed(_col(t), "t")
    d_col = _col(delta)
    (u,) = _apply_field(field, [x_jet, t_jet, Jet.constant(d_col)], weights, biases)
    r = u.d1.get("t", 0.0) + u.value * u.d1.get("x", 0.0) - nu * u.d2.get("x", 0.0)
    _check_finite(r, "burgers")
    return r


def cascade_denominators(e1, e2, e3, km, g4=0.0):
    km = np.broadcast_to(np.asarray(km, dtype=np.float64), (6,))
    d1 = (1.0 + g4 * e3) * (km[0] + (1.0 - e1)) * (km[1] + e1)
    d2 = (km[2] + (1.0 - e2)) * (km[3] + e2)
    d3 = (km[4] + (1.0 - e3)) * (km[5] + e3)
    return d1, d2, d3


def cascade_cleared_residuals(e, de_dt, vmax, km, g4=0.0, drive=1.0):
    """Cleared-denominator residuals of the enzyme cascade.

    ``e`` and ``de_dt`` are 3-element sequences of column-like values;
    ``vmax`` a 6-element sequence.  Written for generic arithmetic so the
    same expression serves numpy checks and tape-backed training.
    """
    e1, e2, e3 = e
    de1, de2, de3 = de_dt
    km = np.broadcast_to(np.asarray(km, dtype=np.float64), (6,))
    v1, v2, v3, v4, v5, v6 = vmax
    r1 = (
        (1.0 + g4 * e3) * (km[0] + (1.0 - e1)) * (km[1] + e1) * de1
        - drive * v1 * (1.0 - e1) * (km[1] + e1)
        + v2 * e1 * (1.0 + g4 * e3) * (km[0] + (1.0 - e1))
    )
    r2 = (
        (km[2] + (1.0 - e2)) * (km[3] + e2) * de2
        - v3 * e1 * (1.0 - e2) * (km[3] + e2)
        + v4 * e2 * (km[2] + (1.0 - e2))
    )
    r3 = (
        (km[4] + (1.0 - e3)) * (km[5] + e3) * de3
        - v5 * e2 * (1.0 - e3) * (km[5] + e3)
        + v6 * e3 * (km[4] + (1.0 - e3))
    )
    return r1, r2, r3


def residual_cascade(field, t, z, constants, weights=None, biases=None):
    """The three cleared-denominator cascade residuals at (t, Z) rows."""
    t_jet = Jet.seed(_col(t), "t")
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    z_cols = [Jet.constant(_col(z[:, i])) for i in range(6)]
    outs = _apply_field(field, [t_jet] + z_cols, weights, biases)
    e = [o.value for o in outs]
    de = [o.d1.get("t", 0.0) for o in outs]
    vmax = [
        constants.nominal_rates[i] * (1.0 + constants.sigma_v * _col(z[:, i]))
        for i in range(6)
    ]
    rs = cascade_cleared_residuals(
        e, de, vmax, constants.km, constants.g4, constants.drive
    )
    for r in rs:
        _check_finite(r, "cascade")
    return rs


def residual_batch(problem, field, colloc, weights=None, biases=None):
    """All residual components of ``problem`` at collocation rows."""
    colloc = np.atleast_2d(np.asarray(colloc, dtype=np.float64))
    c = problem.constants
    if problem.id == "decay":
        return [residual_decay(field, colloc[:, 0], colloc[:, 1], weights, biases)]
    if problem.id == "burgers":
        return [
            residual_burgers(
                field, colloc[:, 0], colloc[:, 1], colloc[:, 2], c.nu, weights, biases
            )
        ]
    if problem.id == "cascade":
        return list(
            residual_cascade(field, colloc[:, 0], colloc[:, 1:7], c, weights, biases)
        )
    raise ValueError(f"unknown problem id {problem.id!r}")


# -- limit states ----------------------------------------------------------------


def limit_state_decay(u, u_d=0.5):
    """J = u - u_d; failure iff J < 0."""
    return np.asarray(u, dtype=np.float64) - u_d


def limit_state_cascade(e3p, e3p0):
    """J = e3p - threshold; failure iff J < 0."""
    return np.asarray(e3p, dtype=np.float64) - e3p0


def transition_layer_location(u, lo=-1.0, hi=1.0, n_grid=2001, tol=1e-6):
    """Leftmost zero crossing of a scalar field on [lo, hi] by bisection.

    The field must go from positive to negative somewhere on the interval;
    a 2001-point grid brackets the leftmost crossing, bisection refines the
    bracket below ``tol``.
    """
    x = np.linspace(lo, hi, n_grid)
    vals = np.asarray(u(x), dtype=np.float64).reshape(-1)
    neg = vals < 0.0
    if not neg.any() or neg[0]:
        raise NoRootError("no positive-to-negative crossing on the interval")
    j = int(neg.argmax())
    a, b = float(x[j - 1]), float(x[j])
    while b - a > tol:
        m = 0.5 * (a + b)
        if float(np.asarray(u(np.array([m]))).reshape(-1)[0]) < 0.0:
            b = m
        else:
            a = m
    return 0.5 * (a + b)


def burgers_layer_batch(u_eval, m, lo=-1.0, hi=1.0, n_grid=2001, tol=1e-6):
    """Vectorized transition-layer search for ``m`` fields at once.

    ``u_eval`` maps an (m, k) matrix of x-locations (one row of query points
    per field) to field values of the same shape.  Rows without a
    positive-to-negative crossing yield NaN (failed evaluation, reported
    distinctly from failure events).
    """
    x = np.linspace(lo, hi, n_grid)
    vals = u_eval(np.broadcast_to(x, (m, n_grid)))
    neg = vals < 0.0
    has = neg.any(axis=1)
    first = neg.argmax(axis=1)
    valid = has & (first > 0)
    rows = np.arange(m)
    a = np.where(valid, x[np.maximum(first - 1, 0)], 0.0)
    b = np.where(valid, x[first], 1.0)
    n_iter = int(np.ceil(np.log2((hi - lo) / tol)))
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        vm = u_eval(mid[:, None])[:, 0]
        go_left = vm < 0.0
        b = np.where(go_left, mid, b)
        a = np.where(go_left, a, mid)
        if np.all(b - a <= tol):
            break
    z = 0.5 * (a + b)
    z[~valid] = np.nan
    return z


def surrogate_limit_state(surrogate, problem, threshold=None, t=None, batch=500):
    """Batched limit state J(xi) over the trained surrogate.

    ``threshold`` overrides the configured failure threshold (u_d, z0 or
    e3p0) and ``t`` the evaluation time.  The Burgers evaluator locates the
    transition layer per sample in sub-batches of ``batch`` rows to bound the
    surrogate call size; rows without a layer crossing come back NaN (failed
    evaluations, counted separately by the estimators).
    """
    from .reliability import LimitState

    c = problem.constants
    t_eval = float(c.t_eval if t is None else t)
    if problem.id == "decay":
        u_d = float(c.u_d if threshold is None else threshold)

        def evaluator(z):
            coords = np.column_stack([np.full(z.shape[0], t_eval), z[:, 0]])
            return limit_state_decay(surrogate(coords)[:, 0], u_d)

    elif problem.id == "burgers":
        z0 = float(c.z0 if threshold is None else threshold)

        def evaluator(deltas):
            out = np.empty(deltas.shape[0])
            for lo in range(0, deltas.shape[0], batch):
                block = deltas[lo : lo + batch, 0]
                m = block.size

                def u_eval(xq):
                    k = xq.shape[1]
                    coords = np.column_stack(
                        [
                            xq.ravel(),
                            np.full(m * k, t_eval),
                            np.repeat(block, k),
                        ]
                    )
                    return surrogate(coords)[:, 0].reshape(m, k)

                z = burgers_layer_batch(u_eval, m)
                out[lo : lo + m] = z0 - z
            return out

    elif problem.id == "cascade":
        e3p0 = float(c.e3p0 if threshold is None else threshold)

        def evaluator(z):
            coords = np.column_stack([np.full(z.shape[0], t_eval), z])
            return limit_state_cascade(surrogate(coords)[:, 2], e3p0)

    else:
        raise ValueError(f"unknown problem id {problem.id!r}")
    meta = {"benchmark": problem.id, "t": t_eval, "threshold": threshold}
    return LimitState(evaluator, problem.marginals, name=problem.id, metadata=meta)


def oracle_limit_state(problem, threshold=None, t=None, nx=401, dt=None, batch=2000):
    """Reference limit state backed by the independent solvers.

    Same J conventions as :func:`surrogate_limit_state`, but responses come
    from the closed form (decay), the finite-difference solve (Burgers) or
    the RK4 integration (cascade).
    """
    from .oracles import burgers_fd_solve, cascade_rk4_at, decay_exact
    from .reliability import LimitState

    c = problem.constants
    t_eval = float(c.t_eval if t is None else t)
    if problem.id == "decay":
        u_d = float(c.u_d if threshold is None else threshold)

        def evaluator(z):
            return limit_state_decay(decay_exact(t_eval, z[:, 0], c.u0), u_d)

    elif problem.id == "burgers":
        z0 = float(c.z0 if threshold is None else threshold)

        def evaluator(deltas):
            out = np.empty(deltas.shape[0])
            for lo in range(0, deltas.shape[0], batch):
                block = deltas[lo : lo + batch, 0]
                field = burgers_fd_solve(block, c.nu, nx=nx, t_end=t_eval, dt=dt)
                out[lo : lo + block.size] = z0 - field.zero_crossing()
            return out

    elif problem.id == "cascade":
        e3p0 = float(c.e3p0 if threshold is None else threshold)
        step = 1e-3 if dt is None else float(dt)

        def evaluator(z):
            e3 = cascade_rk4_at(
                z,
                c.nominal_rates,
                (t_eval,),
                sigma_v=c.sigma_v,
                km=c.km,
                g4=c.g4,
                drive=c.drive,
                dt=step,
            )[:, 0]
            return limit_state_cascade(e3, e3p0)

    else:
        raise ValueError(f"unknown problem id {problem.id!r}")
    meta = {"benchmark": problem.id, "t": t_eval, "threshold": threshold, "oracle": True}
    return LimitState(evaluator, problem.marginals, name=f"{problem.id}-oracle", metadata=meta)


def limit_state_burgers(surrogate, delta, z0, t, n_grid=2001, tol=1e-6):
    """J = z0 - z(delta) on the surrogate; failure iff z(delta) > z0.

    A propagated no-root condition raises :class:`NoRootError` (treated by
    the estimators as a failed evaluation, not a failure event).
    """

    def u(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        coords = np.column_stack(
            [x, np.full_like(x, float(t)), np.full_like(x, float(delta))]
        )
        return surrogate(coords)[:, 0]

    z = transition_layer_location(u, n_grid=n_grid, tol=tol)
    return z0 - z
