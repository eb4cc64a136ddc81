"""Independent ground-truth solvers used for verification, never training.

* ``decay_exact``       closed-form u0 * exp(-Z t)
* ``burgers_fd_solve``  2nd-order central differences in space, explicit RK2
                        (Heun) in time, Dirichlet ends enforced every stage
* ``cascade_rk4``       classical fixed-step RK4 on the three-enzyme system

The Burgers and cascade solvers are vectorized over realizations: passing a
batch of deltas / Z-vectors integrates all trajectories at once, which is what
makes oracle-side Monte Carlo affordable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridField",
    "Trajectory",
    "OracleError",
    "decay_exact",
    "burgers_fd_solve",
    "burgers_stable_dt",
    "cascade_rhs",
    "cascade_rk4",
    "cascade_rk4_at",
]


class OracleError(Exception):
    """Blow-up / stability failure inside a reference solver."""


@dataclass
class GridField:
    """1-D field sampled on a strictly increasing grid at one time instant."""

    x: np.ndarray
    t: float
    values: np.ndarray  # (nx,) or (batch, nx)

    def __post_init__(self):
        if not np.all(np.diff(self.x) > 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise OracleError("non-finite field values")

    def zero_crossing(self):
        """Leftmost sign-change location(s) by linear interpolation."""
        u = np.atleast_2d(self.values)
        neg = u < 0.0
        first = neg.argmax(axis=1)
        if np.any(~neg.any(axis=1)) or np.any(first == 0):
            raise ValueError("field has no sign change on the grid interior")
        i = first - 1
        rows = np.arange(u.shape[0])
        u0, u1 = u[rows, i], u[rows, first]
        z = self.x[i] + (self.x[first] - self.x[i]) * u0 / (u0 - u1)
        return z if self.values.ndim > 1 else float(z[0])


@dataclass
class Trajectory:
    """Concentration trajectory: times plus (nt, 3) or (nt, batch, 3) states."""

    t: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if self.t[0] != 0.0:
            raise ValueError("trajectory must start at t = 0")
        if np.any(self.states < -0.01) or np.any(self.states > 1.01):
            raise OracleError("state left the physical band [-0.01, 1.01]")

    def at(self, t_query):
        """State at a stored time instant."""
        idx = int(np.argmin(np.abs(self.t - t_query)))
        if abs(float(self.t[idx]) - float(t_query)) > 1e-9:
            raise ValueError(f"time {t_query} was not stored")
        return self.states[idx]


def decay_exact(t, z, u0=1.0):
    """Exact decay response u0 * exp(-Z t)."""
    return u0 * np.exp(-np.asarray(z, dtype=np.float64) * np.asarray(t, dtype=np.float64))


def burgers_stable_dt(dx, nu, u_max):
    """Explicit step bound: 0.2 * min(advective, diffusive) limits."""
    return 0.2 * min(dx / u_max, dx * dx / (2.0 * nu))


def burgers_fd_solve(delta, nu, nx=401, t_end=10.0, dt=None):
    """Viscous Burgers on [-1, 1] with u(-1) = 1 + delta, u(1) = -1.

    ``delta`` may be a scalar or a 1-D batch; the returned field is then
    (batch, nx).  Initial condition is the linear interpolant of the
    boundary values.
    """
    if nx < 201:
        raise ValueError("nx must be at least 201")
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    delta_arr = np.atleast_1d(np.asarray(delta, dtype=np.float64))
    scalar = np.isscalar(delta) or np.ndim(delta) == 0

    x = np.linspace(-1.0, 1.0, nx)
    dx = x[1] - x[0]
    u_max = max(1.0, float(np.max(1.0 + delta_arr)))
    dt_max = burgers_stable_dt(dx, nu, u_max)
    if dt is None:
        dt = dt_max
    elif dt > dt_max * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} violates stability bound {dt_max}")
    n_steps = int(np.ceil(t_end / dt))
    dt = t_end / n_steps

    u = -1.0 + np.outer(1.0 + delta_arr / 2.0, 1.0 - x)
    left = 1.0 + delta_arr
    u[:, 0] = left
    u[:, -1] = -1.0

    def rhs(v):
        dv = np.zeros_like(v)
        ux = (v[:, 2:] - v[:, :-2]) / (2.0 * dx)
        uxx = (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / (dx * dx)
        dv[:, 1:-1] = -v[:, 1:-1] * ux + nu * uxx
        return dv

    for _ in range(n_steps):
        k1 = rhs(u)
        mid = u + dt * k1
        mid[:, 0] = left
        mid[:, -1] = -1.0
        u = u + 0.5 * dt * (k1 + rhs(mid))
        u[:, 0] = left
        u[:, -1] = -1.0
        if not np.all(np.isfinite(u[:, 1:-1])):
            raise OracleError("Burgers solve blew up (non-finite state)")

    return GridField(x=x, t=float(t_end), values=u[0] if scalar else u)


def cascade_rhs(state, vmax, km, g4=0.0, drive=1.0):
    """Right-hand side of the enzyme cascade ODEs (denominator form).

    ``state``: (..., 3); ``vmax``: (..., 6); ``km``: scalar or (6,).
    """
    e1, e2, e3 = state[..., 0], state[..., 1], state[..., 2]
    km = np.broadcast_to(np.asarray(km, dtype=np.float64), (6,))
    v = [vmax[..., i] for i in range(6)]
    de1 = drive / (1.0 + g4 * e3) * v[0] * (1.0 - e1) / (km[0] + (1.0 - e1)) - v[1] * e1 / (
        km[1] + e1
    )
    de2 = v[2] * e1 * (1.0 - e2) / (km[2] + (1.0 - e2)) - v[3] * e2 / (km[3] + e2)
    de3 = v[4] * e2 * (1.0 - e3) / (km[4] + (1.0 - e3)) - v[5] * e3 / (km[5] + e3)
    return np.stack([de1, de2, de3], axis=-1)


def _cascade_vmax(z, nominal_rates, sigma_v):
    z = np.asarray(z, dtype=np.float64)
    nominal = np.asarray(nominal_rates, dtype=np.float64)
    if nominal.shape != (6,):
        raise ValueError("six nominal rates are required")
    return nominal * (1.0 + sigma_v * z)


def cascade_rk4(z, nominal_rates, sigma_v=0.1, km=0.2, g4=0.0, drive=1.0,
                dt=1e-3, t_end=5.0, save_every=1):
    """Fixed-step RK4 trajectory from (e1, e2, e3)(0) = (0, 1, 0).

    ``z`` is one 6-vector or a (batch, 6) array.  States are stored every
    ``save_every`` steps (plus the final step).
    """
    z = np.asarray(z, dtype=np.float64)
    scalar = z.ndim == 1
    z2 = np.atleast_2d(z)
    if z2.shape[1] != 6:
        raise ValueError("z must have six components")
    vmax = _cascade_vmax(z2, nominal_rates, sigma_v)

    n_steps = int(np.ceil(t_end / dt))
    dt = t_end / n_steps
    state = np.zeros((z2.shape[0], 3))
    state[:, 1] = 1.0

    times = [0.0]
    saved = [state.copy()]
    for step in range(1, n_steps + 1):
        k1 = cascade_rhs(state, vmax, km, g4, drive)
        k2 = cascade_rhs(state + 0.5 * dt * k1, vmax, km, g4, drive)
        k3 = cascade_rhs(state + 0.5 * dt * k2, vmax, km, g4, drive)
        k4 = cascade_rhs(state + dt * k3, vmax, km, g4, drive)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(state < -0.01) or np.any(state > 1.01):
            raise OracleError(f"integrator left physical band at step {step}")
        if step % save_every == 0 or step == n_steps:
            times.append(step * dt)
            saved.append(state.copy())

    states = np.stack(saved)
    if scalar:
        states = states[:, 0, :]
    return Trajectory(t=np.array(times), states=states)


def cascade_rk4_at(z, nominal_rates, times, sigma_v=0.1, km=0.2, g4=0.0,
                   drive=1.0, dt=1e-3):
    """Batch e3p values at the requested times: (batch, len(times)).

    Memory-light companion to :func:`cascade_rk4` for oracle Monte Carlo:
    only the requested snapshots are kept.
    """
    times = [float(t) for t in times]
    t_end = max(times)
    z2 = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z2.shape[1] != 6:
        raise ValueError("z must have six components")
    if t_end == 0.0:
        return np.zeros((z2.shape[0], len(times)))
    n_steps = int(np.ceil(t_end / dt))
    dt = t_end / n_steps
    want = {}
    for j, t in enumerate(times):
        i = int(round(t / dt))
        if abs(i * dt - t) > 1e-9:
            raise ValueError(f"time {t} is not representable with dt={dt}")
        want.setdefault(i, []).append(j)

    vmax = _cascade_vmax(z2, nominal_rates, sigma_v)
    state = np.zeros((z2.shape[0], 3))
    state[:, 1] = 1.0
    out = np.empty((z2.shape[0], len(times)))
    for j in want.get(0, []):
        out[:, j] = 0.0
    for step in range(1, n_steps + 1):
        k1 = cascade_rhs(state, vmax, km, g4, drive)
        k2 = cascade_rhs(state + 0.5 * dt * k1, vmax, km, g4, drive)
        k3 = cascade_rhs(state + 0.5 * dt * k2, vmax, km, g4, drive)
        k4 = cascade_rhs(state + dt * k3, vmax, km, g4, drive)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(state < -0.01) or np.any(state > 1.01):
            raise OracleError(f"integrator left physical band at step {step}")
        for j in want.get(step, []):
            out[:, j] = state[:, 2]
    return out
