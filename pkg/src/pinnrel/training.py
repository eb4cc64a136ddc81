"""Physics-informed loss assembly and the two-stage optimizer schedule.

Training minimizes the mean squared PDE residual over a Latin-hypercube
collocation set with RMSprop (full batch) followed by L-BFGS with a strong
Wolfe line search.  Hard-constraint mode (default) needs no data terms; soft
mode adds mean-squared boundary/initial mismatches to the loss.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff
from .network import NetworkParams, Surrogate, init_params, net_apply
from .problems import residual_batch
from .stochastic import latin_hypercube, make_rng

__all__ = [
    "TrainConfig",
    "TrainReport",
    "DivergenceError",
    "make_surrogate",
    "physics_loss",
    "soft_losses",
    "make_objective",
    "rmsprop_run",
    "lbfgs_run",
    "train",
]


class DivergenceError(Exception):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class TrainConfig:
    """Optimizer schedule and collocation settings."""

    hidden_layers: tuple = (50, 50)
    n_collocation: int = 4000
    lhs_seed: int = 0
    init_seed: int = 0
    rmsprop_iters: int = 10_000
    rmsprop_lr: float = 1e-3
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-8
    lbfgs_max_iters: int = 50_000
    lbfgs_memory: int = 10
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    grad_tol: float = 1e-9
    loss_tol: float = 1e-12
    mode: str = "hard"
    n_boundary: int = 0
    n_initial: int = 0
    history_every: int = 100

    def __post_init__(self):
        if self.n_collocation < 1 or any(h < 1 for h in self.hidden_layers):
            raise ValueError("counts must be positive")
        if self.grad_tol <= 0 or self.loss_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.mode not in ("hard", "soft"):
            raise ValueError("mode must be 'hard' or 'soft'")
        if self.mode == "soft" and (self.n_boundary < 1 or self.n_initial < 1):
            raise ValueError("soft mode requires boundary and initial point counts")
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)


@dataclass
class TrainReport:
    final_loss: float
    loss_history: list  # (stage, iteration, loss) samples
    stage_iterations: dict
    wall_time: float
    terminal_condition: str


def make_surrogate(problem, params):
    """Wrap trained parameters with the problem's hard-constraint transform."""
    constants = {}
    if problem.id == "decay":
        constants["u0"] = problem.constants.u0
    elif problem.id == "burgers":
        constants["t_scale"] = 1.0 / problem.constants.t_eval
    return Surrogate(params=params, transform=problem.id, constants=constants)


def _mean_square(r):
    if isinstance(r, autodiff.Tensor):
        return (r * r).mean()
    if isinstance(r, float):  # structurally zero residual
        return r * r
    return float(np.mean(np.square(r)))


def physics_loss(params, problem, colloc, weights=None, biases=None, field=None):
    """Mean squared residual, summed over residual components.

    With plain parameters this is a fast numpy evaluation; passing Tensor
    ``weights``/``biases`` produces a tape node instead.  ``field`` overrides
    the surrogate (for oracle test doubles).
    """
    colloc = np.atleast_2d(np.asarray(colloc, dtype=np.float64))
    if colloc.shape[0] == 0:
        raise ValueError("collocation set must be non-empty")
    surr = field if field is not None else make_surrogate(problem, params)
    residuals = residual_batch(problem, surr, colloc, weights, biases)
    total = None
    for r in residuals:
        ms = _mean_square(r)
        total = ms if total is None else total + ms
    return total


def _data_mismatch(field, cols, targets, weights, biases):
    outs = field.apply(cols, weights, biases) if isinstance(field, Surrogate) else field(*cols)
    outs = outs if isinstance(outs, (list, tuple)) else [outs]
    total = None
    for out, tgt in zip(outs, targets):
        value = out.value if isinstance(out, autodiff.Jet) else out
        diff = value - np.asarray(tgt, dtype=np.float64).reshape(-1, 1)
        ms = _mean_square(diff)
        total = ms if total is None else total + ms
    return total


def soft_losses(field, boundary, initial, weights=None, biases=None):
    """(L_b, L_i): mean squared boundary / initial mismatches.

    ``boundary`` and ``initial`` are (columns, targets) pairs where columns
    follow the problem's coordinate convention and targets has one vector per
    output component.
    """
    for name, data in (("boundary", boundary), ("initial", initial)):
        cols, _ = data
        if len(cols) == 0 or np.asarray(cols[0]).size == 0:
            raise ValueError(f"soft mode requires non-empty {name} points")
    lb = _data_mismatch(field, boundary[0], boundary[1], weights, biases)
    li = _data_mismatch(field, initial[0], initial[1], weights, biases)
    return lb, li


class _RawField:
    """Unconstrained network as the response field (soft-constraint mode)."""

    def __init__(self, params, problem):
        self.params = params
        self.problem = problem

    def apply(self, cols, weights=None, biases=None):
        w = self.params.weights if weights is None else weights
        b = self.params.biases if biases is None else biases
        from .network import _stack_columns  # local import, shared helper

        if self.problem.id == "burgers":
            t_scale = 1.0 / self.problem.constants.t_eval
            cols = [cols[0], cols[1] * t_scale, *cols[2:]]
        out = net_apply(w, b, _stack_columns(cols))
        if self.problem.output_arity == 1:
            return [out]
        if isinstance(out, autodiff.Jet):
            return [out.col(i) for i in range(self.problem.output_arity)]
        return [out[:, [i]] for i in range(self.problem.output_arity)]

    def __call__(self, coords):
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        cols = [coords[:, [j]] for j in range(coords.shape[1])]
        return np.hstack(self.apply(cols))


def soft_condition_points(problem, config):
    """Boundary/initial coordinate columns and targets for soft mode."""
    c = problem.constants
    rng = make_rng(config.lhs_seed, stream=7)
    if problem.id == "decay":
        z = rng.uniform(*problem.domain.bounds[1], size=config.n_initial)
        initial = ([np.zeros((config.n_initial, 1)), z.reshape(-1, 1)], [np.full(config.n_initial, c.u0)])
        # no spatial boundary for the ODE; reuse the initial condition
        return initial, initial
    if problem.id == "burgers":
        nb = config.n_boundary
        tb = rng.uniform(0.0, c.t_eval, size=nb)
        db = rng.uniform(0.0, c.e, size=nb)
        side = rng.integers(0, 2, size=nb)
        xb = np.where(side == 1, 1.0, -1.0)
        ub = np.where(side == 1, -1.0, 1.0 + db)
        boundary = ([xb.reshape(-1, 1), tb.reshape(-1, 1), db.reshape(-1, 1)], [ub])
        ni = config.n_initial
        xi = rng.uniform(-1.0, 1.0, size=ni)
        di = rng.uniform(0.0, c.e, size=ni)
        ui = -1.0 + (1.0 - xi) * (1.0 + di / 2.0)
        initial = ([xi.reshape(-1, 1), np.zeros((ni, 1)), di.reshape(-1, 1)], [ui])
        return boundary, initial
    # cascade: initial condition only
    ni = config.n_initial
    z = rng.uniform(-1.0, 1.0, size=(ni, 6))
    cols = [np.zeros((ni, 1))] + [z[:, [i]] for i in range(6)]
    targets = [np.zeros(ni), np.ones(ni), np.zeros(ni)]
    initial = (cols, targets)
    return initial, initial


def make_objective(problem, config, colloc, template_params, chunk_size=10_000):
    """Closure theta -> (loss, grad) over the flat parameter vector.

    Large collocation sets are evaluated in chunks of ``chunk_size`` rows with
    the per-chunk gradients accumulated (weights proportional to chunk size,
    so the result equals the full-batch mean-squared loss exactly); this
    bounds peak tape memory.
    """
    layer_sizes = template_params.layer_sizes
    hard = config.mode == "hard"
    if hard:
        field_for = lambda p: make_surrogate(problem, p)
        extras = None
    else:
        field_for = lambda p: _RawField(p, problem)
        extras = soft_condition_points(problem, config)
    colloc = np.atleast_2d(np.asarray(colloc, dtype=np.float64))
    n_total = colloc.shape[0]
    n_chunks = max(1, -(-n_total // chunk_size))
    chunks = np.array_split(colloc, n_chunks)

    def objective(theta):
        params = NetworkParams.unflatten(layer_sizes, theta)
        leaves = params.leaves()
        field = field_for(params)
        value = 0.0
        grad = np.zeros(theta.size)
        for i, chunk in enumerate(chunks):
            weight = chunk.shape[0] / n_total

            def tape_loss(tensors, chunk=chunk, first=(i == 0)):
                w = tensors[0::2]
                b = tensors[1::2]
                loss = physics_loss(params, problem, chunk, w, b, field=field)
                if not hard and first:
                    lb, li = soft_losses(field, extras[0], extras[1], w, b)
                    # data terms enter once, unscaled by the chunk weight
                    loss = loss + (lb + li) * (1.0 / weight)
                return loss

            v, grads = autodiff.value_and_grad(tape_loss, leaves)
            value += weight * v
            grad += weight * np.concatenate([g.ravel() for g in grads])
        return value, grad

    return objective


# -- optimizers ----------------------------------------------------------------


def rmsprop_run(objective, theta0, config):
    """Full-batch RMSprop for the configured iteration count."""
    theta = np.asarray(theta0, dtype=np.float64).copy()
    acc = np.zeros_like(theta)
    history = []
    loss = None
    for it in range(config.rmsprop_iters):
        loss, grad = objective(theta)
        if not np.isfinite(loss) or loss > 1e12:
            raise DivergenceError(f"RMSprop diverged at iteration {it}", iteration=it)
        if it % config.history_every == 0:
            history.append(("rmsprop", it, loss))
        acc = config.rmsprop_rho * acc + (1.0 - config.rmsprop_rho) * grad * grad
        theta = theta - config.rmsprop_lr * grad / (np.sqrt(acc) + config.rmsprop_eps)
    if config.rmsprop_iters > 0:
        loss, _ = objective(theta)
        history.append(("rmsprop", config.rmsprop_iters, loss))
    return theta, history


def _strong_wolfe(objective, theta, d, f0, g0, c1, c2, alpha0=1.0, max_iter=25):
    """Strong Wolfe line search (bracket + zoom with bisection fallback).

    Returns (alpha, f, g, n_evals) or None on failure.
    """
    dphi0 = float(np.dot(g0, d))
    if dphi0 >= 0.0:
        return None

    def phi(alpha):
        f, g = objective(theta + alpha * d)
        return f, g, float(np.dot(g, d))

    evals = 0
    alpha_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    alpha = alpha0
    alpha_max = 1e10
    result = None
    for i in range(max_iter):
        f, g, dphi = phi(alpha)
        evals += 1
        if (f > f0 + c1 * alpha * dphi0) or (i > 0 and f >= f_prev):
            result = _zoom(phi, alpha_prev, alpha, f_prev, f, dphi_prev,
                           f0, dphi0, c1, c2)
            break
        if abs(dphi) <= -c2 * dphi0:
            return alpha, f, g, evals
        if dphi >= 0.0:
            result = _zoom(phi, alpha, alpha_prev, f, f_prev, dphi,
                           f0, dphi0, c1, c2)
            break
        alpha_prev, f_prev, dphi_prev = alpha, f, dphi
        alpha = min(2.0 * alpha, alpha_max)
    if result is None:
        return None
    alpha, f, g, zoom_evals = result
    return alpha, f, g, evals + zoom_evals


def _zoom(phi, lo, hi, f_lo, f_hi, dphi_lo, f0, dphi0, c1, c2, max_iter=30):
    evals = 0
    for _ in range(max_iter):
        # cubic-ish interpolation with bisection safeguard
        denom = f_hi - f_lo - dphi_lo * (hi - lo)
        if abs(denom) > 1e-300:
            alpha = lo - 0.5 * dphi_lo * (hi - lo) ** 2 / denom
        else:
            alpha = 0.5 * (lo + hi)
        width = abs(hi - lo)
        if not np.isfinite(alpha) or alpha <= min(lo, hi) + 0.1 * width or alpha >= max(lo, hi) - 0.1 * width:
            alpha = 0.5 * (lo + hi)
        f, g, dphi = phi(alpha)
        evals += 1
        if (f > f0 + c1 * alpha * dphi0) or (f >= f_lo):
            hi, f_hi = alpha, f
        else:
            if abs(dphi) <= -c2 * dphi0:
                return alpha, f, g, evals
            if dphi * (hi - lo) >= 0.0:
                hi, f_hi = lo, f_lo
            lo, f_lo, dphi_lo = alpha, f, dphi
        if abs(hi - lo) < 1e-16:
            break
    return None


def lbfgs_run(objective, theta0, config):
    """Limited-memory BFGS with strong Wolfe line search.

    Stops on gradient norm, loss delta, iteration cap, or line-search failure
    (the last returns the best iterate with the condition flagged, not an
    exception).  Returns (theta, history, condition, iterations).
    """
    theta = np.asarray(theta0, dtype=np.float64).copy()
    f, g = objective(theta)
    history = [("lbfgs", 0, f)]
    s_list, y_list, rho_list = [], [], []
    best_theta, best_f = theta.copy(), f
    condition = "max-iterations"
    it = 0
    for it in range(1, config.lbfgs_max_iters + 1):
        gnorm = float(np.max(np.abs(g)))
        if gnorm < config.grad_tol:
            condition = "gradient-norm"
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
            a = rho * np.dot(s, q)
            alphas.append(a)
            q -= a * y
        if y_list:
            gamma = np.dot(s_list[-1], y_list[-1]) / np.dot(y_list[-1], y_list[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
            b = rho * np.dot(y, q)
            q += (a - b) * s
        d = -q
        if np.dot(g, d) >= 0.0:
            s_list, y_list, rho_list = [], [], []
            d = -g
        alpha0 = 1.0 if y_list else min(1.0, 1.0 / max(1e-12, float(np.sum(np.abs(g)))))
        ls = _strong_wolfe(objective, theta, d, f, g, config.wolfe_c1,
                           config.wolfe_c2, alpha0=alpha0)
        if ls is None:
            condition = "line-search-failure"
            break
        alpha, f_new, g_new, _ = ls
        s = alpha * d
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > config.lbfgs_memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        theta = theta + s
        delta = abs(f - f_new)
        f, g = f_new, g_new
        if f < best_f:
            best_f, best_theta = f, theta.copy()
        if it % config.history_every == 0:
            history.append(("lbfgs", it, f))
        if delta < config.loss_tol * max(1.0, abs(f)):
            condition = "loss-delta"
            break
    history.append(("lbfgs", it, f))
    if best_f < f:
        theta, f = best_theta, best_f
    return theta, history, condition, it


def train(problem, config):
    """LHS collocation -> init -> RMSprop -> L-BFGS; returns (Surrogate, TrainReport)."""
    t_start = time.perf_counter()
    colloc = latin_hypercube(config.n_collocation, problem.domain, config.lhs_seed)
    layer_sizes = (problem.domain.dim,) + config.hidden_layers + (problem.output_arity,)
    params0 = init_params(layer_sizes, config.init_seed)
    objective = make_objective(problem, config, colloc, params0)

    theta = params0.flatten()
    loss0, _ = objective(theta)
    if not np.isfinite(loss0):
        raise DivergenceError("loss is non-finite at initialization", iteration=0)

    theta, hist_rms = rmsprop_run(objective, theta, config)
    theta, hist_lbfgs, condition, lbfgs_iters = lbfgs_run(objective, theta, config)

    final_loss, _ = objective(theta)
    params = NetworkParams.unflatten(layer_sizes, theta)
    report = TrainReport(
        final_loss=float(final_loss),
        loss_history=hist_rms + hist_lbfgs,
        stage_iterations={"rmsprop": config.rmsprop_iters, "lbfgs": lbfgs_iters},
        wall_time=time.perf_counter() - t_start,
        terminal_condition=condition,
    )
    return make_surrogate(problem, params), report
