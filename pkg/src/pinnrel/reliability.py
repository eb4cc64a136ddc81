"""Failure-probability estimators over a limit-state callable.

All estimators share the J < 0 failure convention and record the actual
number of limit-state evaluations.  Limit-state evaluators are batched: they
map an (n, d) matrix of realizations to n values of J; NaN entries mark
failed evaluations (counted separately, never as failure events).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .stochastic import (
    from_standard_normal,
    make_rng,
    sample_marginals,
    std_normal_cdf,
    std_normal_quantile,
)

__all__ = [
    "LimitState",
    "ReliabilityEstimate",
    "EvaluationError",
    "reliability_index",
    "relative_error",
    "pf_mcs",
    "form_hlrf",
    "importance_sampling",
    "subset_simulation",
    "threshold_sweep",
    "time_sweep",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("method", "pf", "beta", "n_evals", "cov", "epsilon_vs_ref", "converged")

_MAX_FAILED_FRACTION = 1e-3


class EvaluationError(Exception):
    """Too many limit-state evaluations failed."""


@dataclass
class LimitState:
    """Batched limit-state function with its input distribution."""

    evaluator: object  # callable (n, d) -> (n,), NaN for failed rows
    marginals: tuple
    name: str = ""
    metadata: dict = dc_field(default_factory=dict)

    @property
    def dim(self):
        return len(self.marginals)

    def __call__(self, xi):
        return np.asarray(self.evaluator(np.atleast_2d(xi)), dtype=np.float64)


@dataclass
class ReliabilityEstimate:
    method: str
    pf: float
    beta: float
    n_evals: int
    cov: float = None
    epsilon_vs_ref: float = None
    converged: bool = True
    extras: dict = dc_field(default_factory=dict)

    def with_reference(self, beta_ref):
        self.epsilon_vs_ref = relative_error(self.beta, beta_ref)
        return self

    def csv_row(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return str(v).lower()
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(getattr(self, k)) for k in CSV_COLUMNS]


def reliability_index(pf):
    """beta = Phi^-1(1 - Pf), with +/- infinity sentinels at the endpoints."""
    if not 0.0 <= pf <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    if pf == 0.0:
        return np.inf
    if pf == 1.0:
        return -np.inf
    return float(-std_normal_quantile(pf))


def relative_error(beta, beta_ref):
    """epsilon = |beta_ref - beta| / beta_ref, in percent."""
    if beta_ref == 0.0:
        raise ValueError("reference reliability index must be nonzero")
    return 100.0 * abs(beta_ref - beta) / abs(beta_ref)


def _tally(j_values):
    """(n_failure, n_valid, n_failed_eval) from a J batch."""
    bad = ~np.isfinite(j_values)
    return int(np.sum(j_values < 0.0)), int(np.sum(~bad)), int(np.sum(bad))


def pf_mcs(ls, n, seed, chunk_size=200_000):
    """Crude Monte Carlo: Pf = mean of the failure indicator over n samples."""
    if n < 100:
        raise ValueError("pf_mcs requires n >= 100")
    n_fail = n_valid = n_bad = 0
    done = 0
    stream = 0
    while done < n:
        m = min(chunk_size, n - done)
        xi = sample_marginals(ls.marginals, m, seed, stream=stream)
        f, v, bad = _tally(ls(xi))
        n_fail += f
        n_valid += v
        n_bad += bad
        done += m
        stream += 1
        if n_bad > _MAX_FAILED_FRACTION * n:
            raise EvaluationError(
                f"{n_bad} failed limit-state evaluations out of {done}"
            )
    pf = n_fail / n_valid if n_valid else 0.0
    cov = float(np.sqrt((1.0 - pf) / (n_valid * pf))) if pf > 0 else None
    est = ReliabilityEstimate("mcs", pf, reliability_index(pf), n, cov=cov)
    est.extras["failed_evaluations"] = n_bad
    if pf == 0.0:
        est.extras["pf_upper_bound_95"] = 3.0 / n  # one-sided 95% bound
    return est


def form_hlrf(ls, start=None, tol=1e-8, max_iter=100, fd_step=1e-5):
    """First-order reliability method via the HL-RF iteration.

    Works in standard-normal space with central finite-difference gradients.
    Returns the estimate (MPP stored in ``extras['mpp']``); a non-converged
    search returns the best iterate with ``converged=False``.
    """
    d = ls.dim
    u = np.zeros(d) if start is None else np.asarray(start, dtype=np.float64).copy()
    n_evals = 0

    def g_batch(us):
        nonlocal n_evals
        n_evals += us.shape[0]
        return ls(from_standard_normal(us, ls.marginals))

    g0 = float(g_batch(np.zeros((1, d)))[0])
    converged = False
    for _ in range(max_iter):
        pts = np.vstack([u[None, :] + fd_step * np.eye(d),
                         u[None, :] - fd_step * np.eye(d),
                         u[None, :]])
        vals = g_batch(pts)
        grad = (vals[:d] - vals[d : 2 * d]) / (2.0 * fd_step)
        g_u = float(vals[-1])
        norm2 = float(np.dot(grad, grad))
        if norm2 < 1e-24:
            break
        u_next = ((np.dot(grad, u) - g_u) / norm2) * grad
        if np.linalg.norm(u_next - u) < tol:
            u = u_next
            converged = True
            break
        u = u_next
    beta = float(np.linalg.norm(u)) * (1.0 if g0 > 0 else -1.0)
    pf = float(std_normal_cdf(-beta))
    est = ReliabilityEstimate("form", pf, beta, n_evals, converged=converged)
    est.extras["mpp"] = u.copy()
    return est


def importance_sampling(ls, center, n, seed):
    """Standard-normal density recentered at ``center`` (typically the MPP)."""
    center = np.asarray(center, dtype=np.float64)
    rng = make_rng(seed, stream=1)
    u = center[None, :] + rng.standard_normal((n, center.size))
    j = ls(from_standard_normal(u, ls.marginals))
    bad = ~np.isfinite(j)
    if np.sum(bad) > _MAX_FAILED_FRACTION * n:
        raise EvaluationError(f"{int(np.sum(bad))} failed evaluations out of {n}")
    log_w = -0.5 * np.sum(u * u, axis=1) + 0.5 * np.sum((u - center) ** 2, axis=1)
    w = np.exp(log_w)
    ind = (j < 0.0) & ~bad
    terms = np.where(ind, w, 0.0)
    n_valid = int(np.sum(~bad))
    pf = float(np.sum(terms) / n_valid)
    var = float(np.sum((terms - pf) ** 2)) / (n_valid * (n_valid - 1))
    cov = float(np.sqrt(var) / pf) if pf > 0 else None
    est = ReliabilityEstimate("is", pf, reliability_index(pf), n, cov=cov)
    wf = w[ind]
    ess = float(np.sum(wf)) ** 2 / float(np.sum(wf * wf)) if wf.size else 0.0
    est.extras["effective_sample_size"] = ess
    if ess < 10.0:
        est.converged = False
    return est


def subset_simulation(ls, p0=0.1, n_per_level=1000, seed=0, max_levels=20,
                      proposal_step=1.0):
    """Subset simulation with component-wise Metropolis chains in u-space."""
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie in (0, 1)")
    if n_per_level < 100:
        raise ValueError("n_per_level must be at least 100")
    d = ls.dim
    rng = make_rng(seed, stream=2)
    n_evals = 0

    def g_batch(us):
        nonlocal n_evals
        n_evals += us.shape[0]
        return ls(from_standard_normal(us, ls.marginals))

    u = rng.standard_normal((n_per_level, d))
    j = g_batch(u)
    log_p = 0.0
    threshold_prev = np.inf
    converged = True
    cov_sq = 0.0
    level = 0
    while True:
        threshold = float(np.quantile(j, p0))
        if threshold <= 0.0:
            frac = float(np.mean(j < 0.0))
            pf = float(np.exp(log_p)) * frac
            if frac > 0:
                cov_sq += (1.0 - frac) / (frac * n_per_level)
            break
        if threshold >= threshold_prev or level >= max_levels:
            converged = False
            frac = float(np.mean(j < 0.0))
            pf = float(np.exp(log_p)) * frac
            break
        threshold_prev = threshold
        log_p += np.log(p0)
        cov_sq += (1.0 - p0) / (p0 * n_per_level)

        order = np.argsort(j)
        n_seeds = max(1, int(round(p0 * n_per_level)))
        seeds = u[order[:n_seeds]].copy()
        seeds_j = j[order[:n_seeds]].copy()
        steps = int(np.ceil(n_per_level / n_seeds))
        new_u, new_j = [], []
        cur_u, cur_j = seeds, seeds_j
        for _ in range(steps):
            prop = cur_u + rng.uniform(-proposal_step, proposal_step, size=cur_u.shape)
            # component-wise accept against the standard-normal target
            log_ratio = 0.5 * (cur_u**2 - prop**2)
            keep = np.log(rng.uniform(size=cur_u.shape)) < log_ratio
            cand = np.where(keep, prop, cur_u)
            cand_j = g_batch(cand)
            ok = np.isfinite(cand_j) & (cand_j <= threshold)
            cur_u = np.where(ok[:, None], cand, cur_u)
            cur_j = np.where(ok, cand_j, cur_j)
            new_u.append(cur_u.copy())
            new_j.append(cur_j.copy())
        u = np.vstack(new_u)[:n_per_level]
        j = np.concatenate(new_j)[:n_per_level]
        level += 1

    est = ReliabilityEstimate(
        "ss", pf, reliability_index(pf), n_evals,
        cov=float(np.sqrt(cov_sq)) if pf > 0 else None, converged=converged,
    )
    est.extras["levels"] = level
    return est


def _estimate_from_j(j, n):
    f, v, bad = _tally(j)
    if bad > _MAX_FAILED_FRACTION * n:
        raise EvaluationError(f"{bad} failed limit-state evaluations out of {n}")
    pf = f / v if v else 0.0
    cov = float(np.sqrt((1.0 - pf) / (v * pf))) if pf > 0 else None
    est = ReliabilityEstimate("mcs", pf, reliability_index(pf), n, cov=cov)
    est.extras["failed_evaluations"] = bad
    if pf == 0.0:
        est.extras["pf_upper_bound_95"] = 3.0 / n
    return est


def threshold_sweep(family, thresholds, n, seed):
    """MCS estimates over a threshold grid with common random numbers.

    ``family`` maps a threshold to a LimitState; all thresholds see the same
    sample set, so nested failure sets give monotone estimates.
    """
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("threshold list must be non-empty")
    if sorted(thresholds) != thresholds:
        raise ValueError("thresholds must be sorted ascending")
    first = family(thresholds[0])
    xi = sample_marginals(first.marginals, n, seed)
    rows = []
    for th in thresholds:
        ls = family(th)
        rows.append((th, _estimate_from_j(ls(xi), n)))
    return rows


def time_sweep(family, times, n, seed, horizon=None):
    """MCS estimates at several time instants with common random numbers."""
    times = list(times)
    if not times:
        raise ValueError("time list must be non-empty")
    first = family(times[0])
    xi = sample_marginals(first.marginals, n, seed)
    rows = []
    for t in times:
        ls = family(t)
        est = _estimate_from_j(ls(xi), n)
        if horizon is not None and t > horizon:
            est.extras["extrapolation_warning"] = True
        rows.append((t, est))
    return rows
