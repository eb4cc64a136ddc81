"""Probability plumbing: marginals, normal CDF/quantile, LHS, u-space maps.

Random streams are counter-based (Philox) and splittable per (seed, stream)
so independent estimator chunks are reproducible and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "Marginal",
    "DomainBox",
    "make_rng",
    "std_normal_cdf",
    "std_normal_quantile",
    "std_normal_pdf",
    "latin_hypercube",
    "sample_marginals",
    "to_standard_normal",
    "from_standard_normal",
]


def make_rng(seed, stream=0):
    """Deterministic generator for (seed, stream)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def std_normal_cdf(x):
    """Standard-normal CDF (abs error < 1e-12)."""
    return ndtr(x)


def std_normal_quantile(p):
    """Inverse standard-normal CDF; domain error outside (0, 1)."""
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("quantile argument must lie strictly inside (0, 1)")
    return ndtri(p)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Marginal:
    """A 1-D input distribution: normal(mu, sigma) or uniform(a, b)."""

    kind: str
    a: float
    b: float

    @classmethod
    def normal(cls, mu, sigma):
        if sigma <= 0:
            raise ValueError("normal marginal requires sigma > 0")
        return cls("normal", float(mu), float(sigma))

    @classmethod
    def uniform(cls, lo, hi):
        if not lo < hi:
            raise ValueError("uniform marginal requires lower < upper")
        return cls("uniform", float(lo), float(hi))

    @property
    def mean(self):
        return self.a if self.kind == "normal" else 0.5 * (self.a + self.b)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "normal":
            return ndtr((x - self.a) / self.b)
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)

    def quantile(self, p):
        if self.kind == "normal":
            return self.a + self.b * std_normal_quantile(p)
        p = np.asarray(p, dtype=np.float64)
        return self.a + (self.b - self.a) * p

    def sample(self, rng, n):
        if self.kind == "normal":
            return rng.normal(self.a, self.b, size=n)
        return rng.uniform(self.a, self.b, size=n)

    def in_support(self, x):
        if self.kind == "normal":
            return np.isfinite(x)
        return (np.asarray(x) >= self.a) & (np.asarray(x) <= self.b)

    def collocation_interval(self, k_sigma=5.0):
        """Bounded interval for LHS collocation (normals boxed to mu +/- 5 sigma)."""
        if self.kind == "normal":
            return (self.a - k_sigma * self.b, self.a + k_sigma * self.b)
        return (self.a, self.b)


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box of closed per-dimension intervals."""

    bounds: tuple

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"invalid interval [{lo}, {hi}]")
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self):
        return np.array([hi for _, hi in self.bounds])


def latin_hypercube(n, box, seed):
    """n LHS points in ``box``: one point per equal-width stratum per dim."""
    if n < 1:
        raise ValueError("latin_hypercube requires n >= 1")
    rng = make_rng(seed)
    d = box.dim
    pts = np.empty((n, d))
    for j in range(d):
        strata = (rng.permutation(n) + rng.uniform(size=n)) / n
        lo, hi = box.bounds[j]
        pts[:, j] = lo + (hi - lo) * strata
    return pts

def sample_marginals(marginals, n, seed, stream=0):
    """n i.i.d. joint samples from independent marginals, (n, d) array."""
    if n < 1:
        raise ValueError("sample_marginals requires n >= 1")
    rng = make_rng(seed, stream)
    return np.column_stack([m.sample(rng, n) for m in marginals])


def to_standard_normal(xi, marginals):
    """Iso-probabilistic map to u-space: u_i = Phi^-1(F_i(xi_i))."""
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    if xi.shape[1] != len(marginals):
        raise ValueError("dimension mismatch between point and marginals")
    u = np.empty_like(xi)
    for j, m in enumerate(marginals):
        col = xi[:, j]
        if not np.all(m.in_support(col)):
            raise ValueError(f"value outside support of marginal {j}")
        if m.kind == "normal":
            u[:, j] = (col - m.a) / m.b
        else:
            p = (col - m.a) / (m.b - m.a)
            # clip away exact endpoints; measure-zero under the marginal
            p = np.clip(p, 1e-16, 1.0 - 1e-16)
            u[:, j] = ndtri(p)
    return u if u.shape[0] > 1 else u[0]


def from_standard_normal(u, marginals):
    """Inverse of :func:`to_standard_normal`."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if u.shape[1] != len(marginals):
        raise ValueError("dimension mismatch between point and marginals")
    xi = np.empty_like(u)
    for j, m in enumerate(marginals):
        if m.kind == "normal":
            xi[:, j] = m.a + m.b * u[:, j]
        else:
            xi[:, j] = m.a + (m.b - m.a) * ndtr(u[:, j])
    return xi if xi.shape[0] > 1 else xi[0]
