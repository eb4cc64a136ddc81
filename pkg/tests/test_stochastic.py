"""Probability plumbing: CDF/quantile, marginals, LHS, iso-probabilistic maps."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pinnrel.stochastic import (
    DomainBox,
    Marginal,
    from_standard_normal,
    latin_hypercube,
    make_rng,
    sample_marginals,
    std_normal_cdf,
    std_normal_quantile,
    to_standard_normal,
)


class TestStdNormal:
    def test_cdf_at_zero(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_cdf_at_table_beta(self):
        assert std_normal_cdf(2.6932) == pytest.approx(0.996461, abs=1e-6)

    def test_cdf_symmetry(self):
        x = np.random.default_rng(0).normal(size=1000) * 3
        np.testing.assert_allclose(std_normal_cdf(x) + std_normal_cdf(-x), 1.0, atol=1e-14)

    def test_quantile_at_half(self):
        assert std_normal_quantile(0.5) == 0.0

    def test_quantile_at_table_value(self):
        assert std_normal_quantile(0.996461) == pytest.approx(2.6932, abs=1e-3)

    def test_roundtrip(self):
        p = np.random.default_rng(1).uniform(1e-8, 1 - 1e-8, size=1000)
        np.testing.assert_allclose(std_normal_cdf(std_normal_quantile(p)), p, atol=1e-9)


class TestMarginal:
    def test_normal_validation(self):
        with pytest.raises(ValueError):
            Marginal.normal(0.0, -1.0)

    def test_uniform_validation(self):
        with pytest.raises(ValueError):
            Marginal.uniform(1.0, 0.0)

    def test_normal_median_maps_to_zero(self):
        m = Marginal.normal(-2.0, 1.0)
        assert to_standard_normal(np.array([[-2.0]]), [m])[0] == pytest.approx(0.0, abs=1e-12)

    def test_uniform_median_maps_to_zero(self):
        m = Marginal.uniform(0.0, 0.1)
        assert to_standard_normal(np.array([[0.05]]), [m])[0] == pytest.approx(0.0, abs=1e-9)

    @given(st.floats(-0.9, 0.9))
    def test_transform_roundtrip_uniform(self, frac):
        m = Marginal.uniform(-1.0, 1.0)
        xi = np.array([[frac]])
        u = to_standard_normal(xi, [m])
        back = np.atleast_1d(from_standard_normal(u, [m]))
        assert back[0] == pytest.approx(frac, abs=1e-9)

    def test_transform_roundtrip_batch(self):
        ms = (Marginal.normal(-2.0, 1.0), Marginal.uniform(0.0, 0.1))
        rng = np.random.default_rng(5)
        xi = np.column_stack([rng.normal(-2, 1, 1000), rng.uniform(1e-4, 0.1 - 1e-4, 1000)])
        back = from_standard_normal(to_standard_normal(xi, ms), ms)
        np.testing.assert_allclose(back, xi, atol=1e-9)

    def test_sampling_moments(self):
        m = Marginal.normal(-2.0, 1.0)
        x = sample_marginals([m], 10**6, seed=0)[:, 0]
        assert np.mean(x) == pytest.approx(-2.0, abs=0.005)
        assert np.std(x) == pytest.approx(1.0, abs=0.005)

    def test_uniform_support(self):
        m = Marginal.uniform(0.0, 0.1)
        x = sample_marginals([m], 10000, seed=1)[:, 0]
        assert np.all((x >= 0.0) & (x <= 0.1))

    def test_six_dim_independence(self):
        ms = tuple(Marginal.uniform(-1, 1) for _ in range(6))
        x = sample_marginals(ms, 10**5, seed=2)
        corr = np.corrcoef(x.T)
        off = corr[~np.eye(6, dtype=bool)]
        assert np.max(np.abs(off)) < 0.01


class TestLatinHypercube:
    def test_one_dim_stratification(self):
        box = DomainBox(((0.0, 1.0),))
        pts = latin_hypercube(4, box, seed=0)[:, 0]
        strata = np.floor(pts * 4).astype(int)
        assert sorted(strata) == [0, 1, 2, 3]

    def test_three_dim_stratification(self):
        box = DomainBox(((0.0, 1.0), (-1.0, 1.0), (5.0, 6.0)))
        n = 1000
        pts = latin_hypercube(n, box, seed=3)
        for j, (lo, hi) in enumerate(box.bounds):
            u = (pts[:, j] - lo) / (hi - lo)
            counts = np.bincount(np.floor(u * n).astype(int), minlength=n)
            assert np.all(counts == 1)

    def test_deterministic(self):
        box = DomainBox(((0.0, 1.0), (0.0, 2.0)))
        a = latin_hypercube(50, box, seed=9)
        b = latin_hypercube(50, box, seed=9)
        np.testing.assert_array_equal(a, b)

    def test_seeds_differ(self):
        box = DomainBox(((0.0, 1.0),))
        assert not np.array_equal(
            latin_hypercube(50, box, seed=1), latin_hypercube(50, box, seed=2)
        )


class TestRngStreams:
    def test_streams_are_independent(self):
        a = make_rng(0, stream=0).normal(size=5)
        b = make_rng(0, stream=1).normal(size=5)
        assert not np.array_equal(a, b)

    def test_reproducible(self):
        np.testing.assert_array_equal(
            make_rng(7, stream=3).normal(size=5), make_rng(7, stream=3).normal(size=5)
        )


class TestCollocationInterval:
    def test_normal_interval_is_mu_pm_5sigma(self):
        m = Marginal.normal(-2.0, 1.0)
        assert m.collocation_interval() == (-7.0, 3.0)

    def test_uniform_interval_is_support(self):
        m = Marginal.uniform(0.0, 0.1)
        assert m.collocation_interval() == (0.0, 0.1)
