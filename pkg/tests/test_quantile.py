import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm, truncnorm

from sdg_gan.metrics import ks_statistic
from sdg_gan.prng import Prng
from sdg_gan.quantile import (
    DensitySpec,
    DiscreteDist,
    NormalizationError,
    bimodal_mixture,
    build_continuous_quantile,
    build_discrete_quantile,
    compose_prior,
    fit_mlp_quantile,
    sample_product,
    truncated_normal,
)


class TestDiscrete:
    def test_breakpoints(self):
        q = build_discrete_quantile(DiscreteDist((-1.0, 0.0, 2.0), (0.2, 0.5, 0.3)))
        np.testing.assert_array_equal(q([0.1, 0.3, 0.69, 0.71, 0.999]), [-1.0, 0.0, 0.0, 2.0, 2.0])

    def test_tie_goes_to_upper_atom(self):
        q = build_discrete_quantile(DiscreteDist((1.0, 2.0), (0.5, 0.5)))
        assert q(0.5) == 2.0

    def test_frequencies(self):
        probs = (0.1, 0.6, 0.3)
        q = build_discrete_quantile(DiscreteDist((0.0, 1.0, 2.0), probs))
        x = q.sample(Prng(0), 100_000)
        freq = np.bincount(x.astype(int), minlength=3) / x.size
        np.testing.assert_allclose(freq, probs, atol=0.005)

    @pytest.mark.parametrize(
        "atoms, probs",
        [((), ()), ((1.0, 2.0), (0.5,)), ((1.0, 2.0), (0.7, 0.7)), ((2.0, 1.0), (0.5, 0.5)), ((1.0,), (-1.0,))],
    )
    def test_validation(self, atoms, probs):
        with pytest.raises(ValueError):
            DiscreteDist(atoms, probs)


class TestContinuous:
    def test_uniform_is_identity_at_knots(self):
        q = build_continuous_quantile(DensitySpec(0.0, 1.0, lambda x: np.ones_like(x)))
        np.testing.assert_allclose(q(q.z), q.z, atol=1e-9)
        np.testing.assert_allclose(q.x, q.z, atol=1e-9)

    def test_linear_density_gives_square_root(self):
        # p(x) = 2x integrates exactly under the trapezoid rule: F(x) = x^2
        q = build_continuous_quantile(DensitySpec(0.0, 1.0, lambda x: 2 * x))
        np.testing.assert_allclose(q(q.z), np.sqrt(q.z), atol=1e-12)
        z = np.linspace(0.01, 0.99, 500)
        np.testing.assert_allclose(q(z), np.sqrt(z), atol=1e-4)

    def test_truncated_normal_ks(self):
        density = truncated_normal(-2.0, 2.0)
        x = build_continuous_quantile(density).sample(Prng(1), 100_000)
        assert ks_statistic(x, lambda t: truncnorm.cdf(t, -2, 2)) < 0.01

    def test_truncated_normal_quantiles(self):
        q = build_continuous_quantile(truncated_normal(-2.0, 2.0))
        z = np.linspace(0.001, 0.999, 999)
        np.testing.assert_allclose(q(z), truncnorm.ppf(z, -2, 2), atol=1e-5)

    def test_unnormalized_rejected(self):
        with pytest.raises(NormalizationError) as info:
            build_continuous_quantile(DensitySpec(0.0, 1.0, lambda x: 2.0 * np.ones_like(x)))
        assert info.value.mass == pytest.approx(2.0)

    def test_normalized_constructor(self):
        q = build_continuous_quantile(DensitySpec.normalized(0.0, 2.0, lambda x: 5.0 * np.ones_like(x)))
        np.testing.assert_allclose(q(0.25), 0.5, atol=1e-12)

    def test_zero_mass_cell_rejected(self):
        spec = DensitySpec.normalized(0.0, 3.0, lambda x: (np.abs(x - 1.5) > 0.5).astype(float))
        with pytest.raises(ValueError):
            build_continuous_quantile(spec)

    @pytest.mark.parametrize("lo, hi", [(1.0, 1.0), (2.0, 1.0)])
    def test_bad_support(self, lo, hi):
        with pytest.raises(ValueError):
            DensitySpec(lo, hi, lambda x: x)

    def test_negative_density(self):
        with pytest.raises(ValueError):
            DensitySpec(-1.0, 1.0, lambda x: x).cdf_table()

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-3, 3), st.floats(0.2, 2.0), st.lists(st.floats(0, 1), min_size=2, max_size=30))
    def test_monotone_and_within_support(self, mu, sd, zs):
        q = build_continuous_quantile(truncated_normal(-4.0, 4.0, mu, sd, grid_n=512))
        z = np.sort(np.array(zs))
        x = q(z)
        assert np.all(np.diff(x) >= 0)
        assert np.all((x >= -4.0) & (x <= 4.0))


class TestComposition:
    def test_uniform_prior_matches_direct_map(self):
        target = bimodal_mixture()
        direct = build_continuous_quantile(target)
        composed = compose_prior(target, DensitySpec(0.0, 1.0, lambda x: np.ones_like(x)))
        # exact at the prior's knots, interpolation error elsewhere
        np.testing.assert_allclose(composed(composed.z), direct(composed.z), atol=1e-12)
        z = np.linspace(0.0, 1.0, 1001)
        np.testing.assert_allclose(composed(z), direct(z), atol=1e-3)

    def test_normal_prior_to_shifted_normal(self):
        # F_X^-1(F_Z(z)) for Z ~ N(0,1) on [-4,4] and X the same law shifted by 1 is z + 1
        composed = compose_prior(truncated_normal(-3.0, 5.0, 1.0, 1.0), truncated_normal(-4.0, 4.0))
        z = np.linspace(-3.5, 3.5, 101)
        np.testing.assert_allclose(composed(z), z + 1.0, atol=1e-4)

    def test_pushforward_law(self):
        composed = compose_prior(truncated_normal(-2.0, 2.0), truncated_normal(-4.0, 4.0))
        z = np.clip(Prng(4).gaussian(100_000), -4, 4)
        assert ks_statistic(composed(z), lambda t: truncnorm.cdf(t, -2, 2)) < 0.01


class TestProduct:
    def test_columns_follow_their_maps(self):
        maps = [build_continuous_quantile(truncated_normal(-2.0, 2.0)), build_discrete_quantile(DiscreteDist((0.0, 1.0), (0.3, 0.7)))]
        x = sample_product(maps, Prng(5), 50_000)
        assert x.shape == (50_000, 2)
        assert ks_statistic(x[:, 0], lambda t: truncnorm.cdf(t, -2, 2)) < 0.01
        assert x[:, 1].mean() == pytest.approx(0.7, abs=0.01)
        assert abs(np.corrcoef(x.T)[0, 1]) < 0.02

    def test_needs_a_map(self):
        with pytest.raises(ValueError):
            sample_product([], Prng(0), 10)


class TestRegression:
    def test_fit_improves_on_init(self):
        q = build_continuous_quantile(bimodal_mixture())
        short = fit_mlp_quantile(q, 16, Prng(0), steps=10, n_eval=10_000)
        longer = fit_mlp_quantile(q, 16, Prng(0), steps=1500, n_eval=10_000)
        assert longer.mse < 0.5 * short.mse
        assert longer.js < short.js

    def test_rejects_bad_width(self):
        q = build_continuous_quantile(bimodal_mixture())
        with pytest.raises(ValueError):
            fit_mlp_quantile(q, 0, Prng(0), steps=1)
