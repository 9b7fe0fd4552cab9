"""Grid, Fourier multipliers and the Littlewood-Paley partition."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulerbench.errors import NegativePowerOnMean, NonZeroMean, OutOfBand
from eulerbench.spectral import (Grid, ScalarField, VectorField, bessel_potential, curl,
                                 divergence, fractional_power, gradient, l2_norm,
                                 l2_norm_spectral, laplacian, lp_decompose, lp_low, lp_profile,
                                 lp_project, random_band_limited, solve_neg_laplacian)

from oracles import fd8_derivative


@pytest.fixture(scope="module")
def grid():
    return Grid(32)


def _random(grid, seed, band=6.0, mean=0.0):
    return ScalarField(grid, random_band_limited(grid, np.random.default_rng(seed), band) + mean)


class TestGrid:
    @pytest.mark.parametrize("n", [8, 16, 24, 48, 64])
    def test_accepts_smooth_even_sizes(self, n):
        assert Grid(n).shape == (n, n, n)

    @pytest.mark.parametrize("n", [6, 14, 15, 22])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValueError):
            Grid(n)

    def test_rejects_non_positive_length(self):
        with pytest.raises(ValueError):
            Grid(16, length=0.0)

    def test_dealias_mask_is_two_thirds_cube(self):
        g = Grid(12)
        m = np.fft.fftfreq(12, 1 / 12)
        kept = m[np.abs(m) < 4]
        assert g.dealias_mask.sum() == len(kept) ** 2 * 4

    def test_lp_range(self, grid):
        assert grid.lp_max == int(np.ceil(np.log2(np.sqrt(3) * 16)))
        grid.check_shell(0)
        for bad in (-1, grid.lp_max + 1):
            with pytest.raises(OutOfBand):
                grid.check_shell(bad)


class TestDerivatives:
    def test_gradient_matches_finite_difference_oracle(self):
        g = Grid(64)
        x = g.coordinates
        f = ScalarField(g, np.sin(x[0]) * np.cos(2 * x[1]))
        grad = gradient(f).array
        for axis in range(3):
            ref = fd8_derivative(f.values, axis, g.dx)
            assert np.max(np.abs(grad[axis] - ref)) < 1e-8

    def test_gradient_exact_on_trig_polynomial(self, grid):
        x = grid.coordinates
        f = ScalarField(grid, np.sin(3 * x[0]) * np.cos(x[2]))
        grad = gradient(f).array
        assert np.allclose(grad[0], 3 * np.cos(3 * x[0]) * np.cos(x[2]), atol=1e-12)
        assert np.allclose(grad[2], -np.sin(3 * x[0]) * np.sin(x[2]), atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_div_curl_vanishes(self, grid, seed):
        u = VectorField.from_array(grid, random_band_limited(grid, np.random.default_rng(seed), 8,
                                                             components=3))
        assert l2_norm(divergence(curl(u))) < 1e-12 * l2_norm(u)

    def test_curl_grad_vanishes(self, grid):
        f = _random(grid, 3)
        assert l2_norm(curl(gradient(f))) < 1e-12 * l2_norm(f)

    def test_laplacian_eigenfunction(self, grid):
        x = grid.coordinates
        f = ScalarField(grid, np.cos(2 * x[0] + x[1]))
        assert np.allclose(laplacian(f).values, -5 * f.values, atol=1e-11)


class TestInverseAndPowers:
    def test_neg_laplacian_inverts(self, grid):
        f = _random(grid, 1)
        u = solve_neg_laplacian(f)
        assert l2_norm(-laplacian(u) - f) < 1e-12 * l2_norm(f)

    def test_neg_laplacian_rejects_mean(self, grid):
        with pytest.raises(NonZeroMean):
            solve_neg_laplacian(_random(grid, 1, mean=0.5))

    def test_negative_power_rejects_mean(self, grid):
        with pytest.raises(NegativePowerOnMean):
            fractional_power(_random(grid, 1, mean=0.5), -1.0)

    def test_positive_power_ignores_mean(self, grid):
        f = _random(grid, 1, mean=0.5)
        assert abs(fractional_power(f, 1.0).mean) < 1e-14

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(-2.0, 2.0), b=st.floats(-2.0, 2.0))
    def test_lambda_semigroup(self, a, b):
        g = Grid(16)
        f = _random(g, 11)
        lhs = fractional_power(fractional_power(f, a), b)
        rhs = fractional_power(f, a + b)
        assert l2_norm(lhs - rhs) <= 1e-12 * max(l2_norm(rhs), 1e-300)

    def test_lambda_two_is_minus_laplacian(self, grid):
        f = _random(grid, 2)
        assert l2_norm(fractional_power(f, 2.0) + laplacian(f)) < 1e-12 * l2_norm(laplacian(f))

    def test_bessel_potential_on_mode(self, grid):
        x = grid.coordinates
        f = ScalarField(grid, np.cos(3 * x[1]))
        assert np.allclose(bessel_potential(f, 2.0).values, 10 * f.values, atol=1e-12)


class TestLittlewoodPaley:
    def test_profile_is_one_then_zero(self):
        s = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
        assert np.allclose(lp_profile(s), [1, 1, 1, 0, 0])

    @pytest.mark.parametrize("seed", range(4))
    def test_resummation(self, grid, seed):
        f = _random(grid, seed, band=14)
        low, blocks = lp_decompose(f)
        total = low + sum(blocks[1:], blocks[0])
        assert l2_norm(total - f) < 1e-12 * l2_norm(f)

    @pytest.mark.parametrize("j", [0, 1, 2, 3])
    def test_mode_at_shell_centre_is_fixed(self, grid, j):
        x = grid.coordinates
        f = ScalarField(grid, np.cos(2 ** j * x[0]))
        assert np.allclose(lp_project(f, j).values, f.values, atol=1e-13)

    def test_low_block_zero_is_mean(self, grid):
        f = _random(grid, 5, mean=0.3)
        assert np.allclose(lp_low(f, 0).values, 0.3, atol=1e-14)

    def test_out_of_band(self, grid):
        f = _random(grid, 5)
        with pytest.raises(OutOfBand):
            lp_project(f, grid.lp_max + 1)
        with pytest.raises(OutOfBand):
            lp_low(f, -1)


class TestNormsAndResampling:
    @pytest.mark.parametrize("seed", range(4))
    def test_parseval(self, grid, seed):
        f = _random(grid, seed, band=12)
        assert abs(l2_norm(f) - l2_norm_spectral(f)) < 1e-12 * l2_norm(f)

    def test_resample_preserves_band_limited_field(self, grid):
        f = _random(grid, 9)
        fine = grid.resample(f.values, 64)
        assert np.allclose(fine[::2, ::2, ::2], f.values, atol=1e-13)

    def test_random_fields_are_seeded(self, grid):
        a = random_band_limited(grid, np.random.default_rng(4), 5)
        b = random_band_limited(grid, np.random.default_rng(4), 5)
        assert np.array_equal(a, b)
        assert abs(np.max(np.abs(a)) - 1.0) < 1e-15
