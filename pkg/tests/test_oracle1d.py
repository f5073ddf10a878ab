import math

import numpy as np
import pytest
import sympy

from common.errors import InvalidParameterError, SampleParseError
from features.feature_map import make_feature_map
from oracle.grid_density import GridDensity, linear_tilt_density, random_smooth_density, uniform_grid
from oracle.oracle1d import (
    check_bounds,
    kernel_comparison,
    linearization_ratio,
    pde_residual,
    sobolev_1d,
    transport_potential,
    wasserstein2_1d,
)
from validation.acceptance import cosine_density


def uniform_pair(size=1001):
    grid = uniform_grid(0.0, 1.0, size)
    return GridDensity.create(grid, np.ones(size), np.ones(size))


def test_tilt_constant_is_one_thirtieth():
    x = sympy.symbols("x")
    assert sympy.integrate((x**2 - x) ** 2, (x, 0, 1)) == sympy.Rational(1, 30)


def test_identical_densities():
    density = uniform_pair()
    assert sobolev_1d(density) == 0.0
    assert wasserstein2_1d(density) == 0.0
    bounds = check_bounds(density)
    assert bounds.lower_ok and bounds.upper_ok


def test_tilt_closed_form(tilt_density):
    assert sobolev_1d(tilt_density) == pytest.approx(0.5 * math.sqrt(1.0 / 30.0), abs=1e-6)
    assert sobolev_1d(tilt_density) == pytest.approx(0.0912871, abs=1e-6)


def test_weighting_makes_the_discrepancy_asymmetric(tilt_density):
    assert sobolev_1d(tilt_density) != pytest.approx(sobolev_1d(tilt_density.swapped()), rel=1e-6)


def test_mixing_scales_linearly(tilt_density):
    base = sobolev_1d(tilt_density)
    for eps in (0.1, 0.37, 0.8):
        assert sobolev_1d(tilt_density.mixed(eps)) == pytest.approx(eps * base, rel=1e-8)
    with pytest.raises(InvalidParameterError):
        tilt_density.mixed(1.5)


def test_source_below_lower_bound_is_rejected():
    grid = uniform_grid(0.0, 1.0, 101)
    density = GridDensity.unchecked(grid, np.ones(101), 0.5 + grid, lower_bound_a=0.8)
    with pytest.raises(InvalidParameterError):
        sobolev_1d(density)
    vanishing = GridDensity.unchecked(grid, np.ones(101), 2.0 * grid)
    with pytest.raises(InvalidParameterError):
        sobolev_1d(vanishing)


def test_transport_potential(tilt_density):
    potential, velocity = transport_potential(tilt_density)
    assert potential[0] == 0.0
    assert velocity[0] == 0.0
    assert abs(velocity[-1]) <= 1e-12
    # u' = -(F_p - F_q) / q = -eps (x^2 - x) for the tilt
    grid = tilt_density.grid
    np.testing.assert_allclose(velocity, -0.5 * (grid**2 - grid), atol=1e-9)


class TestPdeResidual:
    def test_zero_for_identical_densities(self):
        density = uniform_pair()
        assert pde_residual(density, np.zeros(density.size)) == 0.0

    def test_reconstructed_solution(self, tilt_density):
        potential, _ = transport_potential(tilt_density)
        assert pde_residual(tilt_density, potential) <= 10.0 / tilt_density.size

    def test_random_potential_is_worse(self, tilt_density, rng):
        potential, _ = transport_potential(tilt_density)
        noise = rng.normal(scale=1e-3, size=tilt_density.size)
        assert pde_residual(tilt_density, potential + noise) > pde_residual(tilt_density, potential)

    def test_converges_under_refinement(self):
        residuals = []
        for size in (1000, 2000, 4000):
            density = cosine_density(size)
            potential, _ = transport_potential(density)
            residuals.append(pde_residual(density, potential))
        assert residuals[1] <= 0.55 * residuals[0]
        assert residuals[2] <= 0.55 * residuals[1]

    def test_rejects_bad_inputs(self):
        tiny = uniform_pair(2)
        with pytest.raises(InvalidParameterError):
            pde_residual(tiny, np.zeros(2))
        density = uniform_pair(11)
        with pytest.raises(InvalidParameterError):
            pde_residual(density, np.zeros(10))
        grid = np.array([0.0, 0.1, 0.5, 1.0])
        uneven = GridDensity.unchecked(grid, np.ones(4), np.ones(4))
        with pytest.raises(InvalidParameterError):
            pde_residual(uneven, np.zeros(4))


class TestWasserstein:
    def test_translation(self):
        grid = uniform_grid(0.0, 1.4, 70001)
        q_values = ((grid >= 0.0) & (grid <= 1.0)).astype(float)
        p_values = ((grid >= 0.2) & (grid <= 1.2)).astype(float)
        density = GridDensity.unchecked(grid, p_values, q_values)
        assert wasserstein2_1d(density) == pytest.approx(0.2, abs=1e-4)

    def test_matches_sorted_sample_coupling(self, tilt_density):
        rng = np.random.default_rng(0)
        levels = np.sort(rng.uniform(size=10**5))
        # Closed-form quantiles: F_p(x) = x + 0.5 (x^2 - x), F_q(x) = x
        quantiles_p = -0.5 + np.sqrt(0.25 + 2.0 * levels)
        sorted_coupling = math.sqrt(np.mean((quantiles_p - levels) ** 2))
        assert wasserstein2_1d(tilt_density) == pytest.approx(sorted_coupling, abs=1e-3)

    def test_interior_gap_is_rejected(self):
        grid = uniform_grid(0.0, 1.0, 101)
        p_values = np.where(np.abs(grid - 0.5) < 0.1, 0.0, 1.25)
        density = GridDensity.unchecked(grid, p_values, np.ones(101))
        with pytest.raises(InvalidParameterError, match="invertible"):
            wasserstein2_1d(density)

    def test_refinement_changes_shrink(self):
        values = [wasserstein2_1d(cosine_density(size)) for size in (501, 1001, 2001)]
        assert abs(values[2] - values[1]) <= 4.0 * abs(values[1] - values[0]) + 1e-12


class TestBounds:
    @pytest.mark.parametrize("eps", [0.5, 0.9])
    def test_tilt_instances(self, eps):
        density = linear_tilt_density(10000, eps)
        assert density.lower_bound_a == pytest.approx(1.0 - eps)
        assert density.upper_bound_b == pytest.approx(1.0 + eps)
        bounds = check_bounds(density)
        assert bounds.lower_ok and bounds.upper_ok
        ratio = math.sqrt(density.lower_bound_a / density.upper_bound_b)
        assert ratio * bounds.s <= bounds.w2 + 1e-4
        assert bounds.w2 <= 2.0 * bounds.s + 1e-4

    def test_random_smooth_densities(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            density = random_smooth_density(2001, rng, floor=0.1)
            assert density.lower_bound_a >= 0.1 - 1e-12
            bounds = check_bounds(density)
            assert bounds.lower_ok and bounds.upper_ok

    def test_serializes_flags(self, tilt_density):
        document = check_bounds(tilt_density).to_dict()
        assert set(document) == {"s", "w2", "lower_ok", "upper_ok"}


class TestKernelComparison:
    def test_kernel_value_below_exact_discrepancy(self, tilt_density):
        feature_map = make_feature_map(d=1, m=256, bandwidth=1.0, window_scale=10.0, seed=0)
        comparison = kernel_comparison(feature_map, tilt_density, 1e-6)
        assert comparison.kernel_value <= comparison.sobolev + 1e-3
        assert comparison.lam == 1e-6

    def test_comparison_equality(self, tilt_density):
        feature_map = make_feature_map(d=1, m=64, bandwidth=1.0, window_scale=10.0, seed=0)
        comparison = kernel_comparison(feature_map, tilt_density, 1e-3)
        assert abs(comparison.comparison_residual) <= 1e-3 * comparison.sobolev**2
        assert comparison.gradient_gap >= 0.0


def test_linearization_ratio_tends_to_one(tilt_density):
    close = abs(linearization_ratio(tilt_density, 0.02) - 1.0)
    far = abs(linearization_ratio(tilt_density, 0.5) - 1.0)
    assert close <= 0.05
    assert close < far
    with pytest.raises(InvalidParameterError):
        linearization_ratio(uniform_pair(), 0.1)


class TestGridDensity:
    def test_auto_bounds(self):
        grid = uniform_grid(0.0, 1.0, 101)
        density = GridDensity.create(grid, 1.0 + 0.2 * (2.0 * grid - 1.0), np.ones(101))
        assert density.lower_bound_a == pytest.approx(0.8)
        assert density.upper_bound_b == pytest.approx(1.2)
        assert density.size == 101

    def test_uniform_pair_allows_equal_bounds(self):
        density = uniform_pair()
        assert density.lower_bound_a == density.upper_bound_b == 1.0

    @pytest.mark.parametrize(
        "p_values, a, b, message",
        [
            (lambda g: 2.0 * np.ones_like(g), None, None, "normalized"),
            (lambda g: 2.0 * g, None, None, "positive"),
            (lambda g: 1.0 + 0.5 * (2.0 * g - 1.0), 0.6, None, "outside"),
            (lambda g: np.ones_like(g), 1.0, 0.5, "a <= b"),
        ],
    )
    def test_invalid_tables(self, p_values, a, b, message):
        grid = uniform_grid(0.0, 1.0, 101)
        with pytest.raises(InvalidParameterError, match=message):
            GridDensity.create(grid, p_values(grid), np.ones(101), a, b)

    def test_negative_values_rejected(self):
        grid = uniform_grid(0.0, 1.0, 3)
        with pytest.raises(InvalidParameterError):
            GridDensity.create(grid, np.array([2.0, -0.5, 2.0]), np.ones(3))

    def test_tables_are_immutable(self, tilt_density):
        with pytest.raises(ValueError):
            tilt_density.q_values[0] = 2.0

    def test_from_functions(self):
        grid = uniform_grid(0.0, 1.0, 201)
        density = GridDensity.from_functions(grid, lambda x: 1.0 + 0.5 * np.cos(np.pi * x), np.ones_like)
        np.testing.assert_allclose(density.p_values, 1.0 + 0.5 * np.cos(np.pi * grid))
        assert density.lower_bound_a == pytest.approx(0.5)
        assert density.upper_bound_b == pytest.approx(1.5)

    def test_csv_round_trip(self, tmp_path):
        grid = uniform_grid(0.0, 1.0, 11)
        lines = ["x,p,q"] + [f"{x!r},{1.0 + 0.5 * (2 * x - 1)!r},1.0" for x in grid.tolist()]
        path = tmp_path / "density.csv"
        path.write_text("\n".join(lines) + "\n")
        density = GridDensity.from_csv(path)
        np.testing.assert_array_equal(density.grid, grid)
        assert density.lower_bound_a == pytest.approx(0.5)

    def test_csv_errors(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.0,1.0,1.0\n0.5,1.0\n1.0,1.0,1.0\n")
        with pytest.raises(SampleParseError) as excinfo:
            GridDensity.from_csv(path)
        assert excinfo.value.line_number == 2
        with pytest.raises(SampleParseError):
            GridDensity.from_csv(tmp_path / "missing.csv")

    def test_random_smooth_density_properties(self):
        density = random_smooth_density(501, np.random.default_rng(3), floor=0.2)
        assert density.p_values.min() >= 0.2 - 1e-12
        assert density.q_values.min() >= 0.2 - 1e-12
        with pytest.raises(InvalidParameterError):
            random_smooth_density(501, np.random.default_rng(3), floor=1.5)
