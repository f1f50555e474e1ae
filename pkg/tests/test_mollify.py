"""Regularized initial data: bump kernel, bounds, mass identity, budget."""

import numpy as np
import pytest

from abpflow.entropy import to_entropy_var
from abpflow.errors import ConfigError, WidthTooLarge
from abpflow.grid import GridSpec, integrate, lp_norm, marginal_rho, total_mass
from abpflow.mollify import (MollifierSpec, bump_kernel_1d,
                             initial_entropy_budget, regularize_initial)

TWO_PI = 2.0 * np.pi


@pytest.fixture
def grid():
    return GridSpec(16, 16, 16)


def smooth_positive_f0(grid):
    X, Y, T = grid.meshgrid()
    return 0.04 * (1.0 + 0.3 * np.cos(X) * np.cos(T) + 0.2 * np.sin(Y))


class TestMollifierSpec:
    def test_rejects_bad_epsilon(self):
        for eps in (0.0, 1.0, -0.1):
            with pytest.raises(ConfigError):
                MollifierSpec(eps)

    def test_rejects_gamma_not_above_2(self):
        with pytest.raises(ConfigError):
            MollifierSpec(0.1, gamma=2.0)

    def test_angular_width_scaling(self):
        spec = MollifierSpec(0.1, gamma=3.0)
        assert spec.spatial_width == pytest.approx(0.1)
        assert spec.angular_width == pytest.approx(0.1**3)


class TestBumpKernel:
    @pytest.mark.parametrize("width", [0.3, 1.0, 2.5])
    def test_unit_mass_and_nonnegative(self, width):
        n = 64
        k = bump_kernel_1d(width, n)
        assert np.all(k >= 0.0)
        assert np.sum(k) * TWO_PI / n == pytest.approx(1.0, abs=1e-12)

    def test_even_symmetry(self):
        k = bump_kernel_1d(0.8, 64)
        assert np.allclose(k[1:], k[1:][::-1], atol=1e-14)

    def test_width_halving_doubles_peak(self):
        n = 512
        wide = bump_kernel_1d(1.0, n)
        narrow = bump_kernel_1d(0.5, n)
        assert np.max(narrow) == pytest.approx(2.0 * np.max(wide), rel=0.02)
        # support halves too
        assert np.count_nonzero(narrow) == pytest.approx(
            np.count_nonzero(wide) / 2, abs=3)

    def test_width_too_large(self):
        with pytest.raises(WidthTooLarge):
            bump_kernel_1d(TWO_PI, 64)


class TestRegularize:
    def test_constant_closed_form(self, grid):
        c, eps = 0.02, 0.1
        f0 = np.full(grid.shape, c)
        fe, _, _ = regularize_initial(grid, f0, MollifierSpec(eps))
        assert np.allclose(fe, eps / (2.0 * TWO_PI) + (1 - eps) * c,
                           rtol=1e-12)

    @pytest.mark.parametrize("eps", [0.1, 0.01])
    def test_bounds_random_admissible(self, grid, eps):
        rng = np.random.default_rng(0)
        for _ in range(5):
            f0 = rng.random(grid.shape)
            rho0 = marginal_rho(grid, f0)
            f0 *= 0.9 / np.max(rho0)
            fe, re, _ = regularize_initial(grid, f0, MollifierSpec(eps))
            assert np.min(fe) >= eps / (2.0 * TWO_PI) - 1e-12
            assert np.min(1.0 - re) >= eps / 2.0 - 1e-12
            assert np.max(1.0 - re) <= 1.0 - eps / 2.0 + 1e-12

    def test_mass_identity(self, grid):
        rng = np.random.default_rng(1)
        f0 = 0.1 * rng.random(grid.shape)
        for eps in (0.1, 0.03):
            fe, _, _ = regularize_initial(grid, f0, MollifierSpec(eps))
            lhs = total_mass(grid, fe)
            rhs = TWO_PI**2 * eps / 2.0 + (1 - eps) * total_mass(grid, f0)
            assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_epsilon_sweep_converges(self, grid):
        f0 = smooth_positive_f0(grid)
        gaps = [lp_norm(grid, regularize_initial(
            grid, f0, MollifierSpec(eps))[0] - f0, 2)
            for eps in (0.1, 0.05, 0.025)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_entropy_var_always_defined(self, grid):
        rng = np.random.default_rng(2)
        f0 = rng.random(grid.shape)
        f0 *= 1.0 / np.max(marginal_rho(grid, f0))  # rho0 touches 1
        fe, re, ue = regularize_initial(grid, f0, MollifierSpec(0.05))
        # must not raise, and must reproduce the returned u
        assert np.allclose(to_entropy_var(grid, fe, re), ue)

    def test_smoothing_damps_moduli(self, grid):
        """Coefficient moduli of the output never exceed the input's."""
        rng = np.random.default_rng(3)
        f0 = 0.02 * (1.0 + 0.5 * rng.random(grid.shape))
        eps = 0.2
        fe, _, _ = regularize_initial(grid, f0, MollifierSpec(eps))
        c_in = np.abs(np.fft.fftn(f0, norm="forward"))
        c_out = np.abs(np.fft.fftn((fe - eps / (2 * TWO_PI)) / (1 - eps),
                                   norm="forward"))
        mask = np.ones(grid.shape, dtype=bool)
        mask[0, 0, 0] = False
        assert np.all(c_out[mask] <= c_in[mask] + 1e-13)


class TestBudget:
    def test_constant_closed_form(self, grid):
        eps = 0.1
        f0 = np.full(grid.shape, 1.0 / (2.0 * TWO_PI))
        fe, re, ue = regularize_initial(grid, f0, MollifierSpec(eps))
        budget = initial_entropy_budget(grid, fe, ue, eps)
        # f0^eps = f0 exactly, so everything is a constant-field closed form
        c = 1.0 / (2.0 * TWO_PI)
        e_exact = TWO_PI**3 * c * np.log(c) + TWO_PI**2 * 0.5 * np.log(0.5)
        u_exact = np.log(c) - np.log(0.5)
        assert budget == pytest.approx(e_exact + eps * TWO_PI**3 * u_exact**2,
                                       rel=1e-12)

    def test_sweep_bounded_and_lipschitz(self, grid):
        f0 = smooth_positive_f0(grid)
        sweep = [0.1, 0.05, 0.025, 0.0125]
        budgets, u_sqs, ents = [], [], []
        for eps in sweep:
            fe, _, ue = regularize_initial(grid, f0, MollifierSpec(eps))
            budgets.append(initial_entropy_budget(grid, fe, ue, eps))
            u_sqs.append(integrate(grid, ue**2))
            ents.append(budgets[-1] - eps * u_sqs[-1])
        budgets = np.array(budgets)
        assert np.all(np.isfinite(budgets))
        # bounded above by a single constant along the sweep
        assert np.max(budgets) <= budgets[0] + 0.1 * (1.0 + abs(budgets[0]))
        # continuity at the natural modulus: the budget differs between
        # adjacent sweep points by at most the change of its eps-linear term
        # plus a small fraction of the entropy scale
        for i in range(len(sweep) - 1):
            bound = 1.1 * (sweep[i] - sweep[i + 1]) * max(u_sqs) \
                + 0.1 * (1.0 + abs(ents[i]))
            assert abs(budgets[i] - budgets[i + 1]) <= bound
