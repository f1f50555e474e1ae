"""Entropy dictionary: transforms, functionals, Hessian, Gajewski distance."""

import numpy as np
import pytest

from abpflow.entropy import (conjugate, dissipation, entropy, entropy_upsilon,
                             from_entropy_var, from_entropy_var_parts,
                             gajewski_distance, hessian_apply, mobility,
                             to_entropy_var)
from abpflow.errors import DegenerateState, NonPositiveDelta
from abpflow.grid import GridSpec, integrate, lp_norm, marginal_rho
from abpflow.params import ModelParams

TWO_PI = 2.0 * np.pi


@pytest.fixture
def grid():
    return GridSpec(12, 12, 12)


def admissible_pair(grid, rng, scale=0.5):
    """Random strictly admissible (f, rho) with rho bounded away from 1."""
    f = 0.2 + rng.random(grid.shape)
    rho = marginal_rho(grid, f)
    f *= scale / np.max(rho)
    return f, marginal_rho(grid, f)


class TestTransforms:
    def test_constant_example(self, grid):
        f = np.full(grid.shape, 1.0 / (2.0 * TWO_PI))
        rho = marginal_rho(grid, f)
        u = to_entropy_var(grid, f, rho)
        assert np.allclose(u, np.log(1.0 / TWO_PI), atol=1e-14)

    def test_roundtrip_from_f(self, grid):
        rng = np.random.default_rng(0)
        f, rho = admissible_pair(grid, rng)
        u = to_entropy_var(grid, f, rho)
        f2, rho2 = from_entropy_var(grid, u)
        assert np.max(np.abs(f2 - f)) <= 1e-12 * np.max(f)
        assert np.max(np.abs(rho2 - rho)) <= 1e-12

    def test_roundtrip_from_u(self, grid):
        rng = np.random.default_rng(1)
        u = rng.standard_normal(grid.shape)
        f, rho = from_entropy_var(grid, u)
        u2 = to_entropy_var(grid, f, rho)
        assert np.max(np.abs(u2 - u)) <= 1e-12 * (1 + np.max(np.abs(u)))

    def test_degenerate_input(self, grid):
        f = np.full(grid.shape, 0.01)
        f[0, 0, 0] = 0.0
        with pytest.raises(DegenerateState):
            to_entropy_var(grid, f, marginal_rho(grid, f))

    def test_u_zero_closed_form(self, grid):
        f, rho = from_entropy_var(grid, np.zeros(grid.shape))
        assert np.allclose(f, 1.0 / (1.0 + TWO_PI), atol=1e-14)
        assert np.allclose(rho, TWO_PI / (1.0 + TWO_PI), atol=1e-14)

    def test_rho_monotone_in_constant_u(self, grid):
        rhos = []
        for c in (-2.0, 0.0, 2.0, 10.0, 50.0):
            _, rho = from_entropy_var(grid, np.full(grid.shape, c))
            expected = TWO_PI * np.exp(c) / (1.0 + TWO_PI * np.exp(c))
            assert rho[0, 0] == pytest.approx(expected, rel=1e-12)
            rhos.append(rho[0, 0])
        assert np.all(np.diff(rhos) > 0)

    def test_extreme_u_stays_finite(self, grid):
        rng = np.random.default_rng(2)
        u = rng.choice([-500.0, 500.0], size=grid.shape) \
            + rng.standard_normal(grid.shape)
        f, rho, one_minus_rho = from_entropy_var_parts(grid, u)
        assert np.all(np.isfinite(f)) and np.all(np.isfinite(rho))
        assert np.all(f >= 0.0) and np.all(rho <= 1.0)
        # the separately returned 1-rho is the strictly positive quantity
        assert np.all(one_minus_rho > 0.0)

    def test_moderate_u_strict_bounds(self, grid):
        rng = np.random.default_rng(3)
        u = 8.0 * rng.standard_normal(grid.shape)
        f, rho = from_entropy_var(grid, u)
        assert np.all(f > 0.0)
        assert np.all(rho < 1.0) and np.all(rho > 0.0)


class TestFunctionals:
    def test_constant_entropy_closed_form(self, grid):
        f = np.full(grid.shape, 1.0 / (2.0 * TWO_PI))
        c = 1.0 / (2.0 * TWO_PI)
        expected_upsilon = TWO_PI**3 * (c * np.log(c) + 0.5 * np.log(0.5))
        assert entropy_upsilon(grid, f) == pytest.approx(expected_upsilon,
                                                         rel=1e-12)
        expected = TWO_PI**3 * c * np.log(c) + TWO_PI**2 * 0.5 * np.log(0.5)
        assert entropy(grid, f) == pytest.approx(expected, rel=1e-12)

    def test_saturated_crowding_term_vanishes(self, grid):
        f = np.full(grid.shape, 1.0 / TWO_PI)  # rho = 1 exactly
        c = 1.0 / TWO_PI
        assert entropy(grid, f) == pytest.approx(TWO_PI**3 * c * np.log(c),
                                                 rel=1e-12)

    def test_entropy_lower_bound(self, grid):
        rng = np.random.default_rng(4)
        for _ in range(10):
            f, _ = admissible_pair(grid, rng, scale=rng.uniform(0.1, 0.99))
            assert entropy_upsilon(grid, f) >= -2.0 * TWO_PI**3 / np.e
            assert entropy(grid, f) >= -2.0 * TWO_PI**3 / np.e

    def test_entropy_convexity(self, grid):
        rng = np.random.default_rng(5)
        for _ in range(5):
            f1, _ = admissible_pair(grid, rng)
            f2, _ = admissible_pair(grid, rng)
            e1, e2 = entropy(grid, f1), entropy(grid, f2)
            for lam in (0.25, 0.5, 0.75):
                mix = entropy(grid, lam * f1 + (1 - lam) * f2)
                assert mix <= lam * e1 + (1 - lam) * e2 + 1e-10

    def test_conjugate_examples(self, grid):
        u0 = np.zeros(grid.shape)
        assert conjugate(grid, u0) == pytest.approx(
            TWO_PI**2 * np.log(1.0 + TWO_PI), rel=1e-12)
        small = conjugate(grid, np.full(grid.shape, -50.0))
        assert 0.0 < small < 1e-18

    def test_fenchel_young(self, grid):
        rng = np.random.default_rng(6)
        for _ in range(10):
            f, rho = admissible_pair(grid, rng)
            u = rng.standard_normal(grid.shape)
            gap = entropy(grid, f) + conjugate(grid, u) - integrate(grid, u * f)
            assert gap >= -1e-10
        f, rho = admissible_pair(grid, rng)
        u_star = to_entropy_var(grid, f, rho)
        ef = entropy(grid, f)
        gap = ef + conjugate(grid, u_star) - integrate(grid, u_star * f)
        assert abs(gap) <= 1e-8 * (1.0 + abs(ef))


class TestMobilityAndHessian:
    def test_mobility_u_zero(self, grid):
        params = ModelParams(pe=0.0, de=1.7)
        mob = mobility(grid, np.zeros(grid.shape), params)
        assert np.allclose(mob.spatial, 1.7 / (1.0 + TWO_PI) ** 2, atol=1e-14)
        assert np.allclose(mob.angular, 1.0 / (1.0 + TWO_PI), atol=1e-14)

    def test_mobility_consistency(self, grid):
        rng = np.random.default_rng(7)
        u = rng.standard_normal(grid.shape)
        params = ModelParams(pe=0.0, de=2.3)
        mob = mobility(grid, u, params)
        assert np.all(mob.spatial > 0) and np.all(mob.angular > 0)
        _, rho, omr = from_entropy_var_parts(grid, u)
        ratio = mob.spatial / mob.angular
        assert np.allclose(ratio, 2.3 * omr[:, :, None], rtol=1e-12)

    def test_hessian_constant_closed_form(self, grid):
        c, w = 0.7, 1.3
        u = np.full(grid.shape, c)
        v = np.full(grid.shape, w)
        expected = np.exp(c) * w / (1.0 + TWO_PI * np.exp(c)) ** 2
        assert np.allclose(hessian_apply(grid, u, v), expected, rtol=1e-12)

    def test_hessian_linear_and_psd(self, grid):
        rng = np.random.default_rng(8)
        u = rng.standard_normal(grid.shape)
        assert np.allclose(hessian_apply(grid, u, np.zeros(grid.shape)), 0.0)
        for _ in range(20):
            v = rng.standard_normal(grid.shape)
            quad = integrate(grid, v * hessian_apply(grid, u, v))
            assert quad >= -1e-12 * integrate(grid, v**2)

    def test_hessian_symmetry(self, grid):
        rng = np.random.default_rng(9)
        u = rng.standard_normal(grid.shape)
        v = rng.standard_normal(grid.shape)
        w = rng.standard_normal(grid.shape)
        lhs = integrate(grid, w * hessian_apply(grid, u, v))
        rhs = integrate(grid, v * hessian_apply(grid, u, w))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


class TestDissipation:
    def test_constant_is_zero(self, grid):
        f = np.full(grid.shape, 0.05)
        assert dissipation(grid, f, ModelParams(pe=0.0, de=1.0)) == \
            pytest.approx(0.0, abs=1e-20)

    def test_nonnegative(self, grid):
        rng = np.random.default_rng(10)
        for _ in range(5):
            f, _ = admissible_pair(grid, rng)
            assert dissipation(grid, f, ModelParams(pe=0.0, de=1.0)) >= 0.0

    def test_matches_mobility_quadrature(self, grid):
        """Two independent discretizations of int Mtilde grad u . grad u."""
        from abpflow.grid import grad_theta, grad_x

        X, _, T = grid.meshgrid()
        u = 0.1 * np.cos(X) * np.cos(T)
        f, _, _ = from_entropy_var_parts(grid, u)
        params = ModelParams(pe=0.0, de=1.5)
        via_f = dissipation(grid, f, params)
        mob = mobility(grid, u, params)
        ux1, ux2 = grad_x(grid, u)
        ut = grad_theta(grid, u)
        via_u = integrate(grid, mob.spatial * (ux1**2 + ux2**2)
                          + mob.angular * ut**2)
        assert via_f == pytest.approx(via_u, rel=1e-8)


class TestGajewski:
    def test_identical_is_zero(self, grid):
        rng = np.random.default_rng(11)
        f = rng.random(grid.shape)
        assert gajewski_distance(grid, f, f, 1e-6) == pytest.approx(0.0,
                                                                    abs=1e-14)

    def test_constant_closed_form(self, grid):
        a, b, delta = 0.3, 0.9, 1e-2
        zeta = lambda s: s * (np.log(s) - 1.0) + 1.0
        expected = TWO_PI**3 * (zeta(a + delta) + zeta(b + delta)
                                - 2.0 * zeta(0.5 * (a + b) + delta))
        f1 = np.full(grid.shape, a)
        f2 = np.full(grid.shape, b)
        assert gajewski_distance(grid, f1, f2, delta) == pytest.approx(
            expected, rel=1e-12)

    @pytest.mark.parametrize("delta", [1e-2, 1e-6])
    def test_lower_bound(self, grid, delta):
        rng = np.random.default_rng(12)
        for _ in range(100):
            f1 = rng.random(grid.shape)
            f2 = rng.random(grid.shape)
            d = gajewski_distance(grid, f1, f2, delta)
            assert d >= lp_norm(grid, f1 - f2, 2) ** 2 / 8.0

    def test_rejects_bad_delta(self, grid):
        f = np.ones(grid.shape)
        with pytest.raises(NonPositiveDelta):
            gajewski_distance(grid, f, f, 0.0)

    def test_rejects_negative_density(self, grid):
        f = np.ones(grid.shape)
        g = -np.ones(grid.shape)
        with pytest.raises(DegenerateState):
            gajewski_distance(grid, f, g, 1e-6)
