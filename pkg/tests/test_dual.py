"""Entropy-variable Galerkin solver: assembly, integration, invariants."""

import numpy as np
import pytest

import abpflow.dual as dual_mod
from abpflow.dual import (DualRunConfig, MassSolver, SpectralState, TrigBasis,
                          assemble_mass, assemble_rhs, mass_matvec,
                          project_initial, projected_coords,
                          reconstruction_error, run_dual, step)
from abpflow.entropy import from_entropy_var_parts
from abpflow.errors import ConfigError
from abpflow.grid import GridSpec, integrate, lp_norm, marginal_rho
from abpflow.mollify import MollifierSpec, regularize_initial
from abpflow.params import ModelParams
from abpflow.primal import PrimalRunConfig, run_primal

TWO_PI = 2.0 * np.pi


@pytest.fixture
def grid():
    return GridSpec(16, 16, 16)


@pytest.fixture
def basis(grid):
    return TrigBasis(grid, 2)


def moderate_gamma(basis, rng, scale=0.1):
    gamma = scale * rng.standard_normal(basis.dim)
    gamma[0] -= 3.0  # push the density into a comfortably admissible range
    return gamma


class TestBasis:
    def test_dimension(self, basis):
        assert basis.dim == 5**3

    def test_projection_exact_on_band_limited(self, grid):
        X, Y, T = grid.meshgrid()
        u = 0.3 + 0.5 * np.cos(X) - 0.2 * np.sin(2 * Y) * np.cos(T)
        state = project_initial(grid, u, 2)
        assert reconstruction_error(grid, u, state) <= 1e-12

    def test_projection_truncates_high_modes(self, grid):
        X, _, _ = grid.meshgrid()
        u = np.cos(5 * X)
        state = project_initial(grid, u, 2)
        basis = TrigBasis(grid, 2)
        assert np.max(np.abs(basis.synthesize(state.coeffs))) <= 1e-12

    def test_grid_too_small_for_kmax(self):
        with pytest.raises(ConfigError):
            TrigBasis(GridSpec(8, 8, 8), 4)

    def test_analyze_synthesize_roundtrip(self, basis):
        rng = np.random.default_rng(0)
        gamma = rng.standard_normal(basis.dim)
        back = basis.analyze(basis.synthesize(gamma))
        assert np.max(np.abs(back.ravel() - gamma)) <= 1e-12


class TestMassMatrix:
    def test_symmetric_positive_definite(self, grid, basis):
        rng = np.random.default_rng(1)
        gamma = moderate_gamma(basis, rng)
        f, _, _ = from_entropy_var_parts(grid, basis.synthesize(gamma))
        m = assemble_mass(basis, f, 1e-3)
        assert np.array_equal(m, m.T)
        assert np.linalg.eigvalsh(m).min() > 0

    def test_matvec_matches_dense(self, grid, basis):
        rng = np.random.default_rng(2)
        gamma = moderate_gamma(basis, rng)
        f, _, _ = from_entropy_var_parts(grid, basis.synthesize(gamma))
        m = assemble_mass(basis, f, 1e-3)
        v = rng.standard_normal(basis.dim)
        direct = m @ v
        free = mass_matvec(basis, f, 1e-3, v)
        assert np.max(np.abs(direct - free)) <= 1e-12 * np.max(np.abs(direct))

    def test_jacobian_identity(self, grid, basis):
        """M is the Jacobian of the projected coordinates eta(gamma)."""
        rng = np.random.default_rng(3)
        eps = 1e-3
        gamma = moderate_gamma(basis, rng)
        _, _, f = projected_coords(basis, gamma, eps)
        m = assemble_mass(basis, f, eps)
        h = 1e-6
        for j in rng.choice(basis.dim, 4, replace=False):
            gp, gm = gamma.copy(), gamma.copy()
            gp[j] += h
            gm[j] -= h
            ep, _, _ = projected_coords(basis, gp, eps)
            em, _, _ = projected_coords(basis, gm, eps)
            fd = (ep - em) / (2 * h)
            assert np.max(np.abs(fd - m[:, j])) <= 1e-7 * np.max(np.abs(m[:, j]))

    def test_cg_path_matches_cholesky(self, grid, basis, monkeypatch):
        rng = np.random.default_rng(4)
        gamma = moderate_gamma(basis, rng)
        f, _, _ = from_entropy_var_parts(grid, basis.synthesize(gamma))
        rhs = rng.standard_normal(basis.dim)
        x_dense = MassSolver(basis, f, 1e-3).solve(rhs)
        monkeypatch.setattr(dual_mod, "DENSE_LIMIT", 1)
        x_cg = MassSolver(basis, f, 1e-3).solve(rhs)
        assert np.max(np.abs(x_cg - x_dense)) <= 1e-8 * np.max(np.abs(x_dense))


class TestRhs:
    def test_constant_state_stationary(self, grid, basis):
        u = np.full(grid.shape, np.log(0.05 / (1 - TWO_PI * 0.05)))
        gamma = project_initial(grid, u, 2).coeffs
        for pe in (0.0, 0.7):
            r = assemble_rhs(basis, gamma, ModelParams(pe=pe, de=1.0), 1e-3)
            assert np.max(np.abs(r)) <= 1e-12

    def test_constant_mode_component_vanishes(self, grid, basis):
        """R is zero on the constant basis function: the conserved quantity."""
        rng = np.random.default_rng(5)
        gamma = moderate_gamma(basis, rng)
        r = assemble_rhs(basis, gamma, ModelParams(pe=1.0, de=1.0), 1e-3)
        assert r[0] == 0.0


class TestConfig:
    def test_epsilon_zero_rejected(self, grid):
        with pytest.raises(ConfigError):
            DualRunConfig(params=ModelParams(), epsilon=0.0, kmax=2,
                          grid=grid, t_final=0.1)

    def test_state_size_validated(self):
        with pytest.raises(ConfigError):
            SpectralState(kmax=2, coeffs=np.zeros(10))


class TestRunDual:
    def test_structural_bounds_and_conservation(self, grid):
        rng = np.random.default_rng(6)
        f0 = 0.04 * (1.0 + 0.5 * rng.random(grid.shape))
        cfg = DualRunConfig(params=ModelParams(pe=0.5, de=1.0), epsilon=0.05,
                            kmax=3, grid=grid, t_final=0.03, snap_every=0.01)
        res = run_dual(grid, f0, cfg)
        for f, rho in zip(res.snapshots, res.rhos):
            assert np.min(f) > 0.0
            assert np.max(rho) < 1.0
        inv = [r.mass_eps_u_plus_f for r in res.rows]
        assert max(abs(v - inv[0]) for v in inv) <= 1e-10 * abs(inv[0])

    def test_lyapunov_decreases_at_pe_zero(self, grid):
        X, Y, T = grid.meshgrid()
        f0 = 0.04 * (1.0 + 0.3 * np.cos(X) * np.cos(T) + 0.2 * np.sin(Y))
        cfg = DualRunConfig(params=ModelParams(pe=0.0, de=1.0), epsilon=0.05,
                            kmax=3, grid=grid, t_final=0.05, snap_every=0.01)
        res = run_dual(grid, f0, cfg)
        lya = [r.entropy + 0.5 * r.eps_u_sq for r in res.rows]
        tol = 1e-8 * (1.0 + abs(lya[0]))
        assert np.all(np.diff(lya) <= tol)

    def test_matches_primal_on_mollified_data(self, grid):
        X, Y, T = grid.meshgrid()
        f0 = 0.04 * (1.0 + 0.3 * np.cos(X) * np.cos(T) + 0.2 * np.sin(Y))
        eps = 0.01
        params = ModelParams(pe=0.0, de=1.0)
        cfg = DualRunConfig(params=params, epsilon=eps, kmax=3, grid=grid,
                            t_final=0.05)
        res = run_dual(grid, f0, cfg)
        f0e, _, _ = regularize_initial(grid, f0, MollifierSpec(eps))
        pres = run_primal(grid, f0e, PrimalRunConfig(
            params=params, grid=grid, t_final=0.05, dt=0.002))
        gap = lp_norm(grid, res.snapshots[-1] - pres.snapshots[-1], 2)
        assert gap <= 1e-3 * lp_norm(grid, pres.snapshots[-1], 2)

    def test_single_step_advances(self, grid):
        X, _, T = grid.meshgrid()
        f0 = 0.04 * (1.0 + 0.2 * np.cos(X) * np.cos(T))
        cfg = DualRunConfig(params=ModelParams(pe=0.0, de=1.0), epsilon=0.05,
                            kmax=2, grid=grid, t_final=0.1)
        _, _, u0 = regularize_initial(grid, f0, MollifierSpec(0.05))
        state = project_initial(grid, u0, 2)
        new, dt_next = step(state, 1e-3, grid, cfg)
        assert new.t == pytest.approx(1e-3)
        assert dt_next > 0
        assert not np.array_equal(new.coeffs, state.coeffs)

    def test_deterministic(self, grid):
        X, _, T = grid.meshgrid()
        f0 = 0.04 * (1.0 + 0.2 * np.cos(X) * np.cos(T))
        cfg = DualRunConfig(params=ModelParams(pe=0.5, de=1.0), epsilon=0.05,
                            kmax=2, grid=grid, t_final=0.02)
        a = run_dual(grid, f0, cfg)
        b = run_dual(grid, f0, cfg)
        assert np.array_equal(a.snapshots[-1], b.snapshots[-1])
