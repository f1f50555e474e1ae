"""Spectral Galerkin solver for the eps-regularized dual (entropy-variable)
equation.

The approximant u_n = sum_j gamma_j phi_j uses the real trigonometric
tensor basis {1, cos(k xi), sin(k xi)}^3 with |k| <= K, and evolves the
quasilinear system

    M(gamma) gamma' = R(gamma),
    M_kj = int (eps id + A(u_n))[phi_j] phi_k,
    R_k  = -int grad phi_k . ((eps I + M(u_n)) grad u_n + M(u_n) V).

Since M is exactly the Jacobian of the projected coordinates
eta_k(gamma) = int (eps u_n + f[u_n]) phi_k, the system is integrated as
the equivalent explicit ODE eta' = R(gamma(eta)), where gamma(eta) is
recovered by a modified Newton iteration that reuses a single SPD
factorization of M per step.  This keeps the embedded pair's full order
and conserves int(eps u + f) to roundoff (R is zero on the constant
mode by the divergence form).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .entropy import entropy, from_entropy_var_parts
from .errors import (ConfigError, FactorizationFailure, StepsizeUnderflow)
from .grid import GridSpec, integrate, marginal_rho
from .mollify import MollifierSpec, regularize_initial
from .params import ModelParams

TWO_PI = 2.0 * np.pi

DENSE_LIMIT = 4096  # (2K+1)^3 above this switches to the matrix-free path


# ---------------------------------------------------------------------------
# tensor trigonometric basis
# ---------------------------------------------------------------------------

class TrigBasis:
    """Per-axis synthesis matrices, L2 weights and derivative maps for the
    (2K+1)^3 tensor basis on a quadrature grid."""

    def __init__(self, grid: GridSpec, kmax: int):
        if kmax < 1:
            raise ConfigError(f"mode cutoff K must be >= 1, got {kmax}")
        for n in grid.shape:
            if n < 2 * (2 * kmax + 1):
                raise ConfigError(
                    f"grid size {n} too small for K = {kmax}: "
                    f"need >= 2(2K+1) = {2 * (2 * kmax + 1)}"
                )
        self.grid = grid
        self.kmax = kmax
        self.nmodes = 2 * kmax + 1
        self.dim = self.nmodes**3
        self.phi = [self._axis_matrix(x) for x in (grid.x1, grid.x2, grid.theta)]
        w = np.full(self.nmodes, np.pi)
        w[0] = TWO_PI
        self.axis_weights = w
        self.weight_tensor = (
            w[:, None, None] * w[None, :, None] * w[None, None, :]
        )
        self.deriv = self._deriv_matrix()

    def _axis_matrix(self, nodes: np.ndarray) -> np.ndarray:
        cols = [np.ones_like(nodes)]
        for k in range(1, self.kmax + 1):
            cols.append(np.cos(k * nodes))
        for k in range(1, self.kmax + 1):
            cols.append(np.sin(k * nodes))
        return np.stack(cols, axis=1)

    def _deriv_matrix(self) -> np.ndarray:
        d = np.zeros((self.nmodes, self.nmodes))
        for k in range(1, self.kmax + 1):
            d[self.kmax + k, k] = -k  # d/dx cos(kx) = -k sin(kx)
            d[k, self.kmax + k] = k   # d/dx sin(kx) =  k cos(kx)
        return d

    # -- grid <-> coefficient maps ------------------------------------------

    def synthesize(self, gamma: np.ndarray) -> np.ndarray:
        g = gamma.reshape((self.nmodes,) * 3)
        t = np.tensordot(g, self.phi[2], axes=([2], [1]))      # (i, j, c)
        t = np.tensordot(t, self.phi[1], axes=([1], [1]))      # (i, c, b)
        t = np.tensordot(t, self.phi[0], axes=([0], [1]))      # (c, b, a)
        return t.transpose(2, 1, 0)

    def moments(self, values: np.ndarray) -> np.ndarray:
        """m_k = int phi_k F dxi by grid quadrature, tensor-shaped."""
        t = np.tensordot(values, self.phi[2], axes=([2], [0]))  # (a, b, k)
        t = np.tensordot(t, self.phi[1], axes=([1], [0]))       # (a, k, j)
        t = np.tensordot(t, self.phi[0], axes=([0], [0]))       # (k, j, i)
        return t.transpose(2, 1, 0) * self.grid.cell_volume

    def analyze(self, values: np.ndarray) -> np.ndarray:
        return self.moments(values) / self.weight_tensor

    def coeff_derivative(self, gamma_t: np.ndarray, axis: int) -> np.ndarray:
        t = np.tensordot(self.deriv, gamma_t, axes=([1], [axis]))
        return np.moveaxis(t, 0, axis)

    def div_moments(self, m1, m2, m3) -> np.ndarray:
        """Moments of grad phi_k contracted with a flux: sum_a int
        (d_a phi_k) F_a, given the raw moments of each flux component."""
        out = np.tensordot(self.deriv, m1, axes=([0], [0]))
        out += np.moveaxis(np.tensordot(self.deriv, m2, axes=([0], [1])), 0, 1)
        out += np.moveaxis(np.tensordot(self.deriv, m3, axes=([0], [2])), 0, 2)
        return out


# ---------------------------------------------------------------------------
# states and configuration
# ---------------------------------------------------------------------------

@dataclass
class SpectralState:
    kmax: int
    coeffs: np.ndarray  # flattened, C order over (k1, k2, k3)
    t: float = 0.0

    def __post_init__(self):
        if self.coeffs.size != (2 * self.kmax + 1) ** 3:
            raise ConfigError("coefficient vector size != (2K+1)^3")
        if not np.all(np.isfinite(self.coeffs)):
            raise ConfigError("non-finite spectral coefficients")


@dataclass(frozen=True)
class DualRunConfig:
    params: ModelParams
    epsilon: float
    kmax: int
    grid: GridSpec
    t_final: float
    dt_init: float = 1e-3
    rtol: float = 1e-6
    atol: float = 1e-9
    snap_every: float | None = None
    mollifier_gamma: float = 3.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(
                f"epsilon must be > 0 (the dual scheme requires it), got "
                f"{self.epsilon}"
            )
        if self.t_final <= 0:
            raise ConfigError("t_final must be > 0")


def project_initial(grid: GridSpec, u0: np.ndarray, kmax: int) -> SpectralState:
    """Spectral truncation of u0 to |k| <= K; exact on band-limited input."""
    basis = TrigBasis(grid, kmax)
    gamma = basis.analyze(u0)
    return SpectralState(kmax=kmax, coeffs=gamma.ravel(), t=0.0)


def reconstruction_error(grid: GridSpec, u0: np.ndarray,
                         state: SpectralState) -> float:
    basis = TrigBasis(grid, state.kmax)
    diff = basis.synthesize(state.coeffs) - u0
    return float(np.sqrt(integrate(grid, diff**2)))


# ---------------------------------------------------------------------------
# Galerkin operators
# ---------------------------------------------------------------------------

def assemble_mass(basis: TrigBasis, f_grid: np.ndarray, epsilon: float) -> np.ndarray:
    """Dense M_kj = int (eps id + A(u))[phi_j] phi_k with f = f[u] on the grid.

    A(u)[v] = f v - f int f v dtheta splits M into eps * Gram + a weighted
    Gram of the basis minus a rank-structured angular average; both parts
    are assembled as tensor contractions, never an explicit j-loop.
    """
    grid = basis.grid
    nm = basis.nmodes
    px = np.einsum("ai,aj->aij", basis.phi[0], basis.phi[0])
    py = np.einsum("ai,aj->aij", basis.phi[1], basis.phi[1])
    pt = np.einsum("ai,aj->aij", basis.phi[2], basis.phi[2])
    b1 = np.einsum("abc,aij,bkl,cmn->ikmjln", f_grid, px, py, pt,
                   optimize=True) * grid.cell_volume
    b1 = b1.reshape(basis.dim, basis.dim)

    g = np.tensordot(f_grid, basis.phi[2], axes=([2], [0])) * grid.htheta
    q = np.einsum("ai,bk,abm->abikm", basis.phi[0], basis.phi[1], g)
    q = q.reshape(grid.nx * grid.ny, basis.dim)
    b2 = (grid.hx * grid.hy) * (q.T @ q)

    m = b1 - b2
    m[np.diag_indices_from(m)] += epsilon * basis.weight_tensor.ravel()
    return 0.5 * (m + m.T)


def mass_matvec(basis: TrigBasis, f_grid: np.ndarray, epsilon: float,
                vec: np.ndarray) -> np.ndarray:
    """Matrix-free M @ vec via one synthesis/moment transform pair."""
    grid = basis.grid
    v_grid = basis.synthesize(vec)
    fv_mean = np.sum(f_grid * v_grid, axis=2, keepdims=True) * grid.htheta
    av = f_grid * v_grid - f_grid * fv_mean
    out = basis.moments(av).ravel()
    out += epsilon * basis.weight_tensor.ravel() * vec
    return out


def assemble_rhs(basis: TrigBasis, gamma: np.ndarray, params: ModelParams,
                 epsilon: float) -> np.ndarray:
    """R_k = -int grad phi_k . ((eps I + Mtilde) grad u + Mtilde V) dxi."""
    grid = basis.grid
    g = gamma.reshape((basis.nmodes,) * 3)
    u = basis.synthesize(g)
    f, _, omr = from_entropy_var_parts(grid, u)
    spatial = params.de * f * omr[:, :, None]
    ux1 = basis.synthesize(basis.coeff_derivative(g, 0))
    ux2 = basis.synthesize(basis.coeff_derivative(g, 1))
    ut = basis.synthesize(basis.coeff_derivative(g, 2))
    theta = grid.theta[None, None, :]
    v1 = -params.pe * np.cos(theta)
    v2 = -params.pe * np.sin(theta)
    flux1 = (epsilon + spatial) * ux1 + spatial * v1
    flux2 = (epsilon + spatial) * ux2 + spatial * v2
    flux3 = (epsilon + f) * ut
    m = basis.div_moments(basis.moments(flux1), basis.moments(flux2),
                          basis.moments(flux3))
    return -m.ravel()


def projected_coords(basis: TrigBasis, gamma: np.ndarray, epsilon: float):
    """eta_k = int (eps u + f) phi_k dxi; Jacobian d eta/d gamma = M."""
    g = gamma.reshape((basis.nmodes,) * 3)
    u = basis.synthesize(g)
    f, _, _ = from_entropy_var_parts(basis.grid, u)
    eta = epsilon * basis.weight_tensor.ravel() * gamma
    eta += basis.moments(f).ravel()
    return eta, u, f


# ---------------------------------------------------------------------------
# SPD solve (dense Cholesky below DENSE_LIMIT, preconditioned CG above)
# ---------------------------------------------------------------------------

class MassSolver:
    def __init__(self, basis: TrigBasis, f_grid: np.ndarray, epsilon: float):
        self.basis = basis
        self.epsilon = epsilon
        self.dense = basis.dim <= DENSE_LIMIT
        if self.dense:
            m = assemble_mass(basis, f_grid, epsilon)
            try:
                self.factor = cho_factor(m, lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise FactorizationFailure(
                    f"mass matrix not SPD: {exc}"
                ) from exc
        else:
            self.f_grid = f_grid
            self.precond = 1.0 / (epsilon * basis.weight_tensor.ravel())

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.dense:
            return cho_solve(self.factor, rhs, check_finite=False)
        return self._cg(rhs)

    def _cg(self, rhs: np.ndarray, tol: float = 1e-12, maxiter: int = 2000):
        x = np.zeros_like(rhs)
        r = rhs.copy()
        z = self.precond * r
        p = z.copy()
        rz = float(r @ z)
        bnorm = float(np.linalg.norm(rhs)) or 1.0
        for _ in range(maxiter):
            if np.linalg.norm(r) <= tol * bnorm:
                break
            ap = mass_matvec(self.basis, self.f_grid, self.epsilon, p)
            denom = float(p @ ap)
            if denom <= 0:
                raise FactorizationFailure("CG direction with non-positive curvature")
            alpha = rz / denom
            x += alpha * p
            r -= alpha * ap
            z = self.precond * r
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        return x


# ---------------------------------------------------------------------------
# adaptive integrator (Bogacki-Shampine 3(2) on eta' = R(gamma(eta)))
# ---------------------------------------------------------------------------

@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    newton_failures: int = 0


class DualIntegrator:
    def __init__(self, grid: GridSpec, config: DualRunConfig, e0: float):
        self.grid = grid
        self.config = config
        self.basis = TrigBasis(grid, config.kmax)
        self.eps = config.epsilon
        self.params = config.params
        self.ledger_tol = 1e-8 * (1.0 + abs(e0))
        self.stats = StepStats()

    # -- helpers -------------------------------------------------------------

    def lyapunov(self, u: np.ndarray, f: np.ndarray) -> float:
        """E[f] + (eps/2) ||u||^2, the quantity the Pe = 0 ledger tracks."""
        rho = marginal_rho(self.grid, f)
        return entropy(self.grid, f, rho) + 0.5 * self.eps * integrate(
            self.grid, u**2)

    def _newton(self, eta: np.ndarray, gamma0: np.ndarray, solver: MassSolver):
        gamma = gamma0.copy()
        scale = 1.0 + float(np.linalg.norm(eta))
        for _ in range(30):
            eta_g, _, _ = projected_coords(self.basis, gamma, self.eps)
            r = eta - eta_g
            if float(np.linalg.norm(r)) <= 1e-11 * scale:
                return gamma, True
            gamma = gamma + solver.solve(r)
        return gamma, False

    def attempt_step(self, gamma: np.ndarray, eta: np.ndarray, dt: float):
        """One BS23 attempt with frozen mass factorization.

        Returns (accepted, gamma_new, eta_new, err_norm, reason).
        """
        basis, eps, params = self.basis, self.eps, self.params
        _, u_old, f_old = projected_coords(basis, gamma, eps)
        solver = MassSolver(basis, f_old, eps)

        def rhs_of(eta_stage, guess):
            g, ok = self._newton(eta_stage, guess, solver)
            if not ok:
                return None, None
            return assemble_rhs(basis, g, params, eps), g

        k1, g1 = rhs_of(eta, gamma)
        if k1 is None:
            return False, gamma, eta, np.inf, "newton"
        k2, g2 = rhs_of(eta + 0.5 * dt * k1, g1)
        if k2 is None:
            return False, gamma, eta, np.inf, "newton"
        k3, g3 = rhs_of(eta + 0.75 * dt * k2, g2)
        if k3 is None:
            return False, gamma, eta, np.inf, "newton"
        eta_new = eta + dt * (2.0 / 9.0 * k1 + 1.0 / 3.0 * k2 + 4.0 / 9.0 * k3)
        k4, g4 = rhs_of(eta_new, g3)
        if k4 is None:
            return False, gamma, eta, np.inf, "newton"
        eta_low = eta + dt * (7.0 / 24.0 * k1 + 0.25 * k2 + 1.0 / 3.0 * k3
                              + 0.125 * k4)
        scale = self.config.atol + self.config.rtol * np.maximum(
            np.abs(eta), np.abs(eta_new))
        err = float(np.sqrt(np.mean(((eta_new - eta_low) / scale) ** 2)))
        if err > 1.0:
            return False, gamma, eta, err, "error"

        # discrete entropy ledger on the candidate state
        _, u_new, f_new = projected_coords(basis, g4, eps)
        lya_old = self.lyapunov(u_old, f_old)
        lya_new = self.lyapunov(u_new, f_new)
        budget = 0.0
        if params.pe != 0.0:
            budget = 0.5 * params.pe**2 * integrate(self.grid, np.abs(f_old)) * dt
        if lya_new > lya_old + budget + self.ledger_tol:
            return False, gamma, eta, err, "ledger"
        return True, g4, eta_new, err, "ok"

    def advance(self, state: SpectralState, t_end: float, dt: float,
                on_snapshot=None, snap_every: float | None = None):
        """Integrate to t_end; calls on_snapshot(t, gamma) at the cadence."""
        gamma = state.coeffs.copy()
        eta, _, _ = projected_coords(self.basis, gamma, self.eps)
        t = state.t
        next_snap = (t + snap_every) if snap_every else np.inf
        while t < t_end - 1e-14 * t_end:
            dt = min(dt, t_end - t)
            if snap_every:
                dt = min(dt, max(next_snap - t, 1e-14))
            ok, gamma_new, eta_new, err, reason = self.attempt_step(gamma, eta, dt)
            if ok:
                self.stats.accepted += 1
                gamma, eta = gamma_new, eta_new
                t += dt
                if snap_every and t >= next_snap - 1e-12:
                    if on_snapshot is not None:
                        on_snapshot(t, gamma)
                    next_snap += snap_every
                if err > 0:
                    dt *= float(np.clip(0.9 * err ** (-1.0 / 3.0), 0.2, 5.0))
            else:
                self.stats.rejected += 1
                if reason == "newton":
                    self.stats.newton_failures += 1
                dt *= 0.5
                if dt < 1e-12 * self.config.t_final:
                    raise StepsizeUnderflow(
                        f"dt = {dt} below 1e-12 * T at t = {t} ({reason})"
                    )
        return SpectralState(kmax=state.kmax, coeffs=gamma, t=t), dt


def step(state: SpectralState, dt: float, grid: GridSpec,
         config: DualRunConfig):
    """Single adaptive step; returns (new state, suggested dt)."""
    basis = TrigBasis(grid, config.kmax)
    _, u, f = projected_coords(basis, state.coeffs, config.epsilon)
    e0 = entropy(grid, f)
    integ = DualIntegrator(grid, config, e0)
    gamma = state.coeffs.copy()
    eta, _, _ = projected_coords(basis, gamma, config.epsilon)
    while True:
        ok, gamma_new, eta_new, err, reason = integ.attempt_step(gamma, eta, dt)
        if ok:
            new = SpectralState(kmax=state.kmax, coeffs=gamma_new,
                                t=state.t + dt)
            dt_next = dt * float(np.clip(0.9 * max(err, 1e-12) ** (-1.0 / 3.0),
                                         0.2, 5.0))
            return new, dt_next
        dt *= 0.5
        if dt < 1e-12 * config.t_final:
            raise StepsizeUnderflow(f"dt underflow in single step ({reason})")


# ---------------------------------------------------------------------------
# full run
# ---------------------------------------------------------------------------

@dataclass
class DualResult:
    times: list
    snapshots: list       # FieldF arrays
    rhos: list
    us: list              # synthesized entropy variable on the grid
    rows: list = field(default_factory=list)
    stats: StepStats | None = None
    e0: float = 0.0
    projection_error: float = 0.0


def run_dual(grid: GridSpec, f0: np.ndarray, config: DualRunConfig) -> DualResult:
    """mollify -> entropy variable -> project -> integrate to T."""
    from .diagnostics import record  # local import to avoid a cycle

    mspec = MollifierSpec(config.epsilon, config.mollifier_gamma)
    f0_eps, _, u0_eps = regularize_initial(grid, f0, mspec)
    state = project_initial(grid, u0_eps, config.kmax)
    proj_err = reconstruction_error(grid, u0_eps, state)

    basis = TrigBasis(grid, config.kmax)

    def fields_of(gamma):
        u = basis.synthesize(gamma)
        f, rho, _ = from_entropy_var_parts(grid, u)
        return u, f, rho

    u, f, rho = fields_of(state.coeffs)
    e0 = entropy(grid, f, rho)
    integ = DualIntegrator(grid, config, e0)

    result = DualResult(times=[0.0], snapshots=[f], rhos=[rho], us=[u],
                        e0=e0, projection_error=proj_err)
    result.rows.append(record(grid, f, rho, u, config.epsilon, 0.0,
                              config.params))

    snap_every = config.snap_every or config.t_final

    def on_snapshot(t, gamma):
        u_s, f_s, rho_s = fields_of(gamma)
        result.times.append(t)
        result.snapshots.append(f_s)
        result.rhos.append(rho_s)
        result.us.append(u_s)
        result.rows.append(record(grid, f_s, rho_s, u_s, config.epsilon, t,
                                  config.params))

    final_state, _ = integ.advance(state, config.t_final, config.dt_init,
                                   on_snapshot=on_snapshot,
                                   snap_every=snap_every)
    if result.times[-1] < config.t_final - 1e-12:
        on_snapshot(final_state.t, final_state.coeffs)
    result.stats = integ.stats
    return result
