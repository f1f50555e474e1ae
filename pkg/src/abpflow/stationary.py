"""Stationary states, linearized mode rates, and the fixed-point map
Gamma = S o G near a constant state f_inf.

The linear engine S solves, with frozen coefficients and Z = marginal(z),

    dt z - dtheta^2 z - De[(1-rho_inf) Lap z + f_inf Lap Z]
        + Pe[(1-rho_inf) grad z - f_inf grad Z] . e(theta) = g,

and the quadratic source is G(w) = De(w Lap W - W Lap w)
+ Pe(w grad W + W grad w) . e(theta).  Fixed points of w -> S(G(w), z0)
solve the perturbation equation around f_inf exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .entropy import dissipation
from .errors import ConfigError, NoContraction
from .grid import GridSpec, laplacian_x, lp_norm, marginal_rho
from .params import ModelParams
from .primal import IntegratingFactorHeun, _stiff_multiplier, rhs_primal

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ConstantState:
    f_inf: float

    def __post_init__(self):
        if not (0.0 < self.f_inf <= 1.0 / TWO_PI):
            raise ConfigError(
                f"f_inf must lie in (0, 1/(2 pi)], got {self.f_inf}"
            )

    @property
    def rho_inf(self):
        return TWO_PI * self.f_inf

    @property
    def mass(self):
        return self.f_inf * TWO_PI**3


@dataclass(frozen=True)
class ModeRate:
    mode: tuple
    rate: complex


@dataclass
class FixedPointReport:
    xi_norms: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    c0: float = 0.0
    c1: float = 0.0
    final_increment: float = float("inf")
    converged: bool = False
    times: np.ndarray | None = None
    limit: np.ndarray | None = None  # trajectory (nt+1, nx, ny, ntheta)


def stationary_residual(grid: GridSpec, f: np.ndarray,
                        params: ModelParams) -> float:
    """L2 norm of the primal tendency; zero iff discretely stationary."""
    return lp_norm(grid, rhs_primal(grid, f, params), 2.0)


def variational_F(grid: GridSpec, f: np.ndarray, params: ModelParams) -> float:
    """The stationary variational functional: the entropy dissipation."""
    return dissipation(grid, f, params)


def linearized_mode_rates(c: ConstantState, params: ModelParams,
                          kmax: int):
    """Per-mode rates of the decoupled Fourier ODE around f_inf:

    lambda_n = -[n3^2 + De (n1^2+n2^2)((1-rho_inf) + 1_{n3=0} 2 pi f_inf)
                 + 2 pi i Pe (1-rho_inf) n1].
    """
    omr = 1.0 - c.rho_inf
    rates = []
    rng = range(-kmax, kmax + 1)
    for n1 in rng:
        for n2 in rng:
            for n3 in rng:
                lam = -(
                    n3**2
                    + params.de * (n1**2 + n2**2)
                    * (omr + (TWO_PI * c.f_inf if n3 == 0 else 0.0))
                    + TWO_PI * 1j * params.pe * omr * n1
                )
                rates.append(ModeRate(mode=(n1, n2, n3), rate=lam))
    return rates


def apply_G(grid: GridSpec, w: np.ndarray, params: ModelParams) -> np.ndarray:
    """Quadratic source G(w) = De(w Lap W - W Lap w)
    + Pe(w grad W + W grad w) . e(theta), spectral and dealiased."""
    prod = spectral.dealiased_product
    W = marginal_rho(grid, w)
    W3 = np.broadcast_to(W[:, :, None], grid.shape).copy()

    lap_W3 = np.broadcast_to(
        (spectral.fft_derivative(W, 0, 2) + spectral.fft_derivative(W, 1, 2))
        [:, :, None], grid.shape).copy()
    lap_w = laplacian_x(grid, w)
    out = params.de * (prod(w, lap_W3) - prod(W3, lap_w))

    if params.pe != 0.0:
        theta = grid.theta
        cos3 = np.broadcast_to(np.cos(theta)[None, None, :], grid.shape).copy()
        sin3 = np.broadcast_to(np.sin(theta)[None, None, :], grid.shape).copy()
        wx1 = spectral.fft_derivative(w, 0, 1)
        wx2 = spectral.fft_derivative(w, 1, 1)
        Wx1 = np.broadcast_to(
            spectral.fft_derivative(W, 0, 1)[:, :, None], grid.shape).copy()
        Wx2 = np.broadcast_to(
            spectral.fft_derivative(W, 1, 1)[:, :, None], grid.shape).copy()
        t1 = prod(w, Wx1) + prod(W3, wx1)
        t2 = prod(w, Wx2) + prod(W3, wx2)
        out = out + params.pe * (prod(t1, cos3) + prod(t2, sin3))
    return out


def solve_S(grid: GridSpec, g_traj, z0: np.ndarray, c: ConstantState,
            params: ModelParams, t_final: float, nt: int) -> np.ndarray:
    """Linear solution map; g_traj is None or an array sampled at the nt+1
    uniform step times.  Returns the trajectory (nt+1, nx, ny, ntheta)."""
    if g_traj is not None and len(g_traj) != nt + 1:
        raise ConfigError(f"g_traj has {len(g_traj)} samples, need {nt + 1}")
    dt = t_final / nt
    omr = 1.0 - c.rho_inf
    emul = _stiff_multiplier(grid.shape, params.de * omr, (0, 1), 2, dt)
    theta = grid.theta[None, None, :]
    cos3, sin3 = np.cos(theta), np.sin(theta)

    def nonlinear(z, t):
        Z = marginal_rho(grid, z)
        lap_Z = (spectral.fft_derivative(Z, 0, 2)
                 + spectral.fft_derivative(Z, 1, 2))
        out = params.de * c.f_inf * lap_Z[:, :, None] * np.ones_like(z)
        if params.pe != 0.0:
            zx1 = spectral.fft_derivative(z, 0, 1)
            zx2 = spectral.fft_derivative(z, 1, 1)
            Zx1 = spectral.fft_derivative(Z, 0, 1)[:, :, None]
            Zx2 = spectral.fft_derivative(Z, 1, 1)[:, :, None]
            out = out - params.pe * (
                (omr * zx1 - c.f_inf * Zx1) * cos3
                + (omr * zx2 - c.f_inf * Zx2) * sin3
            )
        if g_traj is not None:
            out = out + g_traj[min(int(round(t / dt)), nt)]
        return out

    stepper = IntegratingFactorHeun(emul, nonlinear, dt)
    traj = np.empty((nt + 1,) + grid.shape)
    traj[0] = z0
    z = np.array(z0, dtype=float)
    for n in range(nt):
        z = stepper.step(z, n * dt)
        traj[n + 1] = z
    return traj


def fp_constants(params: ModelParams, t_final: float):
    """C0 = exp(T(1 + Pe^2/De)); C1 = (1 + Pe^2/De)^{1/2} C0^{3/2}."""
    a = 1.0 + params.pe**2 / params.de
    c0 = float(np.exp(t_final * a))
    c1 = float(np.sqrt(a) * c0**1.5)
    return c0, c1


def xi_norm(grid: GridSpec, traj: np.ndarray, dt: float) -> float:
    """Discrete surrogate of the fixed-point space norm: max-over-time H2
    + L2-in-time H3 + L2-in-time H1 of the finite-difference dt-derivative."""
    h2 = max(spectral.sobolev_norm(v, 2) for v in traj)
    h3_sq = sum(spectral.sobolev_norm(v, 3) ** 2 for v in traj) * dt
    dtv = np.diff(traj, axis=0) / dt
    h1_sq = sum(spectral.sobolev_norm(v, 1) ** 2 for v in dtv) * dt
    return float(h2 + np.sqrt(h3_sq) + np.sqrt(h1_sq))


def gamma_iterate(grid: GridSpec, w0: np.ndarray, z0: np.ndarray,
                  c: ConstantState, params: ModelParams, t_final: float,
                  radius: float, maxit: int = 30, nt: int = 100,
                  tol: float = 1e-10) -> FixedPointReport:
    """Iterate w <- S(G(w), z0) from the constant-in-time trajectory of w0.

    Raises NoContraction after three consecutive ratios >= 1; the report is
    attached to the exception so stress runs can still inspect it.
    """
    if t_final > 1.0 + 1e-12:
        raise ConfigError("gamma_iterate requires T <= 1; chain intervals "
                          "for longer horizons")
    if c.f_inf >= 1.0 / TWO_PI:
        raise ConfigError("fixed-point machinery needs f_inf < 1/(2 pi) "
                          "strictly")
    dt = t_final / nt
    report = FixedPointReport()
    report.c0, report.c1 = fp_constants(params, t_final)
    report.times = np.arange(nt + 1) * dt

    w = np.broadcast_to(w0, (nt + 1,) + grid.shape).copy()
    w0_norm = xi_norm(grid, w, dt)
    if w0_norm > radius:
        raise ConfigError(
            f"||w0||_Xi = {w0_norm} exceeds the requested radius {radius}"
        )
    report.xi_norms.append(w0_norm)

    prev_inc = None
    consecutive_bad = 0
    for _ in range(maxit):
        g_traj = np.stack([apply_G(grid, w[i], params) for i in range(nt + 1)])
        z = solve_S(grid, g_traj, z0, c, params, t_final, nt)
        inc = xi_norm(grid, z - w, dt)
        report.increments.append(inc)
        report.xi_norms.append(xi_norm(grid, z, dt))
        if prev_inc is not None and prev_inc > 0:
            ratio = inc / prev_inc
            report.ratios.append(ratio)
            consecutive_bad = consecutive_bad + 1 if ratio >= 1.0 else 0
            if consecutive_bad >= 3:
                report.limit = z
                report.final_increment = inc
                raise NoContraction(
                    "contraction ratio >= 1 for 3 consecutive passes",
                    report=report,
                )
        w = z
        prev_inc = inc
        if inc < tol:
            report.converged = True
            break
    report.limit = w
    report.final_increment = report.increments[-1] if report.increments else 0.0
    return report


def chain_gamma_intervals(grid: GridSpec, w0: np.ndarray, c: ConstantState,
                          params: ModelParams, t_total: float, radius: float,
                          maxit: int = 30, nt: int = 100, tol: float = 1e-10):
    """Extend the fixed-point solution past T = 1 by chaining unit
    intervals with hand-off of the terminal state."""
    reports = []
    z0 = np.array(w0, dtype=float)
    remaining = t_total
    while remaining > 1e-12:
        t_seg = min(1.0, remaining)
        rep = gamma_iterate(grid, z0, z0, c, params, t_seg, radius,
                            maxit=maxit, nt=nt, tol=tol)
        reports.append(rep)
        z0 = rep.limit[-1]
        remaining -= t_seg
    return reports


def empirical_contraction_radius(grid: GridSpec, direction: np.ndarray,
                                 c: ConstantState, params: ModelParams,
                                 t_final: float = 1.0, nt: int = 50,
                                 s_max: float = 4.0, bisections: int = 6):
    """Largest amplitude s (by bisection) at which the Gamma iteration
    still contracts along the given perturbation direction.  Purely
    empirical; makes no claim about any analytic radius constant."""
    unit = direction / spectral.sobolev_norm(direction, 2)

    def contracts(s):
        w0 = s * unit
        try:
            rep = gamma_iterate(grid, w0, w0, c, params, t_final,
                                radius=np.inf, maxit=12, nt=nt, tol=1e-9)
        except NoContraction:
            return False
        return bool(rep.ratios) and all(r < 1.0 for r in rep.ratios)

    lo, hi = 0.0, s_max
    if contracts(s_max):
        return s_max
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if contracts(mid):
            lo = mid
        else:
            hi = mid
    return lo


def measured_mode_rate(grid: GridSpec, times, snapshots, mode) -> float:
    """Log-slope fit of one Fourier amplitude along a trajectory."""
    n1, n2, n3 = mode
    amps = []
    for f in snapshots:
        spec = np.fft.fftn(f, norm="forward")
        amps.append(abs(spec[n1 % grid.nx, n2 % grid.ny, n3 % grid.ntheta]))
    amps = np.array(amps)
    if np.any(amps <= 0):
        raise ConfigError(f"mode {mode} amplitude vanished; cannot fit a rate")
    slope = np.polyfit(np.asarray(times, dtype=float), np.log(amps), 1)[0]
    return float(slope)
