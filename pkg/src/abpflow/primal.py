"""Conservative pseudospectral solver of the primal equation

    dt f = -div_x[ Pe (1-rho) f e(theta) - De ((1-rho) grad f + f grad rho) ]
           + dtheta^2 f.

Space: Fourier collocation with 3/2-rule dealiasing of the quadratic
fluxes.  Time: the stiff constant-coefficient part De*Lap_x + dtheta^2 is
integrated by its exact diagonal exponential and the remainder by an
explicit Heun stage pair (second order overall); the zero mode is
untouched by construction, so mass is conserved to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import BlowupDetected, ConfigError
from .grid import GridSpec, dtheta2, laplacian_x, marginal_rho
from .params import ModelParams

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PrimalRunConfig:
    params: ModelParams
    grid: GridSpec
    t_final: float
    dt: float | None = None
    cfl: float | None = None
    imex: bool = True
    clamp: float | None = None
    snap_every: float | None = None

    def __post_init__(self):
        if self.t_final <= 0:
            raise ConfigError("t_final must be > 0")
        if self.dt is None and self.cfl is None:
            raise ConfigError("provide dt or cfl")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be > 0")


@dataclass
class PrimalResult:
    times: list
    snapshots: list
    rhos: list
    certified: bool = True
    max_rho_seen: float = field(default=float("nan"))


def _broadcast3(grid: GridSpec, v2d: np.ndarray) -> np.ndarray:
    return np.broadcast_to(v2d[:, :, None], grid.shape).copy()


def rhs_primal(grid: GridSpec, f: np.ndarray, params: ModelParams) -> np.ndarray:
    """Tendency in flux form; all products dealiased by the 3/2 rule."""
    rho = marginal_rho(grid, f)
    omr3 = _broadcast3(grid, 1.0 - rho)
    rx1 = spectral.fft_derivative(rho, 0, 1)
    rx2 = spectral.fft_derivative(rho, 1, 1)
    fx1 = spectral.fft_derivative(f, 0, 1)
    fx2 = spectral.fft_derivative(f, 1, 1)

    prod = spectral.dealiased_product
    theta = grid.theta
    cos3 = np.broadcast_to(np.cos(theta)[None, None, :], grid.shape).copy()
    sin3 = np.broadcast_to(np.sin(theta)[None, None, :], grid.shape).copy()

    crowd = prod(omr3, f)  # (1-rho) f
    flux1 = params.pe * prod(crowd, cos3) - params.de * (
        prod(omr3, fx1) + prod(f, _broadcast3(grid, rx1))
    )
    flux2 = params.pe * prod(crowd, sin3) - params.de * (
        prod(omr3, fx2) + prod(f, _broadcast3(grid, rx2))
    )
    div = spectral.fft_derivative(flux1, 0, 1) + spectral.fft_derivative(flux2, 1, 1)
    return -div + dtheta2(grid, f)


def _stiff_multiplier(shape, de: float, spatial_axes, theta_axis, dt: float):
    """exp(dt * Lhat) for Lhat = -de*|k_x|^2 - k_theta^2 in FFT layout."""
    lam = np.zeros(shape)
    for ax in spatial_axes:
        k = spectral.wavenumbers(shape[ax])
        sh = [1] * len(shape)
        sh[ax] = shape[ax]
        lam = lam - de * (k.reshape(sh)) ** 2
    if theta_axis is not None:
        k = spectral.wavenumbers(shape[theta_axis])
        sh = [1] * len(shape)
        sh[theta_axis] = shape[theta_axis]
        lam = lam - (k.reshape(sh)) ** 2
    return np.exp(dt * lam)


class IntegratingFactorHeun:
    """Second-order stepper for dt y = L y + N(y, t) with diagonal L.

    The linear part is advanced by its exact exponential; constants in the
    kernel of L and zero-mean nonlinearities are therefore preserved
    exactly.
    """

    def __init__(self, exp_multiplier: np.ndarray, nonlinear, dt: float):
        self.exp = exp_multiplier
        self.nonlinear = nonlinear
        self.dt = dt

    def step(self, y: np.ndarray, t: float) -> np.ndarray:
        dt = self.dt
        yhat = np.fft.fftn(y, norm="forward")
        n1 = np.fft.fftn(self.nonlinear(y, t), norm="forward")
        pred = np.fft.ifftn(self.exp * (yhat + dt * n1), norm="forward").real
        n2 = np.fft.fftn(self.nonlinear(pred, t + dt), norm="forward")
        out = self.exp * yhat + 0.5 * dt * (self.exp * n1 + n2)
        return np.fft.ifftn(out, norm="forward").real


def _stability_dt(grid: GridSpec, params: ModelParams, cfl: float) -> float:
    hmin = min(grid.hx, grid.hy)
    adv = hmin / max(abs(params.pe), 1e-12)
    diff = hmin**2 / (2.0 * params.de)
    return cfl * min(adv, diff)


def step_primal(grid: GridSpec, f: np.ndarray, dt: float,
                config: PrimalRunConfig) -> np.ndarray:
    """Single step (fresh stepper; runs reuse one stepper internally)."""
    stepper = _make_stepper(grid, config, dt)
    return stepper.step(f, 0.0)


def _make_stepper(grid: GridSpec, config: PrimalRunConfig, dt: float):
    params = config.params
    if config.imex:
        emul = _stiff_multiplier(grid.shape, params.de, (0, 1), 2, dt)

        def nonlinear(y, t):
            stiff = params.de * laplacian_x(grid, y) + dtheta2(grid, y)
            return rhs_primal(grid, y, params) - stiff
    else:
        emul = np.ones(grid.shape)

        def nonlinear(y, t):
            return rhs_primal(grid, y, params)

    return IntegratingFactorHeun(emul, nonlinear, dt)


def _check_finite(f: np.ndarray, t: float):
    mx = float(np.max(np.abs(f)))
    if not np.isfinite(mx) or mx > 1e10:
        raise BlowupDetected(f"primal state blew up at t = {t}: max |f| = {mx}",
                             t=t, max_abs=mx)


def run_primal(grid: GridSpec, f0: np.ndarray, config: PrimalRunConfig) -> PrimalResult:
    dt = config.dt if config.dt is not None else _stability_dt(
        grid, config.params, config.cfl)
    nsteps = max(1, int(np.ceil(config.t_final / dt - 1e-12)))
    dt = config.t_final / nsteps
    snap_every = config.snap_every or config.t_final
    snap_stride = max(1, int(round(snap_every / dt)))

    stepper = _make_stepper(grid, config, dt)
    f = np.array(f0, dtype=float)
    result = PrimalResult(times=[0.0], snapshots=[f.copy()],
                          rhos=[marginal_rho(grid, f)])
    max_rho = float(np.max(result.rhos[0]))
    for n in range(nsteps):
        t = n * dt
        f = stepper.step(f, t)
        if config.clamp is not None and np.min(f) < config.clamp:
            f = np.maximum(f, config.clamp)
            result.certified = False
        _check_finite(f, t + dt)
        if (n + 1) % snap_stride == 0 or n + 1 == nsteps:
            rho = marginal_rho(grid, f)
            max_rho = max(max_rho, float(np.max(rho)))
            result.times.append((n + 1) * dt)
            result.snapshots.append(f.copy())
            result.rhos.append(rho)
    result.max_rho_seen = max_rho
    return result


def run_rho_drift(grid: GridSpec, rho0: np.ndarray, p_source,
                  params: ModelParams, t_final: float, dt: float):
    """2-D drift-diffusion for the marginal:

        dt rho + Pe div((1-rho) p) = De Lap rho.

    p_source is None (drift dropped) or a sequence of (p1, p2) pairs at the
    step times 0..nsteps; with Pe = 0 this is the exact heat equation.
    Returns (times, list of rho arrays at every step).
    """
    nsteps = max(1, int(np.ceil(t_final / dt - 1e-12)))
    dt = t_final / nsteps
    if p_source is not None and len(p_source) != nsteps + 1:
        raise ConfigError(
            f"p_source has {len(p_source)} entries, need {nsteps + 1}"
        )
    shape = grid.shape2d
    emul = _stiff_multiplier(shape, params.de, (0, 1), None, dt)

    def nonlinear(rho, t):
        if p_source is None or params.pe == 0.0:
            return np.zeros(shape)
        i = int(round(t / dt))
        p1, p2 = p_source[min(i, nsteps)]
        omr = 1.0 - rho
        q1 = spectral.dealiased_product(omr, p1)
        q2 = spectral.dealiased_product(omr, p2)
        return -params.pe * (
            spectral.fft_derivative(q1, 0, 1) + spectral.fft_derivative(q2, 1, 1)
        )

    stepper = IntegratingFactorHeun(emul, nonlinear, dt)
    rho = np.array(rho0, dtype=float)
    times = [0.0]
    traj = [rho.copy()]
    for n in range(nsteps):
        rho = stepper.step(rho, n * dt)
        _check_finite(rho, (n + 1) * dt)
        times.append((n + 1) * dt)
        traj.append(rho.copy())
    return times, traj
