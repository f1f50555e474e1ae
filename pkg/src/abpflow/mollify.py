"""Regularized initial data (f0_eps, rho0_eps, u0_eps).

The product mollifier eta_eps(x, theta) = alpha_eps(x1) alpha_eps(x2)
beta_eps(theta) uses the standard compactly supported bump; the spatial
half-width is eps and the angular one eps^gamma with gamma > 2.  The
regularization

    f0_eps = eps/(4 pi) + (1 - eps) * (eta_eps * f0)

pushes the data strictly inside the admissible set:
f0_eps >= eps/(4 pi) and eps/2 <= 1 - rho0_eps <= 1 - eps/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropy import entropy, to_entropy_var
from .errors import ConfigError, DegenerateState, WidthTooLarge
from .grid import GridSpec, integrate, lp_norm, marginal_rho

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class MollifierSpec:
    epsilon: float
    gamma: float = 3.0

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigError(f"epsilon must lie in (0,1), got {self.epsilon}")
        if self.gamma <= 2.0:
            raise ConfigError(f"gamma must be > 2, got {self.gamma}")

    @property
    def spatial_width(self):
        return self.epsilon

    @property
    def angular_width(self):
        return self.epsilon**self.gamma


def bump_kernel_1d(width: float, n: int) -> np.ndarray:
    """Periodized samples of exp(-1/(1-(s/width)^2)) on |s| < width,
    normalized to unit rectangle-rule mass."""
    if width >= TWO_PI:
        raise WidthTooLarge(f"kernel width {width} >= 2*pi")
    if width <= 0:
        raise ConfigError(f"kernel width must be > 0, got {width}")
    h = TWO_PI / n
    x = np.arange(n) * h
    kernel = np.zeros(n)
    for shift in (-TWO_PI, 0.0, TWO_PI):
        s = x + shift
        inside = np.abs(s) < width
        r2 = np.zeros_like(s)
        r2[inside] = (s[inside] / width) ** 2
        vals = np.zeros_like(s)
        vals[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
        kernel += vals
    mass = np.sum(kernel) * h
    if mass <= 0:
        # width below the grid resolution: fall back to a discrete delta,
        # which is the rectangle-rule limit of the kernel
        kernel = np.zeros(n)
        kernel[0] = 1.0 / h
        return kernel
    return kernel / mass


def _periodic_convolve(grid: GridSpec, f: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """(eta * f)(x) = int eta(x-y) f(y) dy via transforms, rectangle rule."""
    spec = np.fft.fftn(f) * np.fft.fftn(kernel)
    return np.fft.ifftn(spec).real * grid.cell_volume


def product_kernel(grid: GridSpec, spec: MollifierSpec) -> np.ndarray:
    kx = bump_kernel_1d(spec.spatial_width, grid.nx)
    ky = bump_kernel_1d(spec.spatial_width, grid.ny)
    kt = bump_kernel_1d(spec.angular_width, grid.ntheta)
    return kx[:, None, None] * ky[None, :, None] * kt[None, None, :]


def regularize_initial(grid: GridSpec, f0: np.ndarray, spec: MollifierSpec):
    """Returns (f0_eps, rho0_eps, u0_eps) with the admissibility bounds
    asserted: f0_eps >= eps/(4 pi), eps/2 <= 1 - rho0_eps <= 1 - eps/2."""
    if np.min(f0) < -1e-12:
        idx = int(np.argmin(f0))
        raise DegenerateState(f"f0 negative: min = {np.min(f0)} at flat index {idx}")
    rho0 = marginal_rho(grid, f0)
    if np.max(rho0) > 1.0 + 1e-12:
        raise DegenerateState(f"rho0 exceeds 1: max = {np.max(rho0)}")
    eps = spec.epsilon
    smoothed = _periodic_convolve(grid, np.clip(f0, 0.0, None),
                                  product_kernel(grid, spec))
    # tiny negative lobes can appear at roundoff level only
    smoothed = np.clip(smoothed, 0.0, None)
    f0_eps = eps / (2.0 * TWO_PI) + (1.0 - eps) * smoothed
    rho0_eps = marginal_rho(grid, f0_eps)
    omr = 1.0 - rho0_eps
    if np.min(f0_eps) < eps / (2.0 * TWO_PI) - 1e-12:
        raise DegenerateState(
            f"mollified f below eps/(4 pi): min = {np.min(f0_eps)}"
        )
    if np.min(omr) < eps / 2.0 - 1e-12 or np.max(omr) > 1.0 - eps / 2.0 + 1e-12:
        raise DegenerateState(
            f"1 - rho0_eps outside [eps/2, 1-eps/2]: range "
            f"[{np.min(omr)}, {np.max(omr)}]"
        )
    u0_eps = to_entropy_var(grid, f0_eps, rho0_eps)
    return f0_eps, rho0_eps, u0_eps


def initial_entropy_budget(grid: GridSpec, f0_eps: np.ndarray, u0_eps: np.ndarray,
                           epsilon: float) -> float:
    """E[f0_eps] + eps * ||u0_eps||^2_{L2}; bounded along eps-sweeps."""
    return entropy(grid, f0_eps) + epsilon * lp_norm(grid, u0_eps, 2.0) ** 2
