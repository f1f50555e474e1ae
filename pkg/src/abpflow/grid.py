"""Periodic grids, discrete fields, quadrature, marginals, snapshot I/O.

All axes live on (0, 2*pi) with nodes j*h, j = 0..n-1, no duplicated
endpoint.  3-D arrays are indexed (x1, x2, theta) with theta fastest
varying in memory (C order).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import spectral
from .errors import ConfigError

TWO_PI = 2.0 * np.pi

SNAPSHOT_MAGIC = b"ABPF"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid sizes; every axis has length 2*pi."""

    nx: int
    ny: int
    ntheta: int

    def __post_init__(self):
        for name, n in (("nx", self.nx), ("ny", self.ny), ("ntheta", self.ntheta)):
            if n < 4 or n % 2 != 0:
                raise ConfigError(f"{name} = {n}: grid sizes must be even and >= 4")

    @property
    def shape(self):
        return (self.nx, self.ny, self.ntheta)

    @property
    def shape2d(self):
        return (self.nx, self.ny)

    @property
    def hx(self):
        return TWO_PI / self.nx

    @property
    def hy(self):
        return TWO_PI / self.ny

    @property
    def htheta(self):
        return TWO_PI / self.ntheta

    @property
    def cell_volume(self):
        return self.hx * self.hy * self.htheta

    @property
    def x1(self):
        return np.arange(self.nx) * self.hx

    @property
    def x2(self):
        return np.arange(self.ny) * self.hy

    @property
    def theta(self):
        return np.arange(self.ntheta) * self.htheta

    def meshgrid(self):
        return np.meshgrid(self.x1, self.x2, self.theta, indexing="ij")


def _check_shape(grid: GridSpec, values: np.ndarray):
    if values.shape not in (grid.shape, grid.shape2d):
        raise ConfigError(
            f"field shape {values.shape} does not match grid {grid.shape}"
        )


# ---------------------------------------------------------------------------
# quadrature and moments
# ---------------------------------------------------------------------------

def integrate(grid: GridSpec, values: np.ndarray) -> float:
    """Rectangle-rule integral over the full domain of the array (3-D or 2-D)."""
    _check_shape(grid, values)
    if values.ndim == 3:
        return float(np.sum(values) * grid.cell_volume)
    return float(np.sum(values) * grid.hx * grid.hy)


def marginal_rho(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    """Angle marginal rho(x) = int_0^{2pi} f dtheta by the rectangle rule."""
    _check_shape(grid, f)
    return np.sum(f, axis=2) * grid.htheta


def polarization(grid: GridSpec, f: np.ndarray):
    """First angular moment p = int f e(theta) dtheta; returns (p1, p2)."""
    _check_shape(grid, f)
    theta = grid.theta
    p1 = np.sum(f * np.cos(theta), axis=2) * grid.htheta
    p2 = np.sum(f * np.sin(theta), axis=2) * grid.htheta
    return p1, p2


def total_mass(grid: GridSpec, f: np.ndarray) -> float:
    return integrate(grid, f)


def lp_norm(grid: GridSpec, values: np.ndarray, p: float) -> float:
    """L^p norm of a 3-D or 2-D field by the rectangle rule."""
    if p < 1:
        raise ConfigError(f"lp_norm requires p >= 1, got {p}")
    if values.ndim == 3:
        vol = grid.cell_volume
    else:
        vol = grid.hx * grid.hy
    return float((np.sum(np.abs(values) ** p) * vol) ** (1.0 / p))


# ---------------------------------------------------------------------------
# spectral differentiation
# ---------------------------------------------------------------------------

def grad_x(grid: GridSpec, values: np.ndarray):
    """Spatial gradient (d/dx1, d/dx2) of a 3-D or 2-D field."""
    return (
        spectral.fft_derivative(values, 0, 1),
        spectral.fft_derivative(values, 1, 1),
    )


def grad_theta(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    return spectral.fft_derivative(values, 2, 1)


def laplacian_x(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    return spectral.fft_derivative(values, 0, 2) + spectral.fft_derivative(values, 1, 2)


def dtheta2(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    return spectral.fft_derivative(values, 2, 2)


def transform_forward(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """Real trigonometric tensor coefficients (same shape as the field)."""
    _check_shape(grid, values)
    return spectral.trig_forward(values)


def transform_inverse(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    _check_shape(grid, coeffs)
    return spectral.trig_inverse(coeffs)


# ---------------------------------------------------------------------------
# binary snapshot format
# ---------------------------------------------------------------------------

def write_snapshot(path, grid: GridSpec, values: np.ndarray):
    """Write one field: magic 'ABPF', u32 version, u32 nx ny ntheta, f64 data.

    2-D fields are stored with ntheta = 1.
    """
    _check_shape(grid, values)
    if values.ndim == 2:
        nx, ny, ntheta = grid.nx, grid.ny, 1
    else:
        nx, ny, ntheta = grid.shape
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IIII", SNAPSHOT_VERSION, nx, ny, ntheta))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_snapshot(path):
    """Read a snapshot; returns (nx, ny, ntheta, values array)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}")
        version, nx, ny, ntheta = struct.unpack("<IIII", fh.read(16))
        if version != SNAPSHOT_VERSION:
            raise ConfigError(f"{path}: unsupported snapshot version {version}")
        data = np.frombuffer(fh.read(8 * nx * ny * ntheta), dtype="<f8")
    if data.size != nx * ny * ntheta:
        raise ConfigError(f"{path}: truncated snapshot")
    shape = (nx, ny, ntheta) if ntheta > 1 else (nx, ny)
    return nx, ny, ntheta, data.reshape(shape).astype(float)
