"""Physical model parameters and the drift field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import GridSpec


@dataclass(frozen=True)
class ModelParams:
    """Peclet number and effective spatial diffusivity."""

    pe: float = 0.0
    de: float = 1.0

    def __post_init__(self):
        if self.de <= 0:
            raise ConfigError(f"de must be > 0, got {self.de}")
        if not np.isfinite(self.pe):
            raise ConfigError("pe must be finite")


def drift_components(grid: GridSpec, params: ModelParams):
    """V(x, theta) = (-Pe cos(theta), -Pe sin(theta), 0); the two nonzero
    components broadcast over theta."""
    theta = grid.theta
    v1 = -params.pe * np.cos(theta)
    v2 = -params.pe * np.sin(theta)
    return v1[None, None, :], v2[None, None, :]
