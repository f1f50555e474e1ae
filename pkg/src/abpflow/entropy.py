"""Dictionary between the density f and the entropy variable u.

u = log f - log(1 - rho) is the first variation of

    E[f] = int_Y ( f log f + (1 - rho) log(1 - rho) ) dxi,

and the inverse map f = e^u / (1 + S), rho = S / (1 + S) with
S(x) = int_0^{2pi} e^u dtheta enforces f > 0 and rho < 1 for every finite
u (boundedness by entropy).  All exponentials are log-sum-exp shifted by
m(x) = max_theta u so large |u| never overflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateState, NonPositiveDelta
from .grid import GridSpec, grad_theta, grad_x, integrate, marginal_rho
from .params import ModelParams

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class MobilityDiag:
    """Diagonal blocks of the mobility: spatial = De*f*(1-rho), angular = f."""

    spatial: np.ndarray
    angular: np.ndarray


def _worst_node(values: np.ndarray, minimize: bool):
    idx = int(np.argmin(values) if minimize else np.argmax(values))
    node = np.unravel_index(idx, values.shape)
    return node, float(values.flat[idx])


def to_entropy_var(grid: GridSpec, f: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """u = log f - log(1 - rho); requires f > 0 and rho < 1 strictly."""
    if np.min(f) <= 0.0:
        node, value = _worst_node(f, minimize=True)
        raise DegenerateState(f"f must be > 0; min f = {value} at {node}", node, value)
    if np.max(rho) >= 1.0:
        node, value = _worst_node(rho, minimize=False)
        raise DegenerateState(
            f"rho must be < 1; max rho = {value} at {node}", node, value
        )
    return np.log(f) - np.log1p(-rho)[:, :, None]


def from_entropy_var_parts(grid: GridSpec, u: np.ndarray):
    """(f, rho, 1-rho) from u; 1-rho is returned separately because it stays
    strictly positive in floating point even when rho rounds to 1."""
    if not np.all(np.isfinite(u)):
        raise DegenerateState("entropy variable contains non-finite entries")
    m = np.max(u, axis=2, keepdims=True)
    w = np.exp(u - m)
    q = np.sum(w, axis=2, keepdims=True) * grid.htheta
    log_s = m + np.log(q)
    log_omr = -np.logaddexp(0.0, log_s)  # log(1/(1+S))
    one_minus_rho = np.exp(log_omr)[:, :, 0]
    rho = -np.expm1(log_omr)[:, :, 0]
    f = w * np.exp(m + log_omr)
    return f, rho, one_minus_rho


def from_entropy_var(grid: GridSpec, u: np.ndarray):
    f, rho, _ = from_entropy_var_parts(grid, u)
    return f, rho


def _xlogx(s: np.ndarray, what: str) -> np.ndarray:
    """s*log(s) with the 0*log(0) = 0 convention on [-1e-12, 0]."""
    if np.min(s) < -1e-12:
        node, value = _worst_node(s, minimize=True)
        raise DegenerateState(f"{what} negative beyond tolerance: {value} at {node}",
                              node, value)
    out = np.zeros_like(s)
    pos = s > 0.0
    out[pos] = s[pos] * np.log(s[pos])
    return out


def _entropy_terms(grid: GridSpec, f: np.ndarray, rho: np.ndarray | None):
    if rho is None:
        rho = marginal_rho(grid, f)
    if np.max(rho) > 1.0 + 1e-12:
        node, value = _worst_node(rho, minimize=False)
        raise DegenerateState(f"rho exceeds 1: {value} at {node}", node, value)
    term_f = integrate(grid, _xlogx(f, "f"))
    term_rho = integrate(grid, _xlogx(np.clip(1.0 - rho, 0.0, None), "1-rho"))
    return term_f, term_rho


def entropy(grid: GridSpec, f: np.ndarray, rho: np.ndarray | None = None) -> float:
    """E[f] = int_Y f log f dxi + int_Omega (1-rho) log(1-rho) dx.

    The crowding term is a spatial integral: this is the normalization for
    which u = log f - log(1-rho) is the first variation and E* below is the
    convex conjugate (the Fenchel-Young identity pins it down numerically).
    See entropy_upsilon for the variant that weights the crowding term by
    the full angular measure.
    """
    term_f, term_rho = _entropy_terms(grid, f, rho)
    return term_f + term_rho


def entropy_upsilon(grid: GridSpec, f: np.ndarray,
                    rho: np.ndarray | None = None) -> float:
    """Variant integrating the theta-independent crowding term over the
    full domain (an extra factor 2*pi); differs from entropy() by
    (2*pi - 1) * int (1-rho) log(1-rho) dx and is not the potential of u."""
    term_f, term_rho = _entropy_terms(grid, f, rho)
    return term_f + TWO_PI * term_rho


def conjugate(grid: GridSpec, u: np.ndarray) -> float:
    """E*[u] = int_Omega log(1 + int e^u dtheta) dx, log-sum-exp stabilized."""
    m = np.max(u, axis=2, keepdims=True)
    q = np.sum(np.exp(u - m), axis=2, keepdims=True) * grid.htheta
    log_s = (m + np.log(q))[:, :, 0]
    return integrate(grid, np.logaddexp(0.0, log_s))


def mobility(grid: GridSpec, u: np.ndarray, params: ModelParams) -> MobilityDiag:
    f, _, one_minus_rho = from_entropy_var_parts(grid, u)
    return MobilityDiag(
        spatial=params.de * f * one_minus_rho[:, :, None],
        angular=f,
    )


def hessian_apply(grid: GridSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """A(u)[v] = e^u/(1+S) v - e^u/(1+S)^2 int e^u v dtheta = f v - f int f v dtheta.

    Symmetric positive semidefinite and linear in v.
    """
    f, _, _ = from_entropy_var_parts(grid, u)
    fv_mean = np.sum(f * v, axis=2, keepdims=True) * grid.htheta
    return f * v - f * fv_mean


def dissipation(grid: GridSpec, f: np.ndarray, params: ModelParams) -> float:
    """F[f] = int De f(1-rho)|grad_x u|^2 + f|d_theta u|^2 with u = E'[f]."""
    rho = marginal_rho(grid, f)
    u = to_entropy_var(grid, f, rho)
    ux1, ux2 = grad_x(grid, u)
    ut = grad_theta(grid, u)
    spatial = params.de * f * (1.0 - rho)[:, :, None] * (ux1**2 + ux2**2)
    angular = f * ut**2
    return integrate(grid, spatial + angular)


def _zeta(s: np.ndarray) -> np.ndarray:
    return s * (np.log(s) - 1.0) + 1.0


def gajewski_distance(grid: GridSpec, f1: np.ndarray, f2: np.ndarray,
                      delta: float) -> float:
    """d_delta(f1, f2) built from zeta(s) = s(log s - 1) + 1 shifted by delta.

    Nonnegative by convexity; bounds ||f1-f2||_{L2}^2 / 8 from below in the
    density ranges the model produces.
    """
    if delta <= 0:
        raise NonPositiveDelta(f"delta must be > 0, got {delta}")
    for name, f in (("f1", f1), ("f2", f2)):
        if np.min(f) < 0.0:
            node, value = _worst_node(f, minimize=True)
            raise DegenerateState(f"{name} negative: {value} at {node}", node, value)
    gap = _zeta(f1 + delta) + _zeta(f2 + delta) - 2.0 * _zeta(0.5 * (f1 + f2) + delta)
    return integrate(grid, gap)
