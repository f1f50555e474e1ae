"""Per-snapshot estimate quantities, inequality ledgers, and the
interpolation checker.

Conventions: theta-independent squared-norm columns (the rho-based ones)
are recorded as full-domain L2 norms of the theta-constant extension,
i.e. the spatial integral times 2*pi, matching the entropy convention.
Square-root derivatives are computed as d sqrt(f + eta) with the floor
eta = 1e-14 reported per row.  Time integrals in ledgers use the
trapezoid rule on the snapshot times.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .errors import MismatchedTrajectories, NonPositiveDelta
from .grid import (GridSpec, grad_theta, grad_x, integrate, lp_norm,
                   marginal_rho, polarization)
from .entropy import gajewski_distance
from .params import ModelParams

TWO_PI = 2.0 * np.pi
SQRT_FLOOR = 1e-14


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    entropy: float
    eps_u_sq: float
    mass_f: float
    mass_eps_u_plus_f: float
    min_f: float
    min_rho: float
    max_rho: float
    dissipation: float
    dtheta_sqrt_f_sq: float
    grad_sqrt_omr_sq: float
    sqrt_omr_grad_sqrt_f_sq: float
    grad_rho_sq: float
    f_l3: float
    sqrt_omr_f_l10_3: float
    max_p: float
    eps_grad_u_sq: float
    eta_floor: float


CSV_COLUMNS = [f.name for f in dc_fields(DiagnosticsRow)]


def _xlogx_clipped(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    pos = s > 0.0
    out[pos] = s[pos] * np.log(s[pos])
    return out


def _entropy_clipped(grid: GridSpec, f: np.ndarray, rho: np.ndarray) -> float:
    # conjugate-consistent normalization: crowding term over Omega only
    term_f = integrate(grid, _xlogx_clipped(np.clip(f, 0.0, None)))
    term_r = integrate(grid, _xlogx_clipped(np.clip(1.0 - rho, 0.0, None)))
    return term_f + term_r


def record(grid: GridSpec, f: np.ndarray, rho: np.ndarray,
           u_or_none: np.ndarray | None, epsilon: float, t: float,
           params: ModelParams) -> DiagnosticsRow:
    """All estimate columns for one snapshot; never raises."""
    eta = SQRT_FLOOR
    omr = 1.0 - rho
    f_pos = np.clip(f, 0.0, None)
    omr_pos = np.clip(omr, 0.0, None)

    # dissipation with floored logs (identical to entropy.dissipation on
    # strictly admissible fields)
    u_safe = np.log(f_pos + eta) - np.log(omr_pos + eta)[:, :, None]
    ux1, ux2 = grad_x(grid, u_safe)
    ut = grad_theta(grid, u_safe)
    diss = integrate(
        grid,
        params.de * f_pos * omr_pos[:, :, None] * (ux1**2 + ux2**2)
        + f_pos * ut**2,
    )

    sqrt_f = np.sqrt(f_pos + eta)
    dth = grad_theta(grid, sqrt_f)
    dtheta_sqrt_f_sq = integrate(grid, dth**2)

    sqrt_omr = np.sqrt(omr_pos + eta)
    gx1, gx2 = grad_x(grid, sqrt_omr)
    grad_sqrt_omr_sq = TWO_PI * integrate(grid, gx1**2 + gx2**2)

    sx1, sx2 = grad_x(grid, sqrt_f)
    sqrt_omr_grad_sqrt_f_sq = integrate(
        grid, omr_pos[:, :, None] * (sx1**2 + sx2**2))

    rx1, rx2 = grad_x(grid, rho)
    grad_rho_sq = TWO_PI * integrate(grid, rx1**2 + rx2**2)

    p1, p2 = polarization(grid, f)
    max_p = float(np.max(np.sqrt(p1**2 + p2**2)))

    mass_f = integrate(grid, f)
    if u_or_none is not None:
        u = u_or_none
        eps_u_sq = epsilon * integrate(grid, u**2)
        mass_eps = integrate(grid, epsilon * u + f)
        vx1, vx2 = grad_x(grid, u)
        vt = grad_theta(grid, u)
        eps_grad_u_sq = epsilon * integrate(grid, vx1**2 + vx2**2 + vt**2)
    else:
        eps_u_sq = 0.0
        mass_eps = mass_f
        eps_grad_u_sq = 0.0

    return DiagnosticsRow(
        t=t,
        entropy=_entropy_clipped(grid, f, rho),
        eps_u_sq=eps_u_sq,
        mass_f=mass_f,
        mass_eps_u_plus_f=mass_eps,
        min_f=float(np.min(f)),
        min_rho=float(np.min(rho)),
        max_rho=float(np.max(rho)),
        dissipation=diss,
        dtheta_sqrt_f_sq=dtheta_sqrt_f_sq,
        grad_sqrt_omr_sq=grad_sqrt_omr_sq,
        sqrt_omr_grad_sqrt_f_sq=sqrt_omr_grad_sqrt_f_sq,
        grad_rho_sq=grad_rho_sq,
        f_l3=lp_norm(grid, f, 3.0),
        sqrt_omr_f_l10_3=lp_norm(grid, np.sqrt(np.clip(
            omr_pos[:, :, None] * f_pos, 0.0, None)), 10.0 / 3.0),
        max_p=max_p,
        eps_grad_u_sq=eps_grad_u_sq,
        eta_floor=eta,
    )


# ---------------------------------------------------------------------------
# ledgers
# ---------------------------------------------------------------------------

@dataclass
class LedgerCheck:
    name: str
    passed: bool
    worst_margin: float
    t_worst: float
    asserted: bool = True  # False = reported but not a pass/fail requirement


@dataclass
class LedgerReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)


def _trapezoid_cumulative(ts: np.ndarray, vals: np.ndarray) -> np.ndarray:
    out = np.zeros_like(vals)
    if len(ts) > 1:
        inc = 0.5 * (vals[1:] + vals[:-1]) * np.diff(ts)
        out[1:] = np.cumsum(inc)
    return out


def entropy_ledger(rows, epsilon: float, pe: float) -> LedgerReport:
    """Cumulative entropy inequality (and plain monotonicity at Pe = 0)."""
    ts = np.array([r.t for r in rows])
    lya = np.array([r.entropy + 0.5 * r.eps_u_sq for r in rows])
    diss = np.array([r.dissipation for r in rows])
    grad_u = np.array([r.eps_grad_u_sq for r in rows])
    mass = np.array([r.mass_f for r in rows])
    tol = 1e-6 * (1.0 + abs(rows[0].entropy))

    diss_weight = 1.0 if pe == 0.0 else 0.5
    cum = _trapezoid_cumulative(ts, grad_u + diss_weight * diss)
    budget = np.zeros_like(ts) if pe == 0.0 else (
        0.5 * pe**2 * _trapezoid_cumulative(ts, mass))
    # margin >= -tol required: LHS <= RHS + tol
    margin = (lya[0] + budget + tol) - (lya + cum)
    i = int(np.argmin(margin))
    checks = [LedgerCheck(
        name="cumulative_entropy_budget" if pe != 0.0 else "cumulative_entropy",
        passed=bool(margin[i] >= 0.0),
        worst_margin=float(margin[i]),
        t_worst=float(ts[i]),
    )]
    if pe == 0.0:
        dmono = (lya[:-1] + tol) - lya[1:]
        if len(dmono):
            j = int(np.argmin(dmono))
            checks.append(LedgerCheck(
                name="monotone_lyapunov",
                passed=bool(dmono[j] >= 0.0),
                worst_margin=float(dmono[j]),
                t_worst=float(ts[j + 1]),
            ))
    return LedgerReport(checks=checks)


def check_interpolation(grid: GridSpec, v_traj: np.ndarray, m: float, p: float,
                        dt: float):
    """Angular interpolation ratio: LHS = ||v||_{L^q} over time-space-angle with
    q = p(m+1); RHS = sup_{t,x} ||v(t,x,.)||_{L^m(0,2pi)} + ||d_theta v||_{L^p}.

    v_traj has the snapshot axis first; time quadrature is the rectangle
    rule with spacing dt.  Returns (ratio, lhs, rhs).
    """
    if m < 1 or p < 1:
        raise NonPositiveDelta(f"m, p must be >= 1, got ({m}, {p})")
    q = p * (m + 1)
    vol = grid.cell_volume
    av = np.abs(v_traj)
    lhs = float((np.sum(av**q) * vol * dt) ** (1.0 / q))
    sup_lm = float(np.max(
        (np.sum(av**m, axis=3) * grid.htheta) ** (1.0 / m)))
    dth = np.stack([grad_theta(grid, v) for v in v_traj])
    lp_t = float((np.sum(np.abs(dth) ** p) * vol * dt) ** (1.0 / p))
    rhs = sup_lm + lp_t
    if not (np.isfinite(lhs) and np.isfinite(rhs)):
        raise MismatchedTrajectories("non-finite interpolation norms")
    return lhs / rhs, lhs, rhs


def gajewski_monitor(grid: GridSpec, traj1, traj2, times1, times2,
                     delta: float, pe: float) -> tuple[np.ndarray, LedgerReport]:
    """Time series of d_delta(f1, f2) with a monotonicity verdict (asserted
    only at Pe = 0, where the distance is provably non-increasing)."""
    if len(traj1) != len(traj2) or list(times1) != list(times2):
        raise MismatchedTrajectories("snapshot times differ")
    for a, b in zip(traj1, traj2):
        if a.shape != b.shape or a.shape != grid.shape:
            raise MismatchedTrajectories("grid shapes differ")
    series = np.array([
        gajewski_distance(grid, a, b, delta) for a, b in zip(traj1, traj2)
    ])
    tol = 1e-6 * series[0] if series[0] > 0 else 1e-6
    dmono = (series[:-1] + tol) - series[1:]
    if len(dmono):
        j = int(np.argmin(dmono))
        check = LedgerCheck(
            name="gajewski_monotone",
            passed=bool(dmono[j] >= 0.0),
            worst_margin=float(dmono[j]),
            t_worst=float(times1[j + 1]),
            asserted=(pe == 0.0),
        )
    else:
        check = LedgerCheck("gajewski_monotone", True, 0.0, 0.0, pe == 0.0)
    return series, LedgerReport(checks=[check])


# ---------------------------------------------------------------------------
# CSV output (17 significant digits, fixed column order)
# ---------------------------------------------------------------------------

def write_rows_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([f"{getattr(r, c):.17g}" for c in CSV_COLUMNS])


def read_rows_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(DiagnosticsRow(**{k: float(v) for k, v in rec.items()}))
    return rows


def write_ledger_csv(path, report: LedgerReport):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["inequality", "passed", "worst_margin", "t_worst",
                         "asserted"])
        for c in report.checks:
            writer.writerow([c.name, int(c.passed), f"{c.worst_margin:.17g}",
                             f"{c.t_worst:.17g}", int(c.asserted)])
