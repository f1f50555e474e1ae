"""Built-in acceptance suite: twelve structural checks at desk scale.

Each check returns a CriterionResult and prints nothing; the CLI `verify`
subcommand and the test suite both call these, so CI and readers run the
same oracle.  `size = "small"` trims repetition counts and horizons where
nothing pins them; `size = "full"` uses the stated parameters everywhere.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import spectral
from .diagnostics import check_interpolation, entropy_ledger, gajewski_monitor, record
from .dual import DualRunConfig, TrigBasis, run_dual
from .entropy import gajewski_distance
from .grid import GridSpec, grad_theta, grad_x, integrate, lp_norm, marginal_rho
from .mollify import MollifierSpec, initial_entropy_budget, regularize_initial
from .params import ModelParams
from .primal import PrimalRunConfig, run_primal, run_rho_drift
from .stationary import (ConstantState, apply_G, fp_constants, gamma_iterate,
                         linearized_mode_rates, measured_mode_rate, solve_S)

TWO_PI = 2.0 * np.pi


@dataclass
class CriterionResult:
    index: int
    name: str
    passed: bool
    detail: str
    elapsed: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"criterion {self.index:2d} [{verdict}] {self.name}: "
                f"{self.detail} ({self.elapsed:.1f} s)")


def _timed(index, name, fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return CriterionResult(index, name, passed, detail,
                           time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# data generators (deterministic per seed)
# ---------------------------------------------------------------------------

def band_limited(grid: GridSpec, rng, kmax: int = 2,
                 amplitude: float = 1.0) -> np.ndarray:
    """Random real field supported on modes |k_i| <= kmax, sup-normalized."""
    basis = TrigBasis(grid, kmax)
    coeffs = rng.standard_normal(basis.dim)
    v = basis.synthesize(coeffs)
    return amplitude * v / np.max(np.abs(v))


def random_initial(grid: GridSpec, rng, rho_max: float = 0.6) -> np.ndarray:
    """Random smooth strictly positive f0 with max rho0 = rho_max."""
    v = band_limited(grid, rng, kmax=2, amplitude=0.8)
    f0 = 1.0 + v
    rho0 = marginal_rho(grid, f0)
    return f0 * (rho_max / np.max(rho0))


# ---------------------------------------------------------------------------
# the twelve criteria
# ---------------------------------------------------------------------------

def criterion_1(size="full"):
    """Boundedness by entropy: dual snapshots keep f > 0, rho < 1 strictly."""
    def body():
        grid = GridSpec(16, 16, 16)
        n_data = 5 if size == "full" else 2
        worst_f, worst_r = np.inf, -np.inf
        for seed in range(n_data):
            rng = np.random.default_rng(100 + seed)
            f0 = random_initial(grid, rng)
            for pe in (0.0, 1.0):
                for eps in (0.1, 0.01):
                    cfg = DualRunConfig(params=ModelParams(pe=pe, de=1.0),
                                        epsilon=eps, kmax=3, grid=grid,
                                        t_final=0.03, snap_every=0.01)
                    res = run_dual(grid, f0, cfg)
                    for f, rho in zip(res.snapshots, res.rhos):
                        worst_f = min(worst_f, float(np.min(f)))
                        worst_r = max(worst_r, float(np.max(rho)))
        ok = worst_f > 0.0 and worst_r < 1.0
        return ok, f"min f = {worst_f:.3e} > 0, max rho = {worst_r:.6f} < 1"
    return _timed(1, "boundedness by entropy", body)


def criterion_2(size="full"):
    """Pe = 0 dissipation: Lyapunov non-increasing per snapshot interval."""
    def body():
        grid = GridSpec(16, 16, 16)
        rng = np.random.default_rng(2)
        f0 = random_initial(grid, rng)

        cfg = DualRunConfig(params=ModelParams(pe=0.0, de=1.0), epsilon=0.05,
                            kmax=3, grid=grid, t_final=0.05, snap_every=0.005)
        res = run_dual(grid, f0, cfg)
        tol = 1e-6 * (1.0 + abs(res.rows[0].entropy))
        lya = np.array([r.entropy + 0.5 * r.eps_u_sq for r in res.rows])
        dual_worst = float(np.max(np.diff(lya)))
        ok_dual = dual_worst <= tol

        f0e, _, _ = regularize_initial(grid, f0, MollifierSpec(0.05))
        pres = run_primal(grid, f0e, PrimalRunConfig(
            params=ModelParams(pe=0.0, de=1.0), grid=grid, t_final=0.1,
            dt=0.002, snap_every=0.01))
        ents = [record(grid, f, rho, None, 0.0, t, cfg.params).entropy
                for t, f, rho in zip(pres.times, pres.snapshots, pres.rhos)]
        tol_p = 1e-6 * (1.0 + abs(ents[0]))
        primal_worst = float(np.max(np.diff(ents)))
        ok = ok_dual and primal_worst <= tol_p
        return ok, (f"worst increments: dual {dual_worst:.3e} (tol {tol:.1e}),"
                    f" primal {primal_worst:.3e} (tol {tol_p:.1e})")
    return _timed(2, "entropy dissipation at Pe = 0", body)


def criterion_3(size="full"):
    """Pe != 0 cumulative entropy budget ledger passes."""
    def body():
        grid = GridSpec(16, 16, 16)
        rng = np.random.default_rng(3)
        f0 = random_initial(grid, rng)
        margins = []
        for pe in (0.5, 2.0):
            cfg = DualRunConfig(params=ModelParams(pe=pe, de=1.0),
                                epsilon=0.05, kmax=3, grid=grid,
                                t_final=0.05, snap_every=0.005)
            res = run_dual(grid, f0, cfg)
            report = entropy_ledger(res.rows, cfg.epsilon, pe)
            margins.append((pe, report.passed,
                            min(c.worst_margin for c in report.checks)))
        ok = all(p for _, p, _ in margins)
        detail = ", ".join(f"Pe={pe}: margin {m:.3e}" for pe, _, m in margins)
        return ok, detail
    return _timed(3, "entropy budget at Pe != 0", body)


def criterion_4(size="full"):
    """Mass conservation: primal total mass, dual int(eps u + f)."""
    def body():
        grid = GridSpec(16, 16, 16)
        rng = np.random.default_rng(4)
        f0 = random_initial(grid, rng)

        pres = run_primal(grid, f0, PrimalRunConfig(
            params=ModelParams(pe=1.0, de=1.0), grid=grid, t_final=0.1,
            dt=0.002, snap_every=0.01))
        m0 = integrate(grid, pres.snapshots[0])
        drift_p = max(abs(integrate(grid, f) - m0) for f in pres.snapshots)
        drift_p /= abs(m0)

        cfg = DualRunConfig(params=ModelParams(pe=0.5, de=1.0), epsilon=0.05,
                            kmax=3, grid=grid, t_final=0.05, snap_every=0.005)
        res = run_dual(grid, f0, cfg)
        inv = [r.mass_eps_u_plus_f for r in res.rows]
        drift_d = max(abs(v - inv[0]) for v in inv) / abs(inv[0])
        ok = drift_p <= 1e-10 and drift_d <= 1e-8
        return ok, (f"primal mass drift {drift_p:.3e} <= 1e-10, "
                    f"dual invariant drift {drift_d:.3e} <= 1e-8")
    return _timed(4, "mass conservation", body)


def criterion_5(size="full"):
    """Pe = 0 marginal solves the 2-D heat equation."""
    def body():
        grid = GridSpec(16, 16, 16)
        rng = np.random.default_rng(5)
        f0 = random_initial(grid, rng)
        rho0 = marginal_rho(grid, f0)
        t_final = 1.0 if size == "full" else 0.25
        dt = 0.01
        params = ModelParams(pe=0.0, de=1.0)
        pres = run_primal(grid, f0, PrimalRunConfig(
            params=params, grid=grid, t_final=t_final, dt=dt, snap_every=0.1))
        _, rtraj = run_rho_drift(grid, rho0, None, params, t_final, dt)
        nsteps = len(rtraj) - 1
        worst = 0.0
        for t, f in zip(pres.times, pres.snapshots):
            i = int(round(t / t_final * nsteps))
            worst = max(worst, lp_norm(grid, marginal_rho(grid, f) - rtraj[i], 2))
        bound = 1e-6 * lp_norm(grid, rho0, 2)
        return worst <= bound, f"worst L2 gap {worst:.3e} <= {bound:.3e}"
    return _timed(5, "heat-equation marginal", body)


def criterion_6(size="full"):
    """Gajewski distance: monotone at Pe = 0, lower-bounds L2 squared / 8."""
    def body():
        grid = GridSpec(16, 16, 16)
        rng = np.random.default_rng(6)
        f1 = random_initial(grid, rng)
        theta = grid.theta[None, None, :]
        # theta-redistribution with the same marginal rho0
        f2 = marginal_rho(grid, f1)[:, :, None] / TWO_PI \
            * (1.0 + 0.4 * np.cos(theta))
        params = ModelParams(pe=0.0, de=1.0)
        t_final = 0.5 if size == "full" else 0.2
        cfg = PrimalRunConfig(params=params, grid=grid, t_final=t_final,
                              dt=0.005, snap_every=0.05)
        r1 = run_primal(grid, f1, cfg)
        r2 = run_primal(grid, f2, cfg)
        delta = 1e-6
        series, rep = gajewski_monitor(grid, r1.snapshots, r2.snapshots,
                                       r1.times, r2.times, delta, params.pe)
        lower_ok = True
        worst_ratio = np.inf
        for d, a, b in zip(series, r1.snapshots, r2.snapshots):
            l2sq = lp_norm(grid, a - b, 2) ** 2
            worst_ratio = min(worst_ratio, d / (l2sq / 8.0))
            lower_ok = lower_ok and d >= l2sq / 8.0
        ok = rep.passed and lower_ok
        return ok, (f"monotone margin {rep.checks[0].worst_margin:.3e}, "
                    f"min d/(L2^2/8) = {worst_ratio:.4f} >= 1")
    return _timed(6, "Gajewski uniqueness shadow", body)


def criterion_7(size="full"):
    """Double limit: sweep over (eps, K); distances shrink; dual -> primal."""
    def body():
        grid = GridSpec(32, 32, 32)
        rng = np.random.default_rng(7)
        f0 = random_initial(grid, rng)
        epsilons = [0.1, 0.05, 0.025]
        kmaxs = [3, 5, 7] if size == "full" else [3, 5]
        t_final = 0.05
        params = ModelParams(pe=0.5, de=1.0)

        terminal = {}
        for eps in epsilons:
            for k in kmaxs:
                cfg = DualRunConfig(params=params, epsilon=eps, kmax=k,
                                    grid=grid, t_final=t_final)
                terminal[(eps, k)] = run_dual(grid, f0, cfg).snapshots[-1]

        ok = True
        notes = []
        for k in kmaxs:
            d01 = lp_norm(grid, terminal[(0.1, k)] - terminal[(0.05, k)], 2)
            d12 = lp_norm(grid, terminal[(0.05, k)] - terminal[(0.025, k)], 2)
            if d12 >= d01:
                ok = False
            notes.append(f"K={k}: d(eps) {d01:.2e}>{d12:.2e}")
        for eps in epsilons:
            pair_dists = []
            for ka, kb in zip(kmaxs[:-1], kmaxs[1:]):
                pair_dists.append(lp_norm(
                    grid, terminal[(eps, ka)] - terminal[(eps, kb)], 2))
            if any(b >= a for a, b in zip(pair_dists[:-1], pair_dists[1:])):
                ok = False
            notes.append("eps=%g: d(K) %s" % (
                eps, ">".join(f"{d:.2e}" for d in pair_dists)))

        pres = run_primal(grid, f0, PrimalRunConfig(
            params=params, grid=grid, t_final=t_final, dt=1e-3))
        f_primal = pres.snapshots[-1]
        worst_excess = -np.inf
        for (eps, k), fT in terminal.items():
            tail = lp_norm(grid, f_primal - spectral.mode_truncate(f_primal, k), 2)
            gap = lp_norm(grid, fT - f_primal, 2)
            bound = 10.0 * (eps + tail)
            worst_excess = max(worst_excess, gap - bound)
            if gap > bound:
                ok = False
        notes.append(f"worst gap-bound excess {worst_excess:.2e} <= 0")
        return ok, "; ".join(notes)
    return _timed(7, "double-limit convergence", body)


def criterion_8(size="full"):
    """Linearized stationary rates match measured primal decay within 5%."""
    def body():
        grid = GridSpec(16, 16, 16)
        c = ConstantState(f_inf=1.0 / (8.0 * np.pi))
        params = ModelParams(pe=0.0, de=1.0)
        rates = {r.mode: r.rate for r in linearized_mode_rates(c, params, 2)}
        X, Y, T = grid.meshgrid()
        ok = True
        notes = []
        for mode in ((0, 0, 1), (1, 0, 0), (1, 1, 0), (1, 0, 1)):
            pred = rates[mode].real
            pert = np.cos(mode[0] * X + mode[1] * Y + mode[2] * T)
            f0 = c.f_inf * (1.0 + 1e-4 * pert)
            res = run_primal(grid, f0, PrimalRunConfig(
                params=params, grid=grid, t_final=0.3, dt=0.002,
                snap_every=0.05))
            meas = measured_mode_rate(grid, res.times, res.snapshots, mode)
            rel = abs(meas - pred) / abs(pred)
            if rel > 0.05:
                ok = False
            notes.append(f"{mode}: {meas:.4f} vs {pred:.4f} ({rel:.1e})")
        return ok, "; ".join(notes)
    return _timed(8, "linearized stationary rates", body)


def criterion_9(size="full"):
    """Gamma contraction and cross-check against the nonlinear primal run."""
    def body():
        grid = GridSpec(16, 16, 16)
        c = ConstantState(f_inf=1.0 / (8.0 * np.pi))
        X, Y, T = grid.meshgrid()
        w0 = np.cos(X) * np.cos(T) + 0.5 * np.sin(Y)
        w0 *= 1e-3 / spectral.sobolev_norm(w0, 2)
        t_final = 1.0
        nt = 200 if size == "full" else 100
        ok = True
        notes = []
        for pe in (0.0, 0.5):
            params = ModelParams(pe=pe, de=1.0)
            rep = gamma_iterate(grid, w0, w0, c, params, t_final,
                                radius=np.inf, maxit=25, nt=nt, tol=1e-12)
            ratios_ok = all(r < 1.0 for r in rep.ratios)
            pres = run_primal(grid, c.f_inf + w0, PrimalRunConfig(
                params=params, grid=grid, t_final=t_final, dt=t_final / nt))
            gap = lp_norm(grid, (pres.snapshots[-1] - c.f_inf)
                          - rep.limit[-1], 2)
            if not (ratios_ok and gap <= 1e-5):
                ok = False
            notes.append(f"Pe={pe}: max ratio "
                         f"{max(rep.ratios) if rep.ratios else 0:.3e}, "
                         f"limit-vs-primal L2 {gap:.2e} <= 1e-5")
        return ok, "; ".join(notes)
    return _timed(9, "fixed-point contraction", body)


def criterion_10(size="full"):
    """Linear-solve energy estimate with C0; quadratic scaling of G."""
    def body():
        grid = GridSpec(16, 16, 16)
        c = ConstantState(f_inf=1.0 / (8.0 * np.pi))
        t_final, nt = 0.5, 100
        dt = t_final / nt
        n_pairs = 20 if size == "full" else 6
        worst = -np.inf
        ok = True
        for i in range(n_pairs):
            rng = np.random.default_rng(1000 + i)
            params = ModelParams(pe=0.5 if i % 2 else 0.0, de=1.0)
            z0 = band_limited(grid, rng, 2, amplitude=0.01)
            gsrc = band_limited(grid, rng, 2, amplitude=0.01)
            g_traj = np.broadcast_to(gsrc, (nt + 1,) + grid.shape)
            traj = solve_S(grid, g_traj, z0, c, params, t_final, nt)

            l2sq = np.array([integrate(grid, z**2) for z in traj])
            dth = np.array([integrate(grid, grad_theta(grid, z)**2)
                            for z in traj])
            gx = np.array([integrate(grid, sum(d**2 for d in grad_x(grid, z)))
                           for z in traj])
            trap = lambda a: float(np.sum(0.5 * (a[1:] + a[:-1])) * dt)
            lhs = (float(np.max(l2sq)) + trap(dth)
                   + params.de * (1.0 - c.rho_inf) * trap(gx))
            c0, _ = fp_constants(params, t_final)
            rhs = c0 * (l2sq[0] + t_final * integrate(grid, gsrc**2))
            worst = max(worst, lhs / rhs)
            if lhs > rhs * (1.0 + 1e-6):
                ok = False

        rng = np.random.default_rng(42)
        w = band_limited(grid, rng, 2, amplitude=0.05)
        base = lp_norm(grid, apply_G(grid, w, ModelParams(pe=0.5, de=1.0)), 2)
        quad_err = 0.0
        for s in (2.0, 0.5):
            gs = lp_norm(grid, apply_G(grid, s * w,
                                       ModelParams(pe=0.5, de=1.0)), 2)
            quad_err = max(quad_err, abs(gs - s**2 * base) / (s**2 * base))
        if quad_err > 1e-12:
            ok = False
        return ok, (f"max LHS/(C0 RHS) = {worst:.4f} <= 1, "
                    f"quadratic-scaling rel err {quad_err:.2e} <= 1e-12")
    return _timed(10, "operator estimate spot-checks", body)


def criterion_11(size="full"):
    """Interpolation ratios finite and stable under one grid doubling."""
    def body():
        coarse = GridSpec(16, 16, 16)
        fine = GridSpec(32, 32, 32)
        n_fields = 20 if size == "full" else 6
        nt, dt = 4, 0.1
        worst_shift = 0.0
        ok = True
        for i in range(n_fields):
            rng = np.random.default_rng(2000 + i)
            basis_c = TrigBasis(coarse, 2)
            coeffs = rng.standard_normal(basis_c.dim)
            amps = 1.0 + 0.5 * rng.random(nt)
            vc = np.stack([a * basis_c.synthesize(coeffs) for a in amps])
            basis_f = TrigBasis(fine, 2)
            vf = np.stack([a * basis_f.synthesize(coeffs) for a in amps])
            for (m, p) in ((2, 2), (1, 2)):
                rc, _, _ = check_interpolation(coarse, vc, m, p, dt)
                rf, _, _ = check_interpolation(fine, vf, m, p, dt)
                if not (np.isfinite(rc) and np.isfinite(rf)):
                    ok = False
                shift = abs(rf / rc - 1.0)
                worst_shift = max(worst_shift, shift)
                if shift > 0.10:
                    ok = False
        return ok, f"worst ratio shift under doubling {worst_shift:.3f} <= 0.10"
    return _timed(11, "interpolation checker stability", body)


def criterion_12(size="full"):
    """Mollifier bounds to 1e-12; entropy budget bounded along the sweep."""
    def body():
        grid = GridSpec(16, 16, 16)
        n_data = 10 if size == "full" else 3
        ok = True
        worst_f, worst_lo, worst_hi = np.inf, np.inf, -np.inf
        for i in range(n_data):
            rng = np.random.default_rng(3000 + i)
            f0 = random_initial(grid, rng, rho_max=0.8)
            for eps in (0.1, 0.01):
                fe, re_, _ = regularize_initial(grid, f0, MollifierSpec(eps))
                worst_f = min(worst_f, float(np.min(fe - eps / (4 * np.pi))))
                worst_lo = min(worst_lo, float(np.min((1 - re_) - eps / 2)))
                worst_hi = max(worst_hi, float(np.max((1 - re_) - (1 - eps / 2))))
        if worst_f < -1e-12 or worst_lo < -1e-12 or worst_hi > 1e-12:
            ok = False

        rng = np.random.default_rng(3100)
        f0 = random_initial(grid, rng, rho_max=0.8)
        sweep = [0.1, 0.05, 0.02, 0.01]
        budgets = []
        for eps in sweep:
            fe, _, ue = regularize_initial(grid, f0, MollifierSpec(eps))
            budgets.append(initial_entropy_budget(grid, fe, ue, eps))
        budgets = np.array(budgets)
        finite = bool(np.all(np.isfinite(budgets)))
        spread = float(np.max(np.abs(budgets - budgets[-1])))
        # bounded uniformly: the sweep stays within a fixed window around
        # its small-eps value instead of diverging as eps -> 0
        bounded = spread <= 10.0 * (1.0 + abs(budgets[-1]))
        if not (finite and bounded):
            ok = False
        return ok, (f"worst bound slack {min(worst_f, worst_lo, -worst_hi):.2e}"
                    f" >= -1e-12; budget spread {spread:.2f} (bounded)")
    return _timed(12, "mollifier contract", body)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
            criterion_11, criterion_12]


def run_all(size: str = "full", only=None, printer=print):
    """Run the full suite; returns the list of CriterionResult."""
    results = []
    for i, fn in enumerate(CRITERIA, start=1):
        if only is not None and i not in only:
            continue
        res = fn(size)
        results.append(res)
        if printer is not None:
            printer(res.line())
    return results
