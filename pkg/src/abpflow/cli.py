"""Command-line entry point.

Every subcommand reads an optional plain-text config file (one
`key = value` per line, `#` comments), applies CLI flag overrides, writes
a resolved-config echo next to its outputs, and emits CSV artifacts plus
a few rendered figures.  Exit codes: 0 success, 1 validation error,
2 numerical failure, 3 verification failure.

The environment variable ABPF_THREADS caps BLAS/FFT thread pools.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import report
from .diagnostics import (entropy_ledger, record, write_ledger_csv,
                          write_rows_csv)
from .dual import DualRunConfig, run_dual
from .errors import (AbpflowError, BlowupDetected, ConfigError, NoContraction,
                     StepsizeUnderflow)
from .grid import (GridSpec, marginal_rho, read_snapshot, total_mass,
                   write_snapshot)
from .mollify import MollifierSpec, initial_entropy_budget, regularize_initial
from .params import ModelParams
from .primal import PrimalRunConfig, run_primal, run_rho_drift
from .stationary import (ConstantState, gamma_iterate, linearized_mode_rates,
                         measured_mode_rate)
from .verify import run_all

FORMAT_VERSION = 1


def _apply_thread_cap():
    cap = os.environ.get("ABPF_THREADS")
    if not cap:
        return
    try:
        n = int(cap)
    except ValueError:
        raise ConfigError(f"ABPF_THREADS must be an integer, got {cap!r}")
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def parse_config_file(path) -> dict:
    """key = value lines, # comments, no sections."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                                  f"got {raw.strip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def resolve_config(args, allowed: dict) -> dict:
    """Merge config file and CLI flags; unknown keys are errors.

    `allowed` maps key name -> default (None meaning required-or-absent).
    """
    merged = dict(allowed)
    if getattr(args, "config", None):
        for key, value in parse_config_file(args.config).items():
            if key not in allowed:
                raise ConfigError(f"unknown config key: {key!r}")
            merged[key] = value
    for key in allowed:
        flag = key.replace("-", "_")
        if getattr(args, flag, None) is not None:
            merged[key] = getattr(args, flag)
    return merged


def write_resolved(outdir: Path, cfg: dict):
    with open(outdir / "resolved_config.txt", "w") as fh:
        fh.write(f"format_version = {FORMAT_VERSION}\n")
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")


def _parse_grid(value, ndim=3) -> GridSpec:
    parts = [p for p in str(value).replace(" ", "").split(",") if p]
    if len(parts) != ndim:
        raise ConfigError(f"grid must have {ndim} comma-separated sizes, "
                          f"got {value!r}")
    sizes = [int(p) for p in parts]
    if ndim == 2:
        return GridSpec(sizes[0], sizes[1], 4)
    return GridSpec(*sizes)


def _parse_float(cfg, key):
    try:
        return float(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r} must be a number, got {cfg[key]!r}")


def _parse_switch(value, key):
    s = str(value).lower()
    if s in ("on", "true", "1", "yes"):
        return True
    if s in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"key {key!r} must be on|off, got {value!r}")


def _load_initial(cfg, grid: GridSpec) -> np.ndarray:
    """Initial data: snapshot file via init=, else a built-in smooth bump."""
    if cfg.get("init"):
        nx, ny, ntheta, data = read_snapshot(cfg["init"])
        if (nx, ny, ntheta) != grid.shape:
            raise ConfigError(
                f"init snapshot grid {(nx, ny, ntheta)} != config grid "
                f"{grid.shape}")
        return data
    X, Y, T = grid.meshgrid()
    return 0.05 * (1.0 + 0.3 * np.cos(X) * np.cos(T) + 0.2 * np.sin(Y))


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_field_snapshots(outdir: Path, grid: GridSpec, times, snapshots):
    for i, (t, f) in enumerate(zip(times, snapshots)):
        write_snapshot(outdir / f"snapshot_{i:04d}.abpf", grid, f)
    with open(outdir / "snapshot_times.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "t"])
        for i, t in enumerate(times):
            writer.writerow([i, f"{t:.17g}"])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_mollify(args) -> int:
    allowed = {"init": None, "epsilon": None, "gamma": "3.0",
               "grid": "16,16,16"}
    cfg = resolve_config(args, allowed)
    if cfg["epsilon"] is None:
        raise ConfigError("mollify requires epsilon")
    grid = _parse_grid(cfg["grid"])
    f0 = _load_initial(cfg, grid)
    spec = MollifierSpec(_parse_float(cfg, "epsilon"),
                         _parse_float(cfg, "gamma"))
    f0e, rho0e, u0e = regularize_initial(grid, f0, spec)
    budget = initial_entropy_budget(grid, f0e, u0e, spec.epsilon)

    outdir = _outdir(args)
    write_resolved(outdir, cfg)
    write_snapshot(outdir / "regularized.abpf", grid, f0e)
    with open(outdir / "budget.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "budget", "min_f", "min_one_minus_rho",
                         "max_one_minus_rho", "mass"])
        writer.writerow([f"{spec.epsilon:.17g}", f"{budget:.17g}",
                         f"{np.min(f0e):.17g}", f"{np.min(1 - rho0e):.17g}",
                         f"{np.max(1 - rho0e):.17g}",
                         f"{total_mass(grid, f0e):.17g}"])
    report.plot_rho(grid, rho0e, outdir / "rho0_regularized.png",
                    title="regularized rho0")
    return 0


def cmd_run_primal(args) -> int:
    allowed = {"pe": "0.0", "de": "1.0", "grid": "16,16,16",
               "t_final": "0.1", "dt": None, "cfl": None, "imex": "on",
               "clamp": "off", "snap_every": None, "init": None}
    cfg = resolve_config(args, allowed)
    grid = _parse_grid(cfg["grid"])
    params = ModelParams(pe=_parse_float(cfg, "pe"), de=_parse_float(cfg, "de"))
    clamp = None if str(cfg["clamp"]).lower() == "off" else _parse_float(cfg, "clamp")
    run_cfg = PrimalRunConfig(
        params=params, grid=grid, t_final=_parse_float(cfg, "t_final"),
        dt=_parse_float(cfg, "dt") if cfg["dt"] is not None else None,
        cfl=_parse_float(cfg, "cfl") if cfg["cfl"] is not None else None,
        imex=_parse_switch(cfg["imex"], "imex"), clamp=clamp,
        snap_every=(_parse_float(cfg, "snap_every")
                    if cfg["snap_every"] is not None else None))
    f0 = _load_initial(cfg, grid)

    result = run_primal(grid, f0, run_cfg)
    rows = [record(grid, f, rho, None, 0.0, t, params)
            for t, f, rho in zip(result.times, result.snapshots, result.rhos)]

    outdir = _outdir(args)
    write_resolved(outdir, cfg)
    _write_field_snapshots(outdir, grid, result.times, result.snapshots)
    write_rows_csv(outdir / "diagnostics.csv", rows)
    write_ledger_csv(outdir / "ledger.csv", entropy_ledger(rows, 0.0, params.pe))
    report.plot_time_series(rows, outdir / "time_series.png")
    report.plot_bounds(rows, outdir / "bounds.png")
    report.plot_rho(grid, result.rhos[-1], outdir / "rho_final.png",
                    title="rho at t_final")
    if not result.certified:
        print("warning: clamp active, run is non-certified", file=sys.stderr)
    return 0


def cmd_run_dual(args) -> int:
    allowed = {"pe": "0.0", "de": "1.0", "epsilon": "0.1", "modes_k": "3",
               "grid": "16,16,16", "t_final": "0.1", "rtol": "1e-6",
               "atol": "1e-9", "snap_every": None, "init": None}
    cfg = resolve_config(args, allowed)
    grid = _parse_grid(cfg["grid"])
    params = ModelParams(pe=_parse_float(cfg, "pe"), de=_parse_float(cfg, "de"))
    run_cfg = DualRunConfig(
        params=params, epsilon=_parse_float(cfg, "epsilon"),
        kmax=int(cfg["modes_k"]), grid=grid,
        t_final=_parse_float(cfg, "t_final"),
        rtol=_parse_float(cfg, "rtol"), atol=_parse_float(cfg, "atol"),
        snap_every=(_parse_float(cfg, "snap_every")
                    if cfg["snap_every"] is not None else None))
    f0 = _load_initial(cfg, grid)

    result = run_dual(grid, f0, run_cfg)

    outdir = _outdir(args)
    write_resolved(outdir, cfg)
    _write_field_snapshots(outdir, grid, result.times, result.snapshots)
    write_rows_csv(outdir / "diagnostics.csv", result.rows)
    write_ledger_csv(outdir / "ledger.csv",
                     entropy_ledger(result.rows, run_cfg.epsilon, params.pe))
    report.plot_time_series(result.rows, outdir / "time_series.png",
                            epsilon=run_cfg.epsilon)
    report.plot_bounds(result.rows, outdir / "bounds.png")
    report.plot_rho(grid, result.rhos[-1], outdir / "rho_final.png",
                    title="rho at t_final")
    return 0


def cmd_rho_drift(args) -> int:
    allowed = {"pe": "0.0", "de": "1.0", "grid": "16,16", "t_final": "0.1",
               "dt": "0.01", "init": None}
    cfg = resolve_config(args, allowed)
    grid = _parse_grid(cfg["grid"], ndim=2)
    params = ModelParams(pe=_parse_float(cfg, "pe"), de=_parse_float(cfg, "de"))
    if cfg.get("init"):
        nx, ny, ntheta, data = read_snapshot(cfg["init"])
        rho0 = marginal_rho(GridSpec(nx, ny, ntheta), data) if ntheta > 1 else data
        if rho0.shape != grid.shape2d:
            raise ConfigError(f"init marginal shape {rho0.shape} != grid "
                              f"{grid.shape2d}")
    else:
        x1 = grid.x1[:, None]
        x2 = grid.x2[None, :]
        rho0 = 0.4 + 0.2 * np.cos(x1) * np.cos(x2)

    times, traj = run_rho_drift(grid, rho0, None, params,
                                _parse_float(cfg, "t_final"),
                                _parse_float(cfg, "dt"))
    outdir = _outdir(args)
    write_resolved(outdir, cfg)
    stride = max(1, len(traj) // 20)
    kept = list(range(0, len(traj), stride))
    if kept[-1] != len(traj) - 1:
        kept.append(len(traj) - 1)
    for j, i in enumerate(kept):
        write_snapshot(outdir / f"rho_{j:04d}.abpf", grid, traj[i])
    with open(outdir / "rho_drift.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mass", "min_rho", "max_rho"])
        for t, rho in zip(times, traj):
            writer.writerow([f"{t:.17g}",
                             f"{float(np.sum(rho)) * grid.hx * grid.hy:.17g}",
                             f"{np.min(rho):.17g}", f"{np.max(rho):.17g}"])
    report.plot_rho(grid, traj[-1], outdir / "rho_final.png",
                    title="rho at t_final")
    return 0


def cmd_stationary_scan(args) -> int:
    allowed = {"f_inf": None, "pe": "0.0", "de": "1.0", "modes_k": "4",
               "measure_modes": "0,0,1;1,0,0", "grid": "16,16,16",
               "t_final": "0.3", "dt": "0.002"}
    cfg = resolve_config(args, allowed)
    if cfg["f_inf"] is None:
        raise ConfigError("stationary-scan requires f_inf")
    c = ConstantState(f_inf=_parse_float(cfg, "f_inf"))
    params = ModelParams(pe=_parse_float(cfg, "pe"), de=_parse_float(cfg, "de"))
    kmax = int(cfg["modes_k"])
    rates = linearized_mode_rates(c, params, kmax)

    measured = {}
    to_measure = []
    for chunk in str(cfg["measure_modes"]).split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(",")
        if len(parts) != 3:
            raise ConfigError(f"measure_modes entry {chunk!r} must be n1,n2,n3")
        to_measure.append(tuple(int(p) for p in parts))
    if to_measure and params.pe == 0.0:
        grid = _parse_grid(cfg["grid"])
        X, Y, T = grid.meshgrid()
        for mode in to_measure:
            pert = np.cos(mode[0] * X + mode[1] * Y + mode[2] * T)
            f0 = c.f_inf * (1.0 + 1e-4 * pert)
            res = run_primal(grid, f0, PrimalRunConfig(
                params=params, grid=grid,
                t_final=_parse_float(cfg, "t_final"),
                dt=_parse_float(cfg, "dt"),
                snap_every=_parse_float(cfg, "t_final") / 6))
            measured[mode] = measured_mode_rate(grid, res.times,
                                                res.snapshots, mode)

    outdir = _outdir(args)
    write_resolved(outdir, cfg)
    with open(outdir / "mode_rates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n1", "n2", "n3", "re_rate", "im_rate", "stable",
                         "measured_rate"])
        for r in rates:
            m = measured.get(r.mode)
            writer.writerow(list(r.mode)
                            + [f"{r.rate.real:.17g}", f"{r.rate.imag:.17g}",
                               int(r.rate.real <= 0.0),
                               "" if m is None else f"{m:.17g}"])
    report.plot_mode_rates(rates, outdir / "mode_rates.png")
    return 0


def cmd_fixed_point(args) -> int:
    allowed = {"f_inf": None, "pe": "0.0", "de": "1.0", "grid": "16,16,16",
               "t_final": "1.0", "nt": "100", "amplitude": "1e-3",
               "radius": "inf", "maxit": "25", "tol": "1e-10"}
    cfg = resolve_config(args, allowed)
    if cfg["f_inf"] is None:
        raise ConfigError("fixed-point requires f_inf")
    c = ConstantState(f_inf=_parse_float(cfg, "f_inf"))
    params = ModelParams(pe=_parse_float(cfg, "pe"), de=_parse_float(cfg, "de"))
    grid = _parse_grid(cfg["grid"])
    X, Y, T = grid.meshgrid()
    from . import spectral
    w0 = np.cos(X) * np.cos(T) + 0.5 * np.sin(Y)
    w0 *= _parse_float(cfg, "amplitude") / spectral.sobolev_norm(w0, 2)

    outdir = _outdir(args)
    write_resolved(outdir, cfg)
    strict = getattr(args, "strict", False)
    try:
        rep = gamma_iterate(grid, w0, w0, c, params,
                            _parse_float(cfg, "t_final"),
                            radius=_parse_float(cfg, "radius"),
                            maxit=int(cfg["maxit"]), nt=int(cfg["nt"]),
                            tol=_parse_float(cfg, "tol"))
    except NoContraction as exc:
        rep = exc.report
        print(f"no contraction: {exc}", file=sys.stderr)
        if strict:
            _write_fixed_point(outdir, rep, converged=False)
            return 2
    _write_fixed_point(outdir, rep, converged=rep.converged)
    return 0


def _write_fixed_point(outdir: Path, rep, converged: bool):
    with open(outdir / "fixed_point.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pass", "xi_norm", "increment", "ratio"])
        for i, xn in enumerate(rep.xi_norms):
            inc = rep.increments[i - 1] if 0 < i <= len(rep.increments) else ""
            rat = rep.ratios[i - 2] if 1 < i <= len(rep.ratios) + 1 else ""
            writer.writerow([i, f"{xn:.17g}",
                             "" if inc == "" else f"{inc:.17g}",
                             "" if rat == "" else f"{rat:.17g}"])
    with open(outdir / "summary.txt", "w") as fh:
        fh.write(f"converged: {converged}\n")
        fh.write(f"C0 = {rep.c0:.12g}, C1 = {rep.c1:.12g}\n")
        fh.write(f"passes: {len(rep.increments)}\n")
        fh.write(f"final increment: {rep.final_increment:.6e}\n")
        if rep.ratios:
            fh.write(f"max contraction ratio: {max(rep.ratios):.6e}\n")
    report.plot_fixed_point(rep, outdir / "fixed_point.png")


def cmd_verify(args) -> int:
    results = run_all(size=args.size)
    outdir = _outdir(args)
    with open(outdir / "verify.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "name", "passed", "detail", "elapsed_s"])
        for r in results:
            writer.writerow([r.index, r.name, int(r.passed), r.detail,
                             f"{r.elapsed:.2f}"])
    if all(r.passed for r in results):
        print(f"all {len(results)} criteria passed")
        return 0
    failed = [r.index for r in results if not r.passed]
    print(f"FAILED criteria: {failed}", file=sys.stderr)
    return 3


def cmd_sweep(args) -> int:
    allowed = {"pe": "0.5", "de": "1.0", "epsilons": "0.1,0.05",
               "modes_k_list": "3,5", "grid": "24,24,24", "t_final": "0.05",
               "init": None}
    cfg = resolve_config(args, allowed)
    grid = _parse_grid(cfg["grid"])
    params = ModelParams(pe=_parse_float(cfg, "pe"), de=_parse_float(cfg, "de"))
    epsilons = [float(s) for s in str(cfg["epsilons"]).split(",") if s.strip()]
    kmaxs = [int(s) for s in str(cfg["modes_k_list"]).split(",") if s.strip()]
    if not epsilons or not kmaxs:
        raise ConfigError("sweep requires nonempty epsilons and modes_k_list")
    f0 = _load_initial(cfg, grid)

    outdir = _outdir(args)
    write_resolved(outdir, cfg)
    terminal = {}
    for eps in epsilons:
        for k in kmaxs:
            run_cfg = DualRunConfig(params=params, epsilon=eps, kmax=k,
                                    grid=grid,
                                    t_final=_parse_float(cfg, "t_final"))
            rundir = outdir / f"eps{eps:g}_K{k}"
            rundir.mkdir(exist_ok=True)
            res = run_dual(grid, f0, run_cfg)
            terminal[(eps, k)] = res.snapshots[-1]
            write_snapshot(rundir / "terminal.abpf", grid, res.snapshots[-1])
            write_rows_csv(rundir / "diagnostics.csv", res.rows)

    keys = sorted(terminal, key=lambda ek: (-ek[0], ek[1]))
    vol = grid.cell_volume
    with open(outdir / "pairwise_l2.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eps_a", "k_a", "eps_b", "k_b", "l2_distance"])
        for i, a in enumerate(keys):
            for b in keys[i + 1:]:
                dist = float(np.sqrt(
                    np.sum((terminal[a] - terminal[b]) ** 2) * vol))
                writer.writerow([f"{a[0]:g}", a[1], f"{b[0]:g}", b[1],
                                 f"{dist:.17g}"])
    finest = (min(epsilons), max(kmaxs))
    table = [[float(np.sqrt(np.sum((terminal[(e, k)]
                                    - terminal[finest]) ** 2) * vol))
              for k in kmaxs] for e in epsilons]
    report.plot_sweep(epsilons, kmaxs, table, outdir / "sweep.png")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(sub, keys):
    sub.add_argument("--config", help="plain-text config file")
    sub.add_argument("--out", default=".", help="output directory")
    for key in keys:
        sub.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abpflow",
        description="Crowded active-particle PDE: solvers, stationary "
                    "analysis, and structural-estimate verification.")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("mollify", help="regularize an initial datum")
    _add_common(s, ["init", "epsilon", "gamma", "grid"])
    s.set_defaults(fn=cmd_mollify)

    s = subs.add_parser("run-primal", help="conservative pseudospectral run")
    _add_common(s, ["pe", "de", "grid", "t_final", "dt", "cfl", "imex",
                    "clamp", "snap_every", "init"])
    s.set_defaults(fn=cmd_run_primal)

    s = subs.add_parser("run-dual", help="entropy-variable Galerkin run")
    _add_common(s, ["pe", "de", "epsilon", "modes_k", "grid", "t_final",
                    "rtol", "atol", "snap_every", "init"])
    s.set_defaults(fn=cmd_run_dual)

    s = subs.add_parser("rho-drift", help="2-D marginal drift-diffusion run")
    _add_common(s, ["pe", "de", "grid", "t_final", "dt", "init"])
    s.set_defaults(fn=cmd_rho_drift)

    s = subs.add_parser("stationary-scan", help="linearized mode-rate table")
    _add_common(s, ["f_inf", "pe", "de", "modes_k", "measure_modes", "grid",
                    "t_final", "dt"])
    s.set_defaults(fn=cmd_stationary_scan)

    s = subs.add_parser("fixed-point", help="Gamma iteration near a constant")
    _add_common(s, ["f_inf", "pe", "de", "grid", "t_final", "nt", "amplitude",
                    "radius", "maxit", "tol"])
    s.add_argument("--strict", action="store_true",
                   help="exit 2 when the iteration does not contract")
    s.set_defaults(fn=cmd_fixed_point)

    s = subs.add_parser("verify", help="run the built-in acceptance suite")
    s.add_argument("--size", choices=("small", "full"), default="small")
    s.add_argument("--out", default=".", help="output directory")
    s.set_defaults(fn=cmd_verify)

    s = subs.add_parser("sweep", help="(epsilon, K) double-limit table")
    _add_common(s, ["pe", "de", "epsilons", "modes_k_list", "grid", "t_final",
                    "init"])
    s.set_defaults(fn=cmd_sweep)

    return parser


def main(argv=None) -> int:
    try:
        _apply_thread_cap()
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BlowupDetected, StepsizeUnderflow, NoContraction) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except AbpflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
