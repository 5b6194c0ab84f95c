"""Command-line front end.

Subcommands::

    fracfree solve <config>
    fracfree sweep-epsilon <config>
    fracfree validate-kernel <config>
    fracfree diagnose <config> <field.csv>

Output directory precedence: ``--output-dir`` flag, then the
``FRACFREE_OUTPUT_DIR`` environment variable, then ``output.directory`` in
the config.  Exit codes: 0 success, 2 flagged (non-convergence, missed
volume, failed kernel check), 1 error.  ``diagnose`` records its flags in
the summary and exits 0 whenever the field could be analysed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, config_dict, load_config
from .diagnostics import DiagnosticWarning, diagnostics_summary, free_boundary_extract
from .functional import el_residual, penalized_energy
from .grid import GridSpec, indicator_omega, sample_obstacle
from .solver import SolverError, build_problem, continuation_solve, default_tau_pos, volume_tune_epsilon
from .validation import validate_kernel

SCHEMA_VERSION = 1
OUTPUT_ENV = "FRACFREE_OUTPUT_DIR"

log = logging.getLogger("fracfree")


# --- file formats ------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_json(path: Path, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_field_csv(path: Path, grid: GridSpec, u: np.ndarray) -> None:
    names = ["x", "y"][: grid.dimension]
    table = np.column_stack([grid.points, np.asarray(u, dtype=float).ravel()])
    np.savetxt(path, table, delimiter=",", fmt="%.17g", header=",".join(names + ["value"]), comments="")


def read_field_csv(path, grid: GridSpec) -> np.ndarray:
    """Load a field written by :func:`write_field_csv` and check it matches ``grid``."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    expected = ["x", "y"][: grid.dimension] + ["value"]
    if header != expected:
        raise ValueError(f"field header {header} does not match {expected}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (grid.size, grid.dimension + 1):
        raise ValueError(f"shape mismatch: field has {data.shape[0]} points, grid expects {grid.size} "
                         f"({grid.N} per axis)")
    if not np.allclose(data[:, :-1], grid.points, rtol=0, atol=1e-9 * grid.L):
        raise ValueError("shape mismatch: field coordinates differ from the configured grid")
    return data[:, -1].reshape(grid.shape)


def write_points_csv(path: Path, grid: GridSpec, nd, dc) -> None:
    dens = {pt: (a, b) for pt, a, b in zip(dc.points, dc.min_positive.tolist(), dc.min_zero.tolist())}
    names = ["x", "y"][: grid.dimension]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names + ["slope", "min_density_pos", "min_density_zero"]) + "\n")
        for p in nd.points:
            a, b = dens.get(p.point, (float("nan"), float("nan")))
            slope = float("nan") if p.flagged else p.slope
            fh.write(",".join(f"{v:.17g}" for v in (*p.point, slope, a, b)) + "\n")


def prepare_output(cfg: ScenarioConfig, flag: str | None) -> Path:
    out = Path(flag or os.environ.get(OUTPUT_ENV) or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-test"
    with open(probe, "w") as fh:
        fh.write("")
    probe.unlink()
    return out


# --- subcommands -------------------------------------------------------------------------


def _final_metrics(cfg: ScenarioConfig, problem, u, report) -> dict:
    grid = problem.grid
    tol = cfg.solver.grad_tol
    tau = default_tau_pos(problem)
    params = report.final_params
    energy = penalized_energy(problem.kernel, u, problem.phi, problem.chi, params)
    residuals = {
        "delta": el_residual(problem.kernel, u, problem.phi, problem.chi, params, "delta", tol=10 * tol,
                             tau_pos=tau).as_dict(),
        "limit": el_residual(problem.kernel, u, problem.phi, problem.chi, params, "limit", tol=10 * tol,
                             tau_pos=tau).as_dict(),
    }
    if report.u_delta is not None:
        residuals["sigma-delta"] = el_residual(problem.kernel, report.u_delta, problem.phi, problem.chi,
                                               report.params_delta, "sigma-delta", tau_pos=tau).as_dict()
    vol = report.volume_threshold
    g = cfg.gamma
    return dict(
        energy=energy.as_dict(),
        el_residuals=residuals,
        volume=dict(measured=vol, h_volume=report.volume_h, gamma=g,
                    relative_error=abs(vol - g) / g if g > 0 else float("nan"),
                    absolute_error=abs(vol - g), tau_pos=tau),
        bounds=dict(min_u=float(np.min(u)), max_u=float(np.max(u)), phi_max=problem.phi_max,
                    obstacle_violation=float(np.max(np.maximum(problem.phi - u, 0.0)))),
        grid=dict(dimension=grid.dimension, half_width=grid.L, points=grid.N, h=grid.h),
    )


def _diagnostics(cfg: ScenarioConfig, grid, u, phi, chi, tau):
    stride = cfg.diagnostics.holder_stride or None
    return diagnostics_summary(grid, u, phi, chi, cfg.alpha, tau, tol=10 * cfg.solver.grad_tol,
                               shrink=cfg.diagnostics.shrink, stride=stride, bound_tol=10 * cfg.solver.grad_tol)


def run_solve(cfg: ScenarioConfig, out: Path, workers: int, full_sweep: bool) -> int:
    t0 = time.perf_counter()
    problem = build_problem(cfg.scenario(), workers=workers)
    abs_tol = cfg.vol_tol if cfg.gamma == 0 else None
    if len(cfg.schedule.epsilon_grid) > 1 or full_sweep:
        tune = volume_tune_epsilon(problem, cfg.schedule, cfg.solver, cfg.vol_tol, full_sweep=full_sweep,
                                   abs_tol=abs_tol)
        u, report, trace, ok_volume = tune.u, tune.report, tune.trace, tune.success
    else:
        u, report = continuation_solve(problem, cfg.schedule, cfg.solver)
        vol = report.volume_threshold
        err = abs(vol - cfg.gamma) / cfg.gamma if cfg.gamma > 0 else abs(vol - cfg.gamma)
        ok_volume = err <= cfg.vol_tol
        trace = [dict(epsilon=report.epsilon, volume=vol, volume_h=report.volume_h, error=err,
                      qualifies=bool(ok_volume), converged=report.converged)]
    t_solve = time.perf_counter() - t0

    metrics = dict(schema_version=SCHEMA_VERSION, command="sweep-epsilon" if full_sweep else "solve",
                   config=config_dict(cfg), solve=report.as_dict(), epsilon_trace=trace,
                   volume_within_tolerance=bool(ok_volume))
    metrics.update(_final_metrics(cfg, problem, u, report))
    write_field_csv(out / "field.csv", problem.grid, u)
    if report.u_delta is not None:
        write_field_csv(out / "field_delta_stage.csv", problem.grid, report.u_delta)
    t1 = time.perf_counter()
    if cfg.diagnostics.enabled:
        summary, nd, dc = _diagnostics(cfg, problem.grid, u, problem.phi, problem.chi, default_tau_pos(problem))
        metrics["diagnostics"] = summary
        write_points_csv(out / "diagnostics_points.csv", problem.grid, nd, dc)
    status = 0 if report.converged and ok_volume else 2
    metrics["status"] = "ok" if status == 0 else "flagged"
    write_json(out / "metrics.json", metrics)
    write_json(out / "timing.json", dict(kernel_seconds=problem.kernel_seconds, solve_seconds=t_solve,
                                         diagnostics_seconds=time.perf_counter() - t1))
    for w in report.warnings:
        log.warning(w)
    log.info("volume %.6g (gamma %.6g), %d iterations, status %s", report.volume_threshold, cfg.gamma,
             report.iterations, metrics["status"])
    return status


def run_validate(cfg: ScenarioConfig, out: Path, workers: int, c_norm_scale: float) -> int:
    t0 = time.perf_counter()
    result = validate_kernel(cfg.grid.dimension, cfg.alpha, c_norm_scale=c_norm_scale, workers=workers)
    write_json(out / "kernel_report.json", dict(schema_version=SCHEMA_VERSION, command="validate-kernel", **result))
    write_json(out / "timing.json", dict(validate_seconds=time.perf_counter() - t0))
    for ch in result["checks"]:
        log.info("%-15s %s errors=%s", ch["name"], "PASS" if ch["passed"] else "FAIL",
                 ", ".join(f"{e:.3e}" for e in ch["errors"]))
    return 0 if result["passed"] else 2


def run_diagnose(cfg: ScenarioConfig, field_path: str, out: Path) -> int:
    t0 = time.perf_counter()
    grid = cfg.grid
    u = read_field_csv(field_path, grid)
    phi = sample_obstacle(cfg.obstacle, grid, cfg.domain)
    chi = indicator_omega(cfg.domain, grid)
    tau = 1e-8 * float(np.max(phi))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DiagnosticWarning)
        free_boundary_extract(grid, u, tau, chi)
    for w in caught:
        log.warning(str(w.message))
    summary, nd, dc = _diagnostics(cfg, grid, u, phi, chi, tau)
    write_points_csv(out / "diagnostics_points.csv", grid, nd, dc)
    write_json(out / "diagnostics.json", dict(schema_version=SCHEMA_VERSION, command="diagnose",
                                              field=str(field_path), config=config_dict(cfg),
                                              warnings=[str(w.message) for w in caught], **summary))
    write_json(out / "timing.json", dict(diagnostics_seconds=time.perf_counter() - t0))
    return 0


# --- entry point -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario configuration file")
    common.add_argument("--threads", type=int, default=1, metavar="K", help="cap on FFT worker threads")
    common.add_argument("--output-dir", default=None, help=f"output directory (overrides ${OUTPUT_ENV})")
    common.add_argument("-v", "--verbose", action="store_true", help="log solver progress")

    parser = argparse.ArgumentParser(prog="fracfree", description="Volume-constrained fractional obstacle solver")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="run the continuation solver")
    sub.add_parser("sweep-epsilon", parents=[common], help="solve at every epsilon of the grid")
    vk = sub.add_parser("validate-kernel", parents=[common], help="operator accuracy checks")
    vk.add_argument("--c-norm-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    dg = sub.add_parser("diagnose", parents=[common], help="diagnostics on a saved field")
    dg.add_argument("field", help="field CSV written by solve")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.threads < 1:
            raise ValueError("--threads must be >= 1")
        cfg = load_config(args.config)
        out = prepare_output(cfg, args.output_dir)
        if args.command == "solve":
            return run_solve(cfg, out, args.threads, full_sweep=False)
        if args.command == "sweep-epsilon":
            return run_solve(cfg, out, args.threads, full_sweep=True)
        if args.command == "validate-kernel":
            return run_validate(cfg, out, args.threads, args.c_norm_scale)
        return run_diagnose(cfg, args.field, out)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
