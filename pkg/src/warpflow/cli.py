"""Command-line entry point: run flows, ODE studies, and verification suites.

Usage:
    warpflow --config run.json [--mode MODE] [--out DIR] [--seed N] [--refine K]

Exit codes (each termination path maps to exactly one):
    0  run reached t_end / certified stationary point / all checks passed
    1  configuration error (schema or semantic, with field path)
    2  blow-up detected
    3  metric positivity lost
    4  solver did not converge (or hit a singular Jacobian)
    5  verification checks failed
    6  I/O error (path reported)
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

from . import serialize
from .config import (
    RunConfig,
    build_euclidean_state,
    build_flow_config,
    build_homogeneous_state,
    build_reduced_state,
    parse_config,
)
from .errors import (
    CflViolationError,
    ConfigError,
    NoConvergenceError,
    SingularJacobianError,
    WarpflowError,
)
from .homogeneous import (
    certify_stationary,
    integrate_ode,
    newton_stationary,
)
from .runner import FlowConfig, extremum_violations, run_flow

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BLOW_UP = 2
EXIT_POSITIVITY = 3
EXIT_NO_CONVERGENCE = 4
EXIT_VERIFY_FAILED = 5
EXIT_IO = 6

TERMINATION_EXIT = {
    "t_end_reached": EXIT_OK,
    "blow_up": EXIT_BLOW_UP,
    "positivity_lost": EXIT_POSITIVITY,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="warpflow",
        description="Structure-preserving coupled metric/form flows on periodic grids",
    )
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--mode", choices=["euclidean", "reduced", "ode", "verify"],
                        help="override the configured mode")
    parser.add_argument("--out", type=Path, help="override the output directory")
    parser.add_argument("--seed", type=int, help="seed for randomized property suites")
    parser.add_argument("--refine", type=int, help="refinement levels for grid studies")
    return parser


def _write_json(path: Path, payload: dict) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise _IoFailure(path, exc) from exc


class _IoFailure(Exception):
    def __init__(self, path, exc):
        self.path = path
        self.original = exc
        super().__init__(f"I/O error at {path}: {exc}")


def run_grid_mode(cfg: RunConfig, out_dir: Path) -> int:
    reduced = cfg.mode == "reduced"
    state = build_reduced_state(cfg) if reduced else build_euclidean_state(cfg)
    flow_config = build_flow_config(cfg)
    diag_path = out_dir / cfg.output["diagnostics"]
    summary_path = out_dir / cfg.output["summary"]
    checkpoint_path = out_dir / cfg.output["checkpoint"]
    started = time.time()
    try:
        diag_path.parent.mkdir(parents=True, exist_ok=True)
        with open(diag_path, "w", encoding="utf-8") as handle:
            sink = lambda rec: serialize.append_jsonl(rec, handle)
            result = run_flow(state, flow_config, sigma=cfg.sigma, sink=sink)
    except OSError as exc:
        raise _IoFailure(diag_path, exc) from exc
    elapsed = time.time() - started

    violations = []
    if reduced and result.extremum_series["max_f"]:
        dt_used = result.dt_history[-1][1]
        violations = extremum_violations(result, state.grid, dt_used)
    shi_flags = {}
    for key, sup_val in result.shi_sup.items():
        bound = flow_config.shi_bound
        flag = (sup_val <= bound) if bound is not None else math.isfinite(sup_val)
        shi_flags[key] = {"sup": sup_val, "bounded": bool(flag),
                          "bound": bound if bound is not None else "unset (finite check)"}
    summary = {
        "config": cfg.to_dict(),
        "termination": result.termination,
        "closedness_sup": result.closedness_sup,
        "shi": shi_flags,
        "extremum_violations": violations,
        "dt_history": result.dt_history,
        "records_written": len(result.records),
        "timing": {"wall_seconds": elapsed},
    }
    _write_json(summary_path, summary)
    try:
        serialize.write_checkpoint(result.final_state, checkpoint_path)
    except OSError as exc:
        raise _IoFailure(checkpoint_path, exc) from exc
    print(f"{cfg.mode} run: {result.cause} at t = {result.termination['t']:.6g} "
          f"({len(result.records)} records, {elapsed:.1f}s)")
    return TERMINATION_EXIT[result.cause]


def run_ode_mode(cfg: RunConfig, out_dir: Path) -> int:
    state = build_homogeneous_state(cfg)
    ode = cfg.ode
    summary_path = out_dir / cfg.output["summary"]
    if ode["action"] == "newton":
        try:
            solution, iterations = newton_stationary(
                state, list(ode["free"]), tol=ode["newton_tol"], max_iter=ode["max_iter"])
        except (NoConvergenceError, SingularJacobianError) as exc:
            _write_json(summary_path, {"config": cfg.to_dict(), "error": str(exc)})
            print(f"stationary search failed: {exc}")
            return EXIT_NO_CONVERGENCE
        certificate = certify_stationary(solution)
        summary = {
            "config": cfg.to_dict(),
            "stationary_point": {
                "s": solution.s, "f": solution.f, "b": solution.b, "c": solution.c,
                "kappa_hat": solution.kappa_hat, "lambda_tilde": solution.lambda_tilde,
            },
            "iterations": iterations,
            "certificate": certificate,
            "certified": bool(certificate["rhs_sup"] <= 1e-12
                              and certificate["r2_fiber"] <= 1e-10
                              and certificate["r2_base"] <= 1e-10
                              and certificate["r1"] <= 1e-10),
        }
        _write_json(summary_path, summary)
        print(f"stationary point found in {iterations} Newton iterations; "
              f"certified = {summary['certified']}")
        return EXIT_OK if summary["certified"] else EXIT_NO_CONVERGENCE
    records, termination = integrate_ode(
        state, dt=ode["dt"], t_end=ode["t_end"], scheme=ode["scheme"])
    trajectory_path = out_dir / cfg.output["trajectory"]
    try:
        trajectory_path.parent.mkdir(parents=True, exist_ok=True)
        with open(trajectory_path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(records[0].keys()))
            writer.writeheader()
            writer.writerows(records)
    except OSError as exc:
        raise _IoFailure(trajectory_path, exc) from exc
    summary = {"config": cfg.to_dict(), "termination": termination,
               "records_written": len(records)}
    _write_json(summary_path, summary)
    print(f"ode run: {termination['cause']} at t = {termination['t']:.6g}")
    return TERMINATION_EXIT.get(termination["cause"], EXIT_OK)


def run_verify_mode(cfg: RunConfig) -> int:
    from .verification import format_table, run_all_suites

    checks = run_all_suites(seed=cfg.seed, refine=cfg.refine)
    print(format_table(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY_FAILED


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config is None:
            if args.mode == "verify":
                cfg = parse_config(json.dumps({"mode": "verify"}))
            else:
                parser.error("--config is required except for --mode verify")
        else:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                print(f"I/O error reading {args.config}: {exc}", file=sys.stderr)
                return EXIT_IO
            cfg = parse_config(text)
        if args.mode:
            cfg.mode = args.mode
        if args.seed is not None:
            cfg.seed = args.seed
        if args.refine is not None:
            cfg.refine = args.refine
        out_dir = args.out if args.out is not None else Path(cfg.output.get("directory", "."))
        if cfg.mode == "verify":
            return run_verify_mode(cfg)
        if cfg.mode == "ode":
            return run_ode_mode(cfg, out_dir)
        return run_grid_mode(cfg, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CflViolationError as exc:
        print(f"step-size error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _IoFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    except WarpflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
