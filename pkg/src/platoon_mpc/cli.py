"""Command-line entry point: ``platoon-mpc simulate`` and ``platoon-mpc validate``."""
from __future__ import annotations

import argparse
from dataclasses import replace
import json
import logging
import os
from pathlib import Path
import sys
import time

from . import __version__
from .analysis import summarize, timeseries_csv, timeseries_columns
from .errors import PlatoonMPCError
from .plots import telemetry_plots
from .scenario_io import BUNDLED, load_scenario, scenario_hash
from .sim import Telemetry, run_scenario
from .validation import run_suite

log = logging.getLogger("platoon_mpc")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def configure_logging() -> None:
    level_name = os.environ.get("PLATOON_MPC_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _prepare(args):
    scenario = load_scenario(args.scenario)
    if args.duration is not None:
        if args.duration < 0:
            raise PlatoonMPCError("--duration must be >= 0")
        kept = tuple(e for e in scenario.events if e.time <= args.duration)
        if len(kept) != len(scenario.events):
            log.info("dropping %d events after %.1f s", len(scenario.events) - len(kept), args.duration)
        scenario = replace(scenario, duration=float(args.duration), events=kept)
    seed = None
    if scenario.noise is not None:
        seed = scenario.noise.seed if args.seed is None else args.seed
        scenario = replace(scenario, noise=replace(scenario.noise, seed=seed))
    elif args.seed is not None:
        seed = args.seed
        log.info("scenario has no noise; --seed %d has no effect", seed)
    scenario.validate()
    return scenario, seed


def cmd_simulate(args) -> int:
    try:
        scenario, seed = _prepare(args)
    except PlatoonMPCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(args.out)
    t0 = time.perf_counter()
    try:
        if scenario.steps == 0:
            # nothing to simulate: write the header and empty panels
            tel = Telemetry(scenario.dt, scenario.m)
        else:
            tel = run_scenario(scenario)
    except (PlatoonMPCError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    elapsed = time.perf_counter() - t0
    checks = summarize(tel, scenario)
    summary = {
        "version": __version__,
        "scenario": str(args.scenario),
        "scenario_hash": scenario_hash(scenario),
        "seed": seed,
        "dt": scenario.dt,
        "duration_s": scenario.duration,
        "columns": timeseries_columns(scenario.m),
        **checks,
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "timeseries.csv").write_text(timeseries_csv(tel), encoding="utf-8")
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        for name, svg in telemetry_plots(tel).items():
            (out / name).write_text(svg, encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot write outputs to {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_ERROR
    log.info("simulated %d samples in %.2f s", len(tel), elapsed)
    n_viol = checks["total_violations"]
    print(f"wrote {out}/ ({len(tel)} samples, {n_viol} constraint violations, {elapsed:.1f} s)")
    if args.strict and n_viol:
        print(f"strict: {n_viol} constraint violations", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_validate(args) -> int:
    results = run_suite(args.seed, quick=not args.full)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  result  {'metric':>10}  {'tol':>8}  {'n':>5}  time")
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {mark:<6}  {r.metric:>10.2e}  {r.tolerance:>8.0e}  "
              f"{r.instances:>5}  {r.seconds:.2f}s")
        if r.detail:
            print(f"{'':<{width}}    {r.detail}")
    ok = all(r.passed for r in results)
    print("all checks passed" if ok else "some checks FAILED")
    return EXIT_OK if ok else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platoon-mpc",
                                     description="Centralized MPC platoon simulator with human takeover.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write telemetry and plots")
    sim.add_argument("scenario", help=f"scenario JSON path or bundled name ({', '.join(BUNDLED)})")
    sim.add_argument("--out", default="out", help="output directory (default: out)")
    sim.add_argument("--seed", type=int, default=None, help="override the noise seed")
    sim.add_argument("--strict", action="store_true",
                     help="exit with status 2 when a constraint violation is detected")
    sim.add_argument("--duration", type=float, default=None,
                     help="override the scenario duration in seconds")
    sim.set_defaults(func=cmd_simulate)

    val = sub.add_parser("validate", help="run the sampled oracle and invariant checks")
    val.add_argument("--seed", type=int, default=0, help="seed for sampled instances (default: 0)")
    val.add_argument("--full", action="store_true", help="use the full instance counts")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
