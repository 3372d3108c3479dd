"""Command line entry point.

Commands::

    owf-emt run <scenario-file> [--dt s] [--t-end s] [--out dir] [--channels list]
    owf-emt validate <case-file>
    owf-emt powerflow <case-file>

Exit code 0 on success.  On failure one JSON line goes to stderr, e.g.
``{"error": "SimulationError", "message": "...", "time": 15.02}``, and the
exit code is 2 for input errors and 3 for run failures.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .case_model import CaseError, load_case, validate_case
from .emt_network import NetworkError
from .engine import SimulationError, run_simulation
from .init_sequencer import ScheduleError
from .powerflow import PowerFlowError, snapshot_for_emt, solve_powerflow
from .recording import write_csv
from .scenario import ScenarioError, load_scenario

INPUT_ERRORS = (CaseError, ScenarioError, ScheduleError, FileNotFoundError, IsADirectoryError)
RUN_ERRORS = (SimulationError, PowerFlowError, NetworkError)


def _parser():
    ap = argparse.ArgumentParser(prog="owf-emt", description="EMT simulation of grids with offshore wind plants")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file and write CSV output")
    run.add_argument("scenario")
    run.add_argument("--dt", type=float, help="time step in seconds")
    run.add_argument("--t-end", type=float, dest="t_end", help="end time in seconds")
    run.add_argument("--out", default="out", help="output directory (default: ./out)")
    run.add_argument("--channels", help="comma-separated channel list, e.g. owf1.P_MW,bus5.V")
    val = sub.add_parser("validate", help="parse and validate a case file")
    val.add_argument("case")
    pf = sub.add_parser("powerflow", help="solve the power flow of a case file")
    pf.add_argument("case")
    return ap


def _error(exc, code, **extra):
    payload = {"error": type(exc).__name__, "message": str(exc), **extra}
    line = getattr(exc, "line", None)
    if line is not None:
        payload["line"] = line
    print(json.dumps(payload), file=sys.stderr)
    return code


def cmd_run(args):
    sc = load_scenario(args.scenario)
    if args.dt is not None:
        sc.dt = args.dt
    if args.t_end is not None:
        sc.t_end = args.t_end
    if args.channels:
        sc.channels = [c.strip() for c in args.channels.split(",") if c.strip()]
    rec = run_simulation(sc)
    out = Path(args.out)
    csv_path, meta_path = write_csv(rec, out / f"{sc.name}.csv")
    log_path = out / f"{sc.name}.log"
    log_path.write_text("\n".join(rec.log) + "\n", encoding="utf-8")
    print(json.dumps({"csv": str(csv_path), "metadata": str(meta_path), "log": str(log_path),
                      "samples": len(rec)}))
    return 0


def cmd_validate(args):
    case = load_case(args.case)
    report = validate_case(case)
    print(json.dumps({"ok": report.ok, "violations": list(report.violations)}))
    return 0 if report.ok else 1


def cmd_powerflow(args):
    case = load_case(args.case)
    sol = solve_powerflow(case)
    print(snapshot_for_emt(sol, case).to_text())
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "powerflow": cmd_powerflow}[args.command]
    try:
        return handler(args)
    except INPUT_ERRORS as exc:
        return _error(exc, 2)
    except RUN_ERRORS as exc:
        t = getattr(exc, "time", None)
        return _error(exc, 3, **({"time": t} if t is not None and math.isfinite(t) else {}))


if __name__ == "__main__":
    sys.exit(main())
