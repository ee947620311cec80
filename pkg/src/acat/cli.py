"""Command-line entry points: headless runs, BOM checks, profile fits, serving.

Exit codes: 0 success / run complete, 1 check or fit failure, 2 run ended
faulted, 3 run stopped (operator stop or time limit), 64 flag misuse.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import compliance, goniometry
from .errors import AcatError
from .simkernel import WorkCell, default_scenario, load_scenario, run_scenario

EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _speed(value: str):
    if value == "max":
        return None
    try:
        speed = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"speed must be a number or 'max', got {value!r}")
    if speed <= 0:
        raise argparse.ArgumentTypeError("speed must be positive")
    return speed


def build_parser() -> _Parser:
    parser = _Parser(prog="acat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run_p = sub.add_parser("run", help="execute a scenario headless")
    run_p.add_argument("--scenario", help="scenario JSON (defaults to the stock healthy run)")
    run_p.add_argument("--log", help="write the event log (JSON Lines) here")
    run_p.add_argument("--speed", type=_speed, default=None,
                       help="real-time multiple, or 'max' (default: max)")
    run_p.add_argument("--seed", type=int, help="override the scenario seed")

    bom_p = sub.add_parser("check-bom", help="run the electrical rule checks")
    bom_p.add_argument("file", help="fuse/cable CSV table")
    bom_p.add_argument("--site", help="enclosure/device JSON description")
    bom_p.add_argument("--format", choices=("text", "json"), default="text")

    fit_p = sub.add_parser("fit", help="fit a circle to a droplet profile file")
    fit_p.add_argument("file", help="profile CSV with header x_mm,y_mm")
    fit_p.add_argument("--baseline-y", type=float, required=True,
                       help="baseline height in mm")
    fit_p.add_argument("--format", choices=("text", "json"), default="text")

    serve_p = sub.add_parser("serve", help="serve live state over WebSocket")
    serve_p.add_argument("--scenario", help="scenario JSON (defaults to the stock healthy run)")
    serve_p.add_argument("--port", type=int, default=8700)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--speed", type=_speed, default=1.0,
                         help="real-time multiple, or 'max' (default: 1)")
    serve_p.add_argument("--log", help="write the event log here on shutdown")

    return parser


def _load(args) -> "Scenario":
    scenario = load_scenario(args.scenario) if args.scenario else default_scenario()
    if getattr(args, "seed", None) is not None:
        scenario.seed = args.seed
    return scenario


def _cmd_run(args) -> int:
    scenario = _load(args)
    if args.speed is None:
        result = run_scenario(scenario, log_path=args.log, accelerate=True)
    else:
        result = _run_paced(scenario, args.speed, args.log)
    print(
        f"{result.stop_reason}: phase={result.phase} parts_done="
        f"{result.snapshot['cycle']['parts_done']} measurements={len(result.measurements)} "
        f"sim_time={result.sim_time_us / 1e6:.3f}s"
    )
    return result.exit_code


def _run_paced(scenario, speed: float, log_path):
    from .simkernel.cell import RunResult

    cell = WorkCell(scenario)
    wall_start = time.monotonic()
    stop_reason = "time_limit"
    while True:
        busy = cell.step_tick()
        if cell.terminal:
            stop_reason = cell.stop_reason()
            break
        if cell.time_limit_reached():
            cell.log.emit(cell.now_us, "kernel", "time_limit",
                          {"limit_us": scenario.time_limit_us})
            break
        cell.advance_clock(False, busy)
        target = wall_start + cell.now_us / 1_000_000.0 / speed
        delay = target - time.monotonic()
        if delay > 0:
            time.sleep(delay)
    exit_code = {"complete": 0, "faulted": 2}.get(stop_reason, 3)
    cell.emit_run_end(stop_reason)
    if log_path:
        cell.log.write(log_path)
    return RunResult(
        phase=cell.cycle.phase.value, exit_code=exit_code, stop_reason=stop_reason,
        measurements=list(cell.measurements), log=cell.log, snapshot=cell.snapshot(),
        sim_time_us=cell.now_us, ticks_processed=cell.ticks_processed,
    )


def _cmd_check_bom(args) -> int:
    data = compliance.parse_bom(args.file, site=args.site)
    report = compliance.run_checks(data)
    if args.format == "json":
        print(report.to_json())
    else:
        print(report.to_text(), end="")
    return 1 if report.failed else 0


def _cmd_fit(args) -> int:
    points = goniometry.read_profile(args.file)
    fit = goniometry.fit_circle(points, baseline_y=args.baseline_y)
    if args.format == "json":
        import json

        print(json.dumps({
            "contact_angle_deg": round(fit.contact_angle_deg, 3),
            "center_mm": [round(fit.center_mm[0], 6), round(fit.center_mm[1], 6)],
            "radius_mm": round(fit.radius_mm, 6),
            "rms_residual_mm": round(fit.rms_residual_mm, 9),
        }, separators=(",", ":")))
    else:
        print(f"contact_angle_deg={fit.contact_angle_deg:.3f}")
        print(f"center_mm=({fit.center_mm[0]:.6f}, {fit.center_mm[1]:.6f})")
        print(f"radius_mm={fit.radius_mm:.6f}")
        print(f"rms_residual_mm={fit.rms_residual_mm:.9f}")
    return 0


def _cmd_serve(args) -> int:
    from .gateway import serve

    scenario = _load(args)
    port = int(os.environ.get("ACAT_PORT", args.port))
    serve(scenario, port=port, host=args.host, speed=args.speed, log_path=args.log)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check-bom":
            return _cmd_check_bom(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "serve":
            return _cmd_serve(args)
    except AcatError as exc:
        sys.stderr.write(f"acat: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"acat: {exc}\n")
        return 1
    return EXIT_USAGE  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
