"""Command-line front end: ``simulate``, ``suite`` and ``verify``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .checks import verify_all
from .config import ConfigError, load_config, write_json, write_trace_csv
from .engine import Integrator
from .scenarios import PRESET_NAMES, ScenarioError, run_scenario, run_suite

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SIMULATION = 2
EXIT_FAILED = 1  # suite or verification flags failed


def _stepping_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--integrator", choices=[Integrator.RK4.value, Integrator.EXACT.value], help="override the integrator")
    p.add_argument("--steps-per-period", type=int, metavar="N", help="override integration steps per switching period")


def _positive_steps(args, parser) -> None:
    if args.steps_per_period is not None and args.steps_per_period < 4:
        parser.error("--steps-per-period must be >= 4")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="buckboost", description="Four-switch buck-boost converter simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario from a config file")
    sim.add_argument("--config", required=True, type=Path)
    sim.add_argument("--out", required=True, type=Path, help="trace CSV path; metrics go beside it")
    _stepping_flags(sim)

    suite = sub.add_parser("suite", help="run preset scenarios and write a comparison report")
    suite.add_argument("names", nargs="+", help="preset names (comma or space separated) or 'all'")
    suite.add_argument("--step-tests", action="store_true", help="add input and load step variants")
    suite.add_argument("--out", type=Path, default=Path("suite-out"))
    suite.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    _stepping_flags(suite)

    ver = sub.add_parser("verify", help="run the oracle and property checks")
    ver.add_argument("--jobs", type=int, default=None)
    ver.add_argument(
        "--corrupt-integrator",
        action="store_true",
        help="test mode: swap the integrator under test for forward Euler; verification must fail",
    )
    _stepping_flags(ver)
    return parser


def _err(message: str) -> None:
    print(f"buckboost: {message}", file=sys.stderr)


def cmd_simulate(args) -> int:
    try:
        scenario = load_config(args.config)
        overrides = {}
        if args.integrator:
            overrides["integrator"] = Integrator(args.integrator)
        if args.steps_per_period:
            overrides["steps_per_period"] = args.steps_per_period
        if overrides:
            scenario = dataclasses.replace(scenario, sim=dataclasses.replace(scenario.sim, **overrides))
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    try:
        result = run_scenario(scenario)
    except ScenarioError as exc:
        _err(f"simulation failed: {exc}")
        return EXIT_SIMULATION
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_trace_csv(result.trace, args.out)
    summary = args.out.with_suffix(".metrics.json")
    write_json(result.to_dict(), summary)
    print(f"wrote {args.out} ({len(result.trace)} samples) and {summary}")
    return EXIT_OK


def _names(raw: list[str]) -> list[str]:
    names = [n for item in raw for n in item.split(",") if n]
    if names == ["all"]:
        return list(PRESET_NAMES)
    unknown = [n for n in names if n not in PRESET_NAMES]
    if unknown:
        raise ConfigError(f"unknown preset(s): {', '.join(unknown)}; choose from all, {', '.join(PRESET_NAMES)}")
    return names


def cmd_suite(args) -> int:
    try:
        names = _names(args.names)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    report = run_suite(
        names,
        step_tests=args.step_tests,
        jobs=args.jobs,
        integrator=args.integrator,
        steps_per_period=args.steps_per_period,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    for res in report.results:
        write_trace_csv(res.trace, args.out / f"{res.name}.csv")
    write_json(report.to_dict(), args.out / "report.json")

    for res in report.results:
        failed = [k for k, ok in res.flags.items() if not ok]
        status = "PASS" if res.passed else "FAIL (" + ", ".join(failed) + ")"
        print(f"{res.name:28s} v_out={res.mean_v_out:.4f} V  duty={res.final_duty:.4f}  {status}")
    for name, message in report.errors.items():
        print(f"{name:28s} ERROR {message}")
    for m in report.matched:
        tag = "" if m.feasible else "  (target unreachable, excluded)"
        print(
            f"matched {m.mode:5s} {m.step:9s} settling analog={m.analog.settling_time:.4g}s "
            f"digital={m.digital.settling_time:.4g}s  overshoot delta={m.overshoot_delta:+.3f}%  "
            f"{'PASS' if m.digital_not_slower else 'FAIL'}{tag}"
        )
    print(f"report: {args.out / 'report.json'}")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_verify(args) -> int:
    integrator = Integrator(args.integrator or Integrator.RK4.value)
    if args.corrupt_integrator:
        integrator = Integrator.EULER
    groups = verify_all(integrator, args.steps_per_period or 64, jobs=args.jobs)
    failing = []
    for title, rows in groups.items():
        print(title)
        for row in rows:
            status = "ok" if row.passed else "FAIL"
            print(f"  {row.name:42s} {row.residual: .3e}  (tol {row.tolerance:.0e})  {status}")
            if not row.passed:
                failing.append(row.name)
    if failing:
        print("failing: " + ", ".join(failing))
        return EXIT_FAILED
    print("all checks passed")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "steps_per_period"):
        _positive_steps(args, parser)
    handlers = {"simulate": cmd_simulate, "suite": cmd_suite, "verify": cmd_verify}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
