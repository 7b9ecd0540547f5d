"""Command-line entry point.

Subcommands mirror the pipeline stages: ``cycle`` (ingest/synthesize),
``fit`` (component models), ``optimize`` (motor-size sweep), ``validate``
(nonlinear re-simulation), ``report`` (cross-study tables) and ``run``
(the full pipeline). The config file is the single source of parameters;
the few flags there are override it. Exit codes: 0 success, 2 config
error, 3 infeasible study, 4 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .artifacts import write_json
from .config import load_config
from .errors import (ConfigError, ConvergenceError, SolverFailure, SweepError,
                     ValidationError)
from .study import make_adapter, plan, report, run_study

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4


def _apply_overrides(config, args):
    if getattr(args, "out_dir", None):
        config = dataclasses.replace(config, out_dir=Path(args.out_dir))
    sweep_overrides = {}
    if getattr(args, "step_w", None):
        sweep_overrides["step_w"] = float(args.step_w)
    if getattr(args, "workers", None):
        sweep_overrides["workers"] = int(args.workers)
    if sweep_overrides:
        config = dataclasses.replace(
            config, sweep=dataclasses.replace(config.sweep, **sweep_overrides))
    return config


def _cmd_cycle(args) -> int:
    from .cycles import (GradientProfileSpec, builtin_cycle, cap_speed,
                         load_cycle, save_cycle, synthesize_gradient)

    if args.builtin:
        cycle = builtin_cycle(args.builtin, hilly=args.hilly, dt=args.dt)
    elif args.input:
        cycle = load_cycle(args.input, dt_target=args.dt)
        if args.hilly:
            raise ConfigError("use --gradient-json with file cycles for hills")
    else:
        raise ConfigError("cycle needs --builtin NAME or --input PATH")
    if args.gradient_json:
        spec_raw = json.loads(Path(args.gradient_json).read_text(encoding="utf-8"))
        spec = GradientProfileSpec(
            segments=tuple((s[0], s[1]) for s in spec_raw["segments"]),
            smoothing_window=int(spec_raw.get("smoothing_window", 5)),
        )
        cycle = synthesize_gradient(cycle, spec, speed_adjust=not args.no_speed_adjust)
    if args.cap_kmh:
        cycle = cap_speed(cycle, args.cap_kmh / 3.6)
    save_cycle(cycle, args.output)
    print(f"wrote {args.output}: {cycle.n_samples} samples, "
          f"{cycle.d_cycle:.1f} m, dt {cycle.dt} s")
    return EXIT_OK


def _cmd_fit(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    motor = config.build_motor()
    battery = config.build_battery()
    write_json(config.out_dir / "fitted_models.json", {
        "format_version": 1,
        "motor": {**motor.to_dict(), "settings": config.motor_settings},
        "battery": {**battery.to_dict(), "settings": config.battery_settings},
    })
    print(f"motor loss fit rmse {100 * motor.fit_rmse_norm:.2f}% | "
          f"battery open-circuit fit rmse {100 * battery.fit_rmse_norm:.2f}%")
    print(f"wrote {config.out_dir / 'fitted_models.json'}")
    return EXIT_OK


def _sweep_note(result) -> str:
    n_ok = len(result.feasible_points())
    if n_ok == len(result.points):
        return "all sizes feasible"
    return f"{n_ok} of {len(result.points)} sizes feasible (rest recorded in sweep.json)"


def _cmd_optimize(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    output = run_study(config, adapter=make_adapter(config), with_validation=False)
    best = output.sweep_result.best_point
    print(f"best motor size {best.p_em_max:.0f} W, TCO {best.tco:.1f} eur, "
          f"battery {best.e_b_max:.0f} Wh, m_v {best.m_v:.2f} kg; "
          + _sweep_note(output.sweep_result))
    print(f"artifacts in {output.out_dir}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .study import validate_artifacts
    validation = validate_artifacts(args.artifacts)
    print(json.dumps(validation, indent=1, sort_keys=True))
    return EXIT_OK if validation.get("feasible") else EXIT_INFEASIBLE


def _cmd_report(args) -> int:
    out = report(args.artifacts, args.out_dir or "report")
    print(f"wrote {out['comparison']} covering {', '.join(out['studies'])}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if args.dry_run:
        print(json.dumps(plan(config), indent=1, sort_keys=True))
        return EXIT_OK
    output = run_study(config, adapter=make_adapter(config))
    report([output.out_dir], output.out_dir / "report")
    best = output.sweep_result.best_point
    print(f"{config.label}: best {best.p_em_max:.0f} W, TCO {best.tco:.1f} eur, "
          f"gap {output.validation['gap_percent']:.2f}%; "
          + _sweep_note(output.sweep_result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microtco",
        description="TCO-optimal micromobility powertrain design",
    )
    parser.add_argument("--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cycle", help="ingest or synthesize a drive cycle")
    p.add_argument("--builtin", help="built-in cycle name")
    p.add_argument("--input", help="cycle CSV to ingest")
    p.add_argument("--output", required=True, help="where to write the cycle CSV")
    p.add_argument("--dt", type=float, default=1.0, help="target sample time [s]")
    p.add_argument("--cap-kmh", type=float, help="speed cap [km/h]")
    p.add_argument("--hilly", action="store_true", help="apply the builtin hill profile")
    p.add_argument("--gradient-json", help="JSON file with a gradient profile spec")
    p.add_argument("--no-speed-adjust", action="store_true",
                   help="keep the flat speed trace on climbs")
    p.set_defaults(func=_cmd_cycle)

    p = sub.add_parser("fit", help="fit the motor and battery models")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("optimize", help="sweep motor sizes and pick the TCO optimum")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--step-w", type=float, help="override the sweep step")
    p.add_argument("--workers", type=int, help="parallel sweep workers")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("validate", help="show the nonlinear validation summary")
    p.add_argument("--artifacts", required=True, help="study artifact directory")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("report", help="compare one or more studies")
    p.add_argument("--artifacts", nargs="+", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("run", help="full pipeline: fit, optimize, validate, report")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--step-w", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--dry-run", action="store_true",
                   help="print the resolved plan and write nothing")
    p.set_defaults(func=_cmd_run)
    return parser


def _error_payload(exc: Exception, code: int) -> dict:
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": code}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps(_error_payload(exc, EXIT_CONFIG)), file=sys.stderr)
        return EXIT_CONFIG
    except (SweepError, ConvergenceError) as exc:
        payload = _error_payload(exc, EXIT_INFEASIBLE)
        if getattr(exc, "diagnostics", None):
            payload["diagnostics"] = {str(k): v for k, v in exc.diagnostics.items()}
        print(json.dumps(payload), file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverFailure as exc:
        print(json.dumps(_error_payload(exc, EXIT_SOLVER)), file=sys.stderr)
        return EXIT_SOLVER
    except ValidationError as exc:
        print(json.dumps(_error_payload(exc, EXIT_CONFIG)), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
