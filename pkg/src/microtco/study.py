"""End-to-end study pipeline: fit, sweep, validate, emit result tables.

``run_study`` executes one configuration and writes a self-contained
artifact directory; ``report`` joins one or more such directories into a
comparison table plus plot-ready trajectory files.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (ARTIFACT_FORMAT_VERSION, read_csv, read_json,
                        write_csv, write_json)
from .config import StudyConfig
from .cycles import save_cycle
from .design import SweepResult, sweep
from .errors import SolverFailure, SweepError, ValidationError
from .params import CVT
from .simulate import consumption_gap, operating_points, simulate
from .solvers import ClarabelAdapter, SolverTolerances
from .socp import RELAXATION_RTOL

log = logging.getLogger("microtco")


@dataclass(frozen=True)
class StudyOutput:
    label: str
    out_dir: Path
    sweep_result: SweepResult
    validation: dict


def make_adapter(config: StudyConfig) -> ClarabelAdapter:
    env_tol = SolverTolerances.from_env()
    default = SolverTolerances()
    if env_tol != default:
        tolerances = env_tol   # environment override wins
    else:
        tolerances = SolverTolerances(
            feasibility=config.solver_settings["feasibility_tol"],
            gap=config.solver_settings["gap_tol"],
        )
    return ClarabelAdapter(tolerances=tolerances,
                           max_iter=config.solver_settings["max_iter"])


def plan(config: StudyConfig) -> dict:
    """The resolved study plan (what --dry-run prints)."""
    return {
        "label": config.label,
        "transmission": config.params.transmission,
        "cycle": {
            "label": config.cycle.label,
            "samples": config.cycle.n_samples,
            "dt_s": config.cycle.dt,
            "distance_m": config.cycle.d_cycle,
            "max_speed_mps": float(config.cycle.speed.max()),
        },
        "grid_w": config.sweep.grid(),
        "eps_kg": config.sweep.eps_kg,
        "out_dir": str(config.out_dir),
        "solver": config.solver_settings,
    }


def run_study(config: StudyConfig, adapter=None,
              with_validation: bool = True) -> StudyOutput:
    """Fit components, sweep motor sizes, validate the winner, write artifacts.

    ``with_validation=False`` stops after the sweep (the ``optimize``
    subcommand); a later ``validate`` recomputes the nonlinear pass from
    the artifact directory alone.
    """
    if adapter is None:
        adapter = make_adapter(config)
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)

    motor = config.build_motor()
    battery = config.build_battery()
    write_json(out / "fitted_models.json", {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "generator": f"microtco {__version__}",
        "motor": {**motor.to_dict(), "settings": config.motor_settings},
        "battery": {**battery.to_dict(), "settings": config.battery_settings},
    })
    log.info("%s: motor fit rmse %.3f%%, battery fit rmse %.3f%%",
             config.label, 100 * motor.fit_rmse_norm, 100 * battery.fit_rmse_norm)

    try:
        result = sweep(config.cycle, config.params, motor, battery,
                       config.sweep.grid(), adapter=adapter,
                       eps=config.sweep.eps_kg, max_iter=config.sweep.max_iter,
                       m_v0=config.sweep.m_v0_kg, max_workers=config.sweep.workers)
    except SweepError as exc:
        reasons = [r for rs in getattr(exc, "diagnostics", {}).values() for r in rs]
        if any("failure" in str(r) for r in reasons):
            raise SolverFailure(str(exc)) from exc
        raise

    best = result.best_point
    log.info("%s: best size %.0f W, TCO %.1f eur, m_v %.2f kg",
             config.label, best.p_em_max, best.tco, best.m_v)

    write_json(out / "study.json", {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "generator": f"microtco {__version__}",
        "label": config.label,
        "transmission": config.params.transmission,
        "cycle": plan(config)["cycle"],
        "vehicle": config.raw.get("vehicle", {}),
        "sweep": {
            "p_min_w": config.sweep.p_min_w, "p_max_w": config.sweep.p_max_w,
            "step_w": config.sweep.step_w, "eps_kg": config.sweep.eps_kg,
        },
        "notes": {
            "mu_x_unused": "the tire friction coefficient is parsed but no "
                           "model equation consumes it (no traction-limit "
                           "constraint in the formulation)",
        },
    })
    write_json(out / "sweep.json", result.to_dict())
    save_cycle(config.cycle, out / "cycle.csv")
    _write_trajectory_csv(out / "best_trajectory.csv", config, best)
    _write_results_table(out / "results_table.csv", config, best)

    validation = {}
    if with_validation:
        validation = _validate(out, config.label, best, config.cycle,
                               config.params, motor, battery)
    return StudyOutput(label=config.label, out_dir=out,
                       sweep_result=result, validation=validation)


def _validate(out: Path, label: str, best, cycle, params, motor, battery) -> dict:
    trace = simulate(best, cycle, params, motor, battery)
    gap = consumption_gap(best, trace)
    ops = operating_points(trace, motor)
    validation = {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "gap_percent": 100.0 * gap,
        "delta_e_b_opt_wh": float(best.trajectories["E_b_wh"][0]
                                  - best.trajectories["E_b_wh"][-1]),
        "delta_e_b_sim_wh": trace.delta_e_b,
        "flags": trace.flag_counts(),
        "feasible": trace.feasible,
        "mean_motoring_efficiency": ops.mean_motoring_efficiency,
        "relaxation_residual_max": best.residuals["max_overall"],
        "relaxation_rtol": RELAXATION_RTOL,
    }
    write_json(out / "validation.json", validation)
    _write_trace_csv(out / "trace.csv", trace)
    log.info("%s: validation gap %.3f%%, flags %s",
             label, validation["gap_percent"], validation["flags"])
    return validation


def validate_artifacts(artifact_dir) -> dict:
    """Recompute the nonlinear validation from an artifact directory.

    Everything needed is in the directory: the cycle, the vehicle table,
    the fitted component models and the winning design.
    """
    from .battery import BatteryModel
    from .config import _vehicle_table
    from .cycles import load_cycle
    from .design import DesignPoint
    from .motor import MotorModel
    from .params import params_from_table

    out = Path(artifact_dir)
    study = read_json(out / "study.json")
    if study.get("format_version") != ARTIFACT_FORMAT_VERSION:
        raise ValidationError(
            f"{out} has artifact format {study.get('format_version')}, "
            f"this build reads {ARTIFACT_FORMAT_VERSION}")
    params = params_from_table(_vehicle_table(study["vehicle"], study["label"]))
    cycle = load_cycle(out / "cycle.csv", dt_target=study["cycle"]["dt_s"])
    models = read_json(out / "fitted_models.json")
    motor = MotorModel.from_dict(models["motor"])
    battery = BatteryModel.from_dict(models["battery"])
    sweep_doc = read_json(out / "sweep.json")
    best = DesignPoint.from_dict(sweep_doc["points"][sweep_doc["best_index"]])
    return _validate(out, study["label"], best, cycle, params, motor, battery)


def write_trajectory_csv(path, point, gamma_fd: float, r_w: float) -> None:
    """Plot-ready per-step trajectories of one design point. The final row
    carries only the terminal time/speed/energy (step columns empty)."""
    tr = point.trajectories
    n = len(tr["P_em_w"])
    gamma = (tr["gamma"] if "gamma" in tr else np.full(n, point.gamma))
    omega = np.asarray(tr["v_mps"])[:n] * gamma_fd * gamma / r_w
    header = ["t_s", "v_mps", "p_em_w", "p_i_w", "e_b_wh", "gamma", "omega_em_radps"]
    rows = []
    for k in range(n):
        rows.append([tr["t_s"][k], tr["v_mps"][k], tr["P_em_w"][k], tr["P_i_w"][k],
                     tr["E_b_wh"][k], gamma[k], omega[k]])
    rows.append([tr["t_s"][n], tr["v_mps"][n], None, None, tr["E_b_wh"][n], None, None])
    write_csv(path, header, rows)


def _write_trajectory_csv(path, config: StudyConfig, best) -> None:
    write_trajectory_csv(path, best, config.params.gamma_fd, config.params.r_w)


def _write_results_table(path, config: StudyConfig, best) -> None:
    rows = [
        ("tco", best.tco, "eur"),
        ("c_comp", best.c_comp, "eur"),
        ("c_el", best.c_op, "eur"),
        ("p_m_max", best.p_em_max, "w"),
        ("e_b_max", best.e_b_max, "wh"),
        ("m_v", best.m_v, "kg"),
    ]
    if config.params.transmission == CVT:
        rows += [("gamma_min", best.gamma_min, "-"), ("gamma_max", best.gamma, "-")]
    else:
        rows += [("gamma", best.gamma, "-")]
    write_csv(path, ["quantity", "value", "unit"], rows)


def _write_trace_csv(path, trace) -> None:
    header = ["t_s", "v_mps", "omega_radps", "gamma", "p_req_w", "p_em_w",
              "p_brake_w", "p_loss_w", "p_b_w", "p_i_w", "e_b_wh",
              "torque_limited", "power_limited", "cone_infeasible"]
    rows = []
    for k in range(trace.p_em.size):
        rows.append([trace.t[k], trace.v[k], trace.omega[k], trace.gamma[k],
                     trace.p_req[k], trace.p_em[k], trace.p_brake[k],
                     trace.p_loss[k], trace.p_b[k], trace.p_i[k], trace.e_b[k],
                     bool(trace.torque_limited[k]), bool(trace.power_limited[k]),
                     bool(trace.cone_infeasible[k])])
    write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Reporting


def _load_study(out_dir: Path) -> dict:
    study = read_json(out_dir / "study.json")
    if study.get("format_version") != ARTIFACT_FORMAT_VERSION:
        raise ValidationError(
            f"{out_dir} has artifact format {study.get('format_version')}, "
            f"this build reads {ARTIFACT_FORMAT_VERSION}"
        )
    table_header, table_rows = read_csv(out_dir / "results_table.csv")
    values = {row[0]: float(row[1]) for row in table_rows}
    units = {row[0]: row[2] for row in table_rows}
    validation = read_json(out_dir / "validation.json")
    return {"label": study["label"], "dir": out_dir, "study": study,
            "values": values, "units": units, "validation": validation}


REPORT_ROWS = ("tco", "c_comp", "c_el", "p_m_max", "e_b_max", "m_v",
               "gamma", "gamma_min", "gamma_max")
PERCENT_ROWS = {"tco", "c_comp", "c_el", "p_m_max", "e_b_max", "m_v"}


def report(artifact_dirs, out_dir) -> dict:
    """Cross-study comparison table plus per-study plot-data CSVs.

    With two or more studies, every study after the first gets a delta
    column against the first study, percentage-formatted for the cost and
    sizing rows.
    """
    studies = [_load_study(Path(d)) for d in artifact_dirs]
    if not studies:
        raise ValidationError("report needs at least one artifact directory")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    header = ["quantity"] + [s["label"] for s in studies]
    if len(studies) > 1:
        header += [f"delta_{s['label']}_pct" for s in studies[1:]]
    rows = []
    base = studies[0]["values"]
    for name in REPORT_ROWS:
        if not any(name in s["values"] for s in studies):
            continue
        unit = next(s["units"][name] for s in studies if name in s["units"])
        shown = name if unit == "-" else f"{name}_{unit}"
        row = [shown] + [s["values"].get(name) for s in studies]
        if len(studies) > 1:
            for s in studies[1:]:
                a, b = base.get(name), s["values"].get(name)
                if name in PERCENT_ROWS and a not in (None, 0.0) and b is not None:
                    row.append(f"(+{(b - a) / a * 100.0:.1f}%)" if b >= a
                               else f"({(b - a) / a * 100.0:.1f}%)")
                else:
                    row.append(None)
        rows.append(row)
    rows.append(["gap_percent"] + [s["validation"]["gap_percent"] for s in studies]
                + ([None] * (len(studies) - 1) if len(studies) > 1 else []))
    write_csv(out_dir / "comparison.csv", header, rows)

    for s in studies:
        _plot_files(s, out_dir)
    return {"comparison": str(out_dir / "comparison.csv"),
            "studies": [s["label"] for s in studies]}


def _plot_files(study: dict, out_dir: Path) -> None:
    header, rows = read_csv(study["dir"] / "best_trajectory.csv")
    col = {name: i for i, name in enumerate(header)}
    label = study["label"]

    def emit(name, columns):
        out_rows = []
        for row in rows:
            vals = [row[col[c]] for c in columns]
            if any(v == "" for v in vals):
                continue
            out_rows.append(vals)
        write_csv(out_dir / f"{label}_{name}.csv", columns, out_rows)

    emit("pem_t", ["t_s", "p_em_w"])
    emit("eb_t", ["t_s", "e_b_wh"])
    emit("gamma_t", ["t_s", "gamma"])
    emit("omega_em_t", ["t_s", "omega_em_radps"])
