"""Study configuration: a TOML file is the single source of parameters.

The ``[vehicle]`` section mirrors the simulation-parameter table key for
key (same units); physical constants that rarely change may be omitted
and are then defaulted with a logged notice. Everything the pipeline
needs — cycle source, sweep grid, solver tolerances, component-model
settings, output directory — lives in the same file so a study is fully
reproducible from it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .battery import BatteryModel, CellTable, default_cell_table, fit_battery
from .cycles import (DriveCycle, GradientProfileSpec, builtin_cycle, cap_speed,
                     load_cycle, synthesize_gradient)
from .errors import ConfigError
from .motor import MotorModel, reference_motor
from .params import CVT, VehicleParams, params_from_table

log = logging.getLogger("microtco")

#: vehicle keys that may be omitted (value = conventional default)
VEHICLE_DEFAULTS = {
    "g": 9.81,
    "rho_a": 1.225,
    "mu_x": 0.4,
    "gamma_fd": 1.0,
    "R_b": 0.5,
    "P_aux": 10.0,
    "zeta_min": 0.2,
    "zeta_max": 1.0,
    "omega_em_max": 600.0,
}

VEHICLE_REQUIRED = (
    "m_d", "c_rr", "A_f", "c_d", "eta_fd", "eta_gb", "r_w", "m_f",
    "D_max_km", "rho_em", "rho_bat", "c_el", "c_bat", "c_em", "c_add",
    "t_acc", "theta_start_pct", "D_exp_km", "v_max_kmh", "transmission",
)


@dataclass(frozen=True)
class SweepSettings:
    p_min_w: float
    p_max_w: float
    step_w: float = 10.0
    eps_kg: float = 1e-3
    max_iter: int = 25
    m_v0_kg: float | None = None
    workers: int = 1

    def grid(self) -> list[float]:
        n = int(round((self.p_max_w - self.p_min_w) / self.step_w))
        return [self.p_min_w + i * self.step_w for i in range(n + 1)]


@dataclass(frozen=True)
class StudyConfig:
    label: str
    params: VehicleParams
    cycle: DriveCycle
    sweep: SweepSettings
    out_dir: Path
    motor_settings: dict
    battery_settings: dict
    solver_settings: dict
    raw: dict = field(repr=False, default_factory=dict)

    def build_motor(self) -> MotorModel:
        s = self.motor_settings
        return reference_motor(
            p_max_ref=s["p_max_ref_w"],
            omega_max=self.params.omega_em_max,
            eta_peak=s["eta_peak"],
            fractions=tuple(s["loss_fractions"]),
            n_omega=s["n_omega"], n_torque=s["n_torque"],
            n_levels=s["n_levels"],
        )

    def build_battery(self) -> BatteryModel:
        s = self.battery_settings
        if s.get("use_default_cell", True):
            cell = default_cell_table()
        else:
            cell = CellTable(
                soe=s["soe"], voc=s["voc"], r=s["r"], i_max=s["i_max"],
                e_cell_wh=s["e_cell_wh"], capacity_ah=s["capacity_ah"],
            )
        return fit_battery(cell, series=s["series"], parallel=s["parallel"],
                           soe_window=(self.params.zeta_min, self.params.zeta_max))


def _vehicle_table(section: dict, label: str) -> dict:
    table = dict(section)
    missing = [k for k in VEHICLE_REQUIRED if k not in table]
    if missing:
        raise ConfigError(f"[vehicle] in {label} is missing required key(s): {missing}")
    kind = table["transmission"]
    if kind not in ("fgt", "cvt"):
        raise ConfigError(f"transmission must be 'fgt' or 'cvt', got {kind!r}")
    if kind == "fgt" and "rho_fgt" not in table:
        raise ConfigError(f"[vehicle] in {label} is missing required key(s): ['rho_fgt']")
    if kind == CVT:
        for key in ("c_f", "m_cvt_base", "rho_cvt"):
            if key not in table:
                raise ConfigError(f"[vehicle] in {label} is missing required key(s): ['{key}']")
    for key, value in VEHICLE_DEFAULTS.items():
        if key not in table:
            table[key] = value
            log.info("config %s: defaulting vehicle.%s = %s", label, key, value)
    return table


def _build_cycle(section: dict, config_dir: Path) -> DriveCycle:
    kind = section.get("kind", "builtin")
    dt = float(section.get("dt", 1.0))
    if kind == "builtin":
        name = section.get("name")
        if not name:
            raise ConfigError("[cycle] kind='builtin' needs a 'name'")
        hilly = bool(section.get("hilly", False))
        if hilly and "gradient" in section:
            g = section["gradient"]
            spec = GradientProfileSpec(
                segments=tuple((seg[0], seg[1]) for seg in g["segments"]),
                smoothing_window=int(g.get("smoothing_window", 5)),
            )
            cycle = builtin_cycle(name, hilly=False, dt=dt)
            cycle = synthesize_gradient(cycle, spec,
                                        speed_adjust=bool(section.get("speed_adjust", True)),
                                        label=f"{name}-hilly")
        else:
            cycle = builtin_cycle(name, hilly=hilly, dt=dt,
                                  speed_adjust=bool(section.get("speed_adjust", True)))
    elif kind == "file":
        path = section.get("path")
        if not path:
            raise ConfigError("[cycle] kind='file' needs a 'path'")
        path = Path(path)
        if not path.is_absolute():
            path = config_dir / path
        cycle = load_cycle(path, dt_target=dt)
        if section.get("hilly", False):
            g = section.get("gradient")
            if not g:
                raise ConfigError("[cycle] hilly file cycles need a [cycle.gradient] table")
            spec = GradientProfileSpec(
                segments=tuple((seg[0], seg[1]) for seg in g["segments"]),
                smoothing_window=int(g.get("smoothing_window", 5)),
            )
            cycle = synthesize_gradient(cycle, spec,
                                        speed_adjust=bool(section.get("speed_adjust", True)))
    else:
        raise ConfigError(f"[cycle] kind must be 'builtin' or 'file', got {kind!r}")
    if "v_cap_kmh" in section:
        cycle = cap_speed(cycle, float(section["v_cap_kmh"]) / 3.6)
    return cycle


def load_config(path) -> StudyConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)

    label = raw.get("label", path.stem)
    if "vehicle" not in raw:
        raise ConfigError(f"{path} has no [vehicle] section")
    params = params_from_table(_vehicle_table(raw["vehicle"], label))

    if "cycle" not in raw:
        raise ConfigError(f"{path} has no [cycle] section")
    cycle = _build_cycle(raw["cycle"], path.parent)

    sw = raw.get("sweep", {})
    for key in ("p_min_w", "p_max_w"):
        if key not in sw:
            raise ConfigError(f"[sweep] is missing required key '{key}'")
    sweep = SweepSettings(
        p_min_w=float(sw["p_min_w"]), p_max_w=float(sw["p_max_w"]),
        step_w=float(sw.get("step_w", 10.0)),
        eps_kg=float(sw.get("eps_kg", 1e-3)),
        max_iter=int(sw.get("max_iter", 25)),
        m_v0_kg=float(sw["m_v0_kg"]) if "m_v0_kg" in sw else None,
        workers=int(sw.get("workers", 1)),
    )
    if sweep.p_max_w <= sweep.p_min_w or sweep.step_w <= 0:
        raise ConfigError("[sweep] needs p_max_w > p_min_w and step_w > 0")

    mo = raw.get("motor", {})
    motor_settings = {
        "p_max_ref_w": float(mo.get("p_max_ref_w", 1000.0)),
        "eta_peak": float(mo.get("eta_peak", 0.85)),
        "loss_fractions": [float(x) for x in mo.get("loss_fractions",
                                                    [0.10, 0.30, 0.42, 0.18])],
        "n_omega": int(mo.get("n_omega", 61)),
        "n_torque": int(mo.get("n_torque", 61)),
        "n_levels": int(mo.get("n_levels", 201)),
    }

    ba = raw.get("battery", {})
    battery_settings = {
        "use_default_cell": "soe" not in ba,
        "series": int(ba.get("series", 13)),
        "parallel": int(ba.get("parallel", 1)),
    }
    if not battery_settings["use_default_cell"]:
        battery_settings.update(
            soe=[float(x) for x in ba["soe"]],
            voc=[float(x) for x in ba["voc"]],
            r=[float(x) for x in ba["r"]],
            i_max=[float(x) for x in ba["i_max"]],
            e_cell_wh=float(ba["e_cell_wh"]),
            capacity_ah=float(ba["capacity_ah"]),
        )

    so = raw.get("solver", {})
    solver_settings = {
        "feasibility_tol": float(so.get("feasibility_tol", 1e-8)),
        "gap_tol": float(so.get("gap_tol", 1e-8)),
        "max_iter": int(so.get("max_iter", 200)),
    }

    out = raw.get("output", {})
    out_dir = Path(out.get("dir", f"artifacts/{label}"))
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir

    return StudyConfig(
        label=label, params=params, cycle=cycle, sweep=sweep,
        out_dir=out_dir, motor_settings=motor_settings,
        battery_settings=battery_settings, solver_settings=solver_settings,
        raw=raw,
    )
