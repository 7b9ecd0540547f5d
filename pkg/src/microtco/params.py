"""Vehicle parameter sets, power demand, mass closure and design requirements.

Parameters mirror the simulation-parameter table of the study configs
(key names and units are the same there); the dataclass itself stores
speeds in m/s and the start gradient as a rise/run fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cycles import DriveCycle
from .errors import ValidationError

FGT = "fgt"
CVT = "cvt"


@dataclass(frozen=True)
class VehicleParams:
    # masses and chassis
    m_d: float            # driver mass [kg]
    m_f: float            # frame mass [kg]
    c_rr: float           # rolling resistance [-]
    g: float              # gravity [m/s^2]
    rho_a: float          # air density [kg/m^3]
    c_d: float            # drag coefficient [-]
    A_f: float            # frontal area [m^2]
    r_w: float            # wheel rolling radius [m]
    # driveline
    gamma_fd: float       # final drive ratio [-]
    eta_gb: float         # gearbox efficiency [-]
    eta_fd: float         # final drive efficiency [-]
    R_b: float            # regenerative braking fraction [0..1]
    transmission: str     # "fgt" | "cvt"
    c_f: float | None     # CVT ratio coverage gamma_max/gamma_min [-]
    omega_em_max: float   # max motor speed [rad/s]
    # battery window and auxiliaries
    P_aux: float          # auxiliary power [W]
    zeta_min: float       # min state of energy fraction [-]
    zeta_max: float       # max state of energy fraction [-]
    # specific masses
    rho_em: float         # motor [kg/kW]
    rho_bat: float        # battery [kg/kWh]
    rho_fgt: float        # fixed gear: m_gb = rho_fgt * gamma^2 [kg]
    m_cvt_base: float     # CVT base mass [kg]
    rho_cvt: float        # CVT: m_gb = m_cvt_base + rho_cvt * gamma_max^2 [kg]
    # specific costs
    c_el: float           # electricity [eur/kWh]
    c_bat: float          # battery [eur/kWh]
    c_em: float           # motor incl. gearbox [eur/kW]
    c_add: float          # additional vehicle cost [eur]
    # requirements
    D_max: float          # lifetime distance until battery end-of-life [km]
    D_exp: float          # expected range on one charge [km]
    t_acc: float          # time to top speed [s]
    theta_start: float    # start gradient [rise/run fraction]
    v_max: float          # top speed [m/s]
    # parsed but unused by any model equation; surfaced in reports only
    mu_x: float = 0.4     # tire friction coefficient [-]

    def __post_init__(self):
        for name in ("eta_gb", "eta_fd"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValidationError(f"{name} must be in (0, 1], got {value}")
        if not 0.0 <= self.R_b <= 1.0:
            raise ValidationError(f"R_b must be in [0, 1], got {self.R_b}")
        if not 0.0 <= self.zeta_min < self.zeta_max <= 1.0:
            raise ValidationError("need 0 <= zeta_min < zeta_max <= 1")
        for name in ("m_d", "m_f", "g", "rho_a", "A_f", "r_w", "gamma_fd",
                     "omega_em_max", "rho_em", "rho_bat", "c_bat", "c_em",
                     "D_max", "D_exp", "t_acc", "v_max"):
            if getattr(self, name) <= 0.0:
                raise ValidationError(f"{name} must be positive")
        if self.transmission not in (FGT, CVT):
            raise ValidationError(f"transmission must be '{FGT}' or '{CVT}'")
        if self.transmission == CVT:
            if self.c_f is None or self.c_f < 1.0:
                raise ValidationError("CVT requires ratio coverage c_f >= 1")

    @property
    def eta_drive(self) -> float:
        """Combined gearbox and final-drive efficiency."""
        return self.eta_gb * self.eta_fd

    @property
    def theta_start_angle(self) -> float:
        return math.atan(self.theta_start)

    def with_transmission(self, transmission: str, **overrides) -> "VehicleParams":
        return replace(self, transmission=transmission, **overrides)


# Table-style parameter dicts; keys and units match the study config files.
SCOOTER_TABLE = {
    "m_d": 75.0, "c_rr": 0.03, "g": 9.81, "rho_a": 1.225, "A_f": 0.68,
    "c_d": 1.0, "eta_fd": 1.0, "eta_gb": 0.97, "gamma_fd": 1.0, "R_b": 0.5,
    "r_w": 0.125, "mu_x": 0.4, "omega_em_max": 600.0, "P_aux": 10.0,
    "zeta_min": 0.2, "zeta_max": 1.0, "m_f": 10.0, "D_max_km": 8000.0,
    "rho_em": 0.5, "rho_bat": 4.73, "rho_fgt": 0.01,
    "c_el": 0.22, "c_bat": 285.0, "c_em": 101.0, "c_add": 88.0,
    "t_acc": 7.5, "theta_start_pct": 10.0, "D_exp_km": 25.0,
    "v_max_kmh": 25.0, "transmission": "fgt",
}

MOPED_FGT_TABLE = {
    "m_d": 75.0, "c_rr": 0.015, "g": 9.81, "rho_a": 1.225, "A_f": 0.7,
    "c_d": 0.7, "eta_fd": 1.0, "eta_gb": 0.97, "gamma_fd": 1.0, "R_b": 0.5,
    "r_w": 0.193, "mu_x": 0.4, "omega_em_max": 600.0, "P_aux": 10.0,
    "zeta_min": 0.2, "zeta_max": 1.0, "m_f": 60.0, "D_max_km": 120000.0,
    "rho_em": 0.5, "rho_bat": 4.73, "rho_fgt": 0.075,
    "c_el": 0.22, "c_bat": 285.0, "c_em": 101.0, "c_add": 209.0,
    "t_acc": 11.0, "theta_start_pct": 20.0, "D_exp_km": 100.0,
    "v_max_kmh": 45.0, "transmission": "fgt",
}

MOPED_CVT_TABLE = dict(
    MOPED_FGT_TABLE,
    eta_fd=0.97, eta_gb=0.88, c_f=2.7, m_cvt_base=0.5, rho_cvt=0.05,
    c_em=150.0, transmission="cvt",
)


def params_from_table(table: dict) -> VehicleParams:
    """Build VehicleParams from a config-style dict (table units)."""
    t = dict(table)
    kind = t.pop("transmission")
    return VehicleParams(
        m_d=t["m_d"], m_f=t["m_f"], c_rr=t["c_rr"], g=t["g"],
        rho_a=t["rho_a"], c_d=t["c_d"], A_f=t["A_f"], r_w=t["r_w"],
        gamma_fd=t["gamma_fd"], eta_gb=t["eta_gb"], eta_fd=t["eta_fd"],
        R_b=t["R_b"], transmission=kind,
        c_f=t.get("c_f"), omega_em_max=t["omega_em_max"],
        P_aux=t["P_aux"], zeta_min=t["zeta_min"], zeta_max=t["zeta_max"],
        rho_em=t["rho_em"], rho_bat=t["rho_bat"],
        rho_fgt=t.get("rho_fgt", 0.0),
        m_cvt_base=t.get("m_cvt_base", 0.0), rho_cvt=t.get("rho_cvt", 0.0),
        c_el=t["c_el"], c_bat=t["c_bat"], c_em=t["c_em"], c_add=t["c_add"],
        D_max=t["D_max_km"], D_exp=t["D_exp_km"], t_acc=t["t_acc"],
        theta_start=t["theta_start_pct"] / 100.0,
        v_max=t["v_max_kmh"] / 3.6, mu_x=t.get("mu_x", 0.4),
    )


def scooter_params() -> VehicleParams:
    return params_from_table(SCOOTER_TABLE)


def moped_params(transmission: str = FGT) -> VehicleParams:
    if transmission == FGT:
        return params_from_table(MOPED_FGT_TABLE)
    return params_from_table(MOPED_CVT_TABLE)


# ---------------------------------------------------------------------------
# Longitudinal power demand


def required_power_point(params: VehicleParams, m: float, v: float,
                         a: float = 0.0, grade_angle: float = 0.0) -> float:
    """Propulsion power at the wheel for one operating point."""
    force = m * (a + params.c_rr * params.g * math.cos(grade_angle)
                 + params.g * math.sin(grade_angle))
    drag = 0.5 * params.rho_a * params.c_d * params.A_f * v * v
    return (force + drag) * v


def required_power(cycle: DriveCycle, params: VehicleParams, m: float) -> np.ndarray:
    """Per-sample propulsion power demand at gross mass ``m``."""
    if m <= 0.0:
        raise ValidationError(f"gross mass must be positive, got {m}")
    v, a, theta = cycle.speed, cycle.accel, cycle.grade_angle
    force = m * (a + params.c_rr * params.g * np.cos(theta)
                 + params.g * np.sin(theta))
    drag = 0.5 * params.rho_a * params.c_d * params.A_f * v * v
    return (force + drag) * v


# ---------------------------------------------------------------------------
# Mass closure


@dataclass(frozen=True)
class MassBreakdown:
    m_em: float
    m_bat: float
    m_gb: float
    m_f: float

    @property
    def m_v(self) -> float:
        """Vehicle mass (no driver)."""
        return self.m_em + self.m_bat + self.m_gb + self.m_f

    def gross(self, m_d: float) -> float:
        return self.m_v + m_d


def mass_closure(params: VehicleParams, p_em_max: float, e_b_max: float,
                 gamma_sizing: float) -> MassBreakdown:
    """Component masses implied by a sizing.

    ``gamma_sizing`` is the fixed gear ratio for an FGT and the maximum
    ratio for a CVT. The transmission-mass inequality is taken with
    equality: minimum mass is always optimal.
    """
    if min(p_em_max, e_b_max, gamma_sizing) <= 0.0:
        raise ValidationError("sizing inputs must be positive")
    if params.transmission == FGT:
        m_gb = params.rho_fgt * gamma_sizing ** 2
    else:
        m_gb = params.m_cvt_base + params.rho_cvt * gamma_sizing ** 2
    return MassBreakdown(
        m_em=params.rho_em * p_em_max / 1000.0,
        m_bat=params.rho_bat * e_b_max / 1000.0,
        m_gb=m_gb,
        m_f=params.m_f,
    )


# ---------------------------------------------------------------------------
# Performance requirements (constant once motor size and mass are fixed)


@dataclass(frozen=True)
class RequirementReport:
    """Gear-ratio bounds and motor-power feasibility for one candidate.

    For an FGT every bound applies to the single ratio. For a CVT the
    gradeability bound applies to gamma_max and the top-speed bounds to
    gamma_min; ``gamma_lo``/``gamma_hi`` are already mapped onto the
    sizing variable (gamma_fgt or gamma_min).
    """

    gamma_lb_grade: float        # from standstill gradeability
    gamma_lb_topspeed: float     # torque limit at top speed
    gamma_ub_topspeed: float     # power droop at top speed (inf if none)
    p_required_acc: float        # minimum motor power for the sprint
    p_em_max: float
    gamma_lo: float
    gamma_hi: float

    @property
    def acc_feasible(self) -> bool:
        return self.p_em_max >= self.p_required_acc - 1e-9

    @property
    def band_feasible(self) -> bool:
        return self.gamma_lo <= self.gamma_hi + 1e-12

    @property
    def feasible(self) -> bool:
        return self.acc_feasible and self.band_feasible

    def binding(self) -> list[str]:
        names = []
        if not self.acc_feasible:
            names.append("acceleration")
        if not self.band_feasible:
            if self.gamma_lb_grade >= self.gamma_lb_topspeed:
                names.append("gradeability")
            else:
                names.append("top-speed torque")
            names.append("top-speed power")
        return names


def check_requirements(params: VehicleParams, p_em_max: float,
                       t_em_max: float, km: tuple[float, float],
                       m: float) -> RequirementReport:
    """Evaluate the standstill-gradeability, top-speed and acceleration
    requirements at gross mass ``m`` for a scaled motor envelope."""
    if min(p_em_max, t_em_max, m) <= 0.0:
        raise ValidationError("p_em_max, t_em_max and m must be positive")
    km1, km2 = km
    eta = params.eta_drive

    # start from standstill on the start gradient
    wheel_torque = m * params.g * math.sin(params.theta_start_angle) * params.r_w
    gamma_lb_grade = wheel_torque / (eta * t_em_max * params.gamma_fd)

    # hold top speed on a flat road within the torque and power envelopes
    p_top = required_power_point(params, m, params.v_max)
    t_req = p_top / params.v_max * params.r_w
    gamma_lb_top = t_req / (t_em_max * eta * params.gamma_fd)
    slack = km2 * params.r_w / params.v_max - t_req / eta
    if km1 < 0.0:
        gamma_ub_top = slack / (-km1 * params.gamma_fd)
    else:
        gamma_ub_top = math.inf if slack >= 0.0 else -math.inf

    # reach top speed within the sprint time
    p_required_acc = params.v_max ** 2 * m / (params.t_acc * eta)

    if params.transmission == CVT:
        lo = max(gamma_lb_grade / params.c_f, gamma_lb_top)
    else:
        lo = max(gamma_lb_grade, gamma_lb_top)
    return RequirementReport(
        gamma_lb_grade=gamma_lb_grade,
        gamma_lb_topspeed=gamma_lb_top,
        gamma_ub_topspeed=gamma_ub_top,
        p_required_acc=p_required_acc,
        p_em_max=p_em_max,
        gamma_lo=lo,
        gamma_hi=gamma_ub_top,
    )
