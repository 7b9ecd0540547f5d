"""Nonlinear forward validation of a finished design.

Replays the optimizer's plan through the original component models: the
exact drive power split with a friction brake, bilinear lookups on the
reference loss map instead of the speed-quadratic fit, and the exact
battery quadratic solved on the cell table instead of the affine fit.
The consumption difference between this pass and the conic solution is
the headline accuracy figure of the convex pipeline.

The ratio trajectory is replayed verbatim for a CVT (the validator checks
the optimizer's plan; it does not re-derive a controller).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .battery import BatteryModel
from .cycles import DriveCycle
from .design import DesignPoint
from .errors import ValidationError
from .motor import MotorModel, ScaledMotor, scale_motor
from .params import CVT, VehicleParams, required_power

#: envelope flags fire above this relative excess; absorbs solver
#: feasibility tolerance and the mass-loop eps (both orders below it)
FLAG_RTOL = 1e-4


@dataclass(frozen=True)
class SimulationTrace:
    t: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    gamma: np.ndarray
    p_req: np.ndarray
    p_em: np.ndarray
    p_brake: np.ndarray
    p_loss: np.ndarray
    p_b: np.ndarray
    p_i: np.ndarray
    e_b: np.ndarray              # one more entry than the step arrays
    torque_limited: np.ndarray   # EM torque ceiling violated
    power_limited: np.ndarray    # EM power line or battery power ceiling violated
    cone_infeasible: np.ndarray  # battery cannot source the terminal power
    dt: float

    @property
    def delta_e_b(self) -> float:
        """Consumed battery energy over the cycle [Wh]."""
        return float(self.e_b[0] - self.e_b[-1])

    @property
    def feasible(self) -> bool:
        return not (self.torque_limited.any() or self.power_limited.any()
                    or self.cone_infeasible.any())

    def flag_counts(self) -> dict:
        return {
            "torque_limited": int(self.torque_limited.sum()),
            "power_limited": int(self.power_limited.sum()),
            "cone_infeasible": int(self.cone_infeasible.sum()),
        }


def simulate(design: DesignPoint, cycle: DriveCycle, params: VehicleParams,
             motor: MotorModel, battery: BatteryModel,
             battery_from_fit: bool = False) -> SimulationTrace:
    """Quasi-static forward pass of a design on the original models.

    ``battery_from_fit`` substitutes the affine open-circuit fit for the
    cell table, isolating the motor-fit contribution to the consumption
    gap from the battery-fit one.
    """
    n = cycle.n_samples - 1
    dt = cycle.dt
    m = design.m_v + params.m_d
    eta = params.eta_drive

    scaled = motor if isinstance(motor, ScaledMotor) else scale_motor(motor, design.p_em_max)
    if abs(scaled.p_em_max - design.p_em_max) > 1e-9 * design.p_em_max:
        raise ValidationError("motor scale does not match the design's motor size")

    if params.transmission == CVT:
        if design.gamma_trajectory is None:
            raise ValidationError("CVT validation needs the solved ratio trajectory")
        gamma = np.asarray(design.gamma_trajectory, dtype=float)
        if gamma.size != n:
            raise ValidationError("ratio trajectory length does not match the cycle")
    else:
        gamma = np.full(n, design.gamma)

    v = cycle.speed[:n]
    p_req = required_power(cycle, params, m)[:n]
    omega = v * params.gamma_fd * gamma / params.r_w

    t_max = scaled.t_em_max
    env_power = scaled.km1 * omega + scaled.km2
    env_lo = -np.minimum(t_max * omega, env_power)

    regen_target = eta * params.R_b * p_req if params.R_b > 0.0 else np.zeros(n)
    p_em = np.where(p_req >= 0.0, p_req / eta, np.maximum(regen_target, env_lo))

    with np.errstate(divide="ignore", invalid="ignore"):
        torque = np.where(omega > 0.0, p_em / omega, 0.0)
    torque_limited = np.abs(torque) > t_max * (1.0 + FLAG_RTOL)
    power_limited = np.abs(p_em) > env_power + FLAG_RTOL * scaled.km2

    p_loss = scaled.map_loss(omega, torque)
    p_dc = p_em + p_loss
    p_b = p_dc + params.P_aux

    if params.R_b > 0.0:
        wheel_regen = np.where(p_req < 0.0, p_em / (eta * params.R_b), 0.0)
    else:
        wheel_regen = np.zeros(n)
    # nonnegative by construction of p_em; the floor removes float dust
    p_brake = np.maximum(np.where(p_req < 0.0, wheel_regen - p_req, 0.0), 0.0)

    e_b = np.empty(n + 1)
    e_b[0] = params.zeta_max * design.e_b_max
    p_i = np.empty(n)
    cone_infeasible = np.zeros(n, dtype=bool)
    bat_limited = np.zeros(n, dtype=bool)
    for k in range(n):
        if battery_from_fit:
            p_oc = battery.p_oc(e_b[k], design.e_b_max)
            p_lim = battery.p_i_max(e_b[k], design.e_b_max)
        else:
            p_oc = battery.p_oc_table(e_b[k], design.e_b_max)
            p_lim = battery.p_i_max_table(e_b[k], design.e_b_max)
        disc = p_oc * p_oc - 4.0 * p_oc * p_b[k]
        if disc < 0.0:
            cone_infeasible[k] = True
            p_i[k] = 0.5 * p_oc   # closest deliverable point
        else:
            p_i[k] = 0.5 * (p_oc - np.sqrt(disc))
        if abs(p_i[k]) > p_lim * (1.0 + FLAG_RTOL):
            bat_limited[k] = True
        e_b[k + 1] = e_b[k] - p_i[k] * dt / 3600.0

    return SimulationTrace(
        t=cycle.timestamps[:n], v=v, omega=omega, gamma=gamma,
        p_req=p_req, p_em=p_em, p_brake=p_brake, p_loss=p_loss,
        p_b=p_b, p_i=p_i, e_b=e_b,
        torque_limited=torque_limited,
        power_limited=power_limited | bat_limited,
        cone_infeasible=cone_infeasible, dt=dt,
    )


def consumption_gap(design: DesignPoint, trace: SimulationTrace) -> float:
    """Relative consumption difference between the nonlinear pass and the
    conic optimum."""
    delta_opt = float(design.trajectories["E_b_wh"][0] - design.trajectories["E_b_wh"][-1])
    if delta_opt == 0.0:
        return 0.0 if trace.delta_e_b == 0.0 else np.inf
    return abs(trace.delta_e_b - delta_opt) / abs(delta_opt)


@dataclass(frozen=True)
class OperatingPoints:
    omega: np.ndarray
    torque: np.ndarray
    efficiency: np.ndarray
    motoring: np.ndarray          # mask: positive mechanical power

    @property
    def mean_motoring_efficiency(self) -> float:
        if not self.motoring.any():
            return float("nan")
        return float(np.mean(self.efficiency[self.motoring]))


def operating_points(trace: SimulationTrace, motor) -> OperatingPoints:
    """Map operating points of a trace; regeneration carries negative torque."""
    active = trace.omega > 0.0
    omega = trace.omega[active]
    torque = trace.p_em[active] / omega
    eff = motor.efficiency(omega, torque)
    return OperatingPoints(
        omega=omega, torque=torque, efficiency=np.asarray(eff, dtype=float),
        motoring=trace.p_em[active] > 0.0,
    )
