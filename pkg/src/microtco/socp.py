"""Transcription of the sizing-and-control problem into a conic program.

For a fixed motor size and a fixed mass iterate the problem is convex:
a linear objective (lifetime electricity plus component cost) over linear
constraints and two families of three-dimensional second-order cones, one
encoding the speed-quadratic motor loss and one the battery's internal
power. The transcription is Euler-forward over the cycle's uniform grid.

Unit conventions inside the program: powers in W, times in s, energies in
Wh (a diagonal rescaling of the energy states that keeps the battery rows
well conditioned); money enters only through the objective vector.

The emitted :class:`ConicProgram` is solver agnostic: equalities,
inequalities and cone blocks carry plain sparse matrices plus row labels,
and round-trip through JSON/NPZ, so any conforming conic solver can
consume them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .battery import BatteryModel
from .cycles import DriveCycle
from .errors import TranscriptionError, ValidationError
from .motor import ScaledMotor, exogenous_motor_power
from .params import (CVT, VehicleParams, check_requirements, required_power,
                     required_power_point)

#: relative tightness expected of the lossless relaxations at an optimum
RELAXATION_RTOL = 1e-4

#: tie-break coefficient [eur per ratio unit] on the sizing gear ratio.
#: On degenerate cycles (standstill steps only) the ratio is otherwise
#: objective-free inside one solve, letting the solver park it anywhere in
#: the requirement band and inflating the quadratic gearbox mass between
#: iterations. The pull toward the band's lower edge selects the
#: minimum-mass ratio; it is orders below every real cost sensitivity.
GAMMA_TIE_BREAK = 1e-6


class _Rows:
    """Accumulates sparse rows in deterministic order."""

    def __init__(self, n_var: int):
        self.n_var = n_var
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.rhs: list[float] = []
        self.labels: list[str] = []

    def add(self, label: str, cols_vals: list[tuple[int, float]], rhs: float) -> None:
        r = len(self.rhs)
        for c, v in cols_vals:
            if v != 0.0:
                self.rows.append(r)
                self.cols.append(c)
                self.vals.append(float(v))
        self.rhs.append(float(rhs))
        self.labels.append(label)

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.vals, (self.rows, self.cols)),
            shape=(len(self.rhs), self.n_var),
        )


@dataclass(frozen=True)
class ConeBlock:
    """Affine map into a second-order cone: H x + g in SOC(dim),
    first coordinate the bound."""

    h: sp.csr_matrix
    g: np.ndarray
    label: str

    @property
    def dim(self) -> int:
        return self.g.size


@dataclass(frozen=True)
class ConicProgram:
    n_var: int
    layout: dict
    c: np.ndarray
    c0: float
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    eq_labels: list
    a_in: sp.csr_matrix
    b_in: np.ndarray
    in_labels: list
    cones: list
    meta: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    def var_slice(self, name: str) -> slice:
        start, stop = self.layout[name]
        return slice(start, stop)

    def split_primal(self, x: np.ndarray) -> dict:
        out = {}
        for name, (start, stop) in self.layout.items():
            seg = np.asarray(x[start:stop], dtype=float)
            out[name] = float(seg[0]) if stop - start == 1 else seg
        return out

    # -- serialization ------------------------------------------------

    def to_dict(self) -> dict:
        def tri(m: sp.csr_matrix):
            coo = m.tocoo()
            return {"rows": coo.row.tolist(), "cols": coo.col.tolist(),
                    "vals": coo.data.tolist(), "shape": list(coo.shape)}

        return {
            "format_version": 1,
            "n_var": self.n_var,
            "layout": {k: list(v) for k, v in self.layout.items()},
            "c": self.c.tolist(),
            "c0": self.c0,
            "eq": {"a": tri(self.a_eq), "b": self.b_eq.tolist(), "labels": self.eq_labels},
            "ineq": {"a": tri(self.a_in), "b": self.b_in.tolist(), "labels": self.in_labels},
            "cones": [
                {"h": tri(blk.h), "g": blk.g.tolist(), "label": blk.label}
                for blk in self.cones
            ],
            "meta": self.meta,
            "data": {k: np.asarray(v).tolist() for k, v in self.data.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConicProgram":
        if d.get("format_version") != 1:
            raise ValidationError("unsupported program format version")

        def untri(t, n_var):
            return sp.csr_matrix(
                (t["vals"], (t["rows"], t["cols"])), shape=tuple(t["shape"])
            )

        n_var = d["n_var"]
        return cls(
            n_var=n_var,
            layout={k: tuple(v) for k, v in d["layout"].items()},
            c=np.asarray(d["c"], dtype=float),
            c0=float(d["c0"]),
            a_eq=untri(d["eq"]["a"], n_var),
            b_eq=np.asarray(d["eq"]["b"], dtype=float),
            eq_labels=list(d["eq"]["labels"]),
            a_in=untri(d["ineq"]["a"], n_var),
            b_in=np.asarray(d["ineq"]["b"], dtype=float),
            in_labels=list(d["ineq"]["labels"]),
            cones=[
                ConeBlock(h=untri(c["h"], n_var), g=np.asarray(c["g"], dtype=float),
                          label=c["label"])
                for c in d["cones"]
            ],
            meta=dict(d["meta"]),
            data={k: np.asarray(v, dtype=float) for k, v in d.get("data", {}).items()},
        )

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load_json(cls, path) -> "ConicProgram":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save_npz(self, path) -> None:
        d = self.to_dict()
        np.savez_compressed(path, blob=np.frombuffer(
            json.dumps(d, sort_keys=True).encode("utf-8"), dtype=np.uint8))

    @classmethod
    def load_npz(cls, path) -> "ConicProgram":
        with np.load(path) as z:
            return cls.from_dict(json.loads(bytes(z["blob"]).decode("utf-8")))


@dataclass
class Solution:
    status: str                     # optimal | infeasible | numerical-failure
    objective: float | None        # full TCO [eur], solver objective + constant
    solver_objective: float | None
    primal: dict
    residuals: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    infeasibility_rows: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "solver_objective": self.solver_objective,
            "primal": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                       for k, v in self.primal.items()},
            "residuals": self.residuals,
            "info": self.info,
            "infeasibility_rows": self.infeasibility_rows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Solution":
        primal = {k: (np.asarray(v, dtype=float) if isinstance(v, list) else v)
                  for k, v in d["primal"].items()}
        return cls(status=d["status"], objective=d["objective"],
                   solver_objective=d["solver_objective"], primal=primal,
                   residuals=dict(d.get("residuals", {})),
                   info=dict(d.get("info", {})),
                   infeasibility_rows=list(d.get("infeasibility_rows", [])))

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True),
                              encoding="utf-8")

    @classmethod
    def load_json(cls, path) -> "Solution":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def transcribe(cycle: DriveCycle, params: VehicleParams, motor: ScaledMotor,
               battery: BatteryModel, p_em_max: float, m_bar: float,
               fixed_e_b_max: float | None = None) -> ConicProgram:
    """Build the conic program for one motor size at one mass iterate.

    ``motor`` must already be scaled to ``p_em_max``. ``fixed_e_b_max``
    pins the battery capacity, turning the sizing problem into a pure
    control problem (used for control-only re-solves and tests).
    """
    if abs(motor.p_em_max - p_em_max) > 1e-9 * max(p_em_max, 1.0):
        raise TranscriptionError(
            f"motor is scaled to {motor.p_em_max} W but p_em_max={p_em_max} W"
        )
    if m_bar <= 0.0:
        raise ValidationError("m_bar must be positive")
    n = cycle.n_samples - 1
    if n < 1:
        raise ValidationError("cycle must have at least two samples")
    dt = cycle.dt
    v = cycle.speed[:n]
    eta = params.eta_drive

    # exogenous trajectories at the fixed mass iterate
    p_req = required_power(cycle, params, m_bar)[:n]
    p_em_bar = exogenous_motor_power(cycle, params, m_bar, p_em_max)[:n]
    coeffs = motor.loss_coeffs(p_em_bar)
    a1, a2, a3 = coeffs[:, 0], coeffs[:, 1], coeffs[:, 2]
    if np.any(a3 < 0.0):
        raise TranscriptionError("negative speed-quadratic loss curvature")

    # omega_em[k] = speed_factor[k] * gamma_k
    speed_factor = v * params.gamma_fd / params.r_w

    cvt = params.transmission == CVT
    layout: dict[str, tuple[int, int]] = {}
    pos = 0

    def block(name: str, size: int) -> int:
        nonlocal pos
        layout[name] = (pos, pos + size)
        pos += size
        return layout[name][0]

    i_eb = block("E_b", n + 1)
    i_pem = block("P_em", n)
    i_pdc = block("P_dc", n)
    i_pb = block("P_b", n)
    i_pi = block("P_i", n)
    if cvt:
        i_gam = block("gamma", n)
        i_gmin = block("gamma_min", 1)
    else:
        i_gam = block("gamma", 1)
        i_gmin = None
    i_emax = block("E_b_max", 1)
    i_deb = block("dE_b", 1)
    n_var = pos

    def gamma_col(k: int) -> int:
        return i_gam + (k if cvt else 0)

    # ratios of lifetime / expected range to one cycle; degenerate cycles
    # (no distance covered) charge exactly one cycle of energy
    d_cycle = cycle.d_cycle
    ratio_life = params.D_max * 1000.0 / d_cycle if d_cycle > 0.0 else 1.0
    ratio_range = params.D_exp * 1000.0 / d_cycle if d_cycle > 0.0 else 1.0

    c = np.zeros(n_var)
    c[i_deb] = params.c_el / 1000.0 * ratio_life
    c[i_emax] = params.c_bat / 1000.0
    c[i_gmin if cvt else i_gam] = GAMMA_TIE_BREAK
    c0 = params.c_em * p_em_max / 1000.0 + params.c_add

    eq = _Rows(n_var)
    for k in range(n):
        eq.add(f"dyn[{k}]",
               [(i_eb + k, 1.0), (i_eb + k + 1, -1.0), (i_pi + k, -dt / 3600.0)], 0.0)
    for k in range(n):
        eq.add(f"balance[{k}]", [(i_pb + k, 1.0), (i_pdc + k, -1.0)], params.P_aux)
    eq.add("init_soe", [(i_eb, 1.0), (i_emax, -params.zeta_max)], 0.0)
    eq.add("delta_def", [(i_deb, 1.0), (i_eb, -1.0), (i_eb + n, 1.0)], 0.0)
    if fixed_e_b_max is not None:
        eq.add("fix_e_b_max", [(i_emax, 1.0)], float(fixed_e_b_max))

    ineq = _Rows(n_var)
    t_max, km1, km2 = motor.t_em_max, motor.km1, motor.km2
    for k in range(n):
        ineq.add(f"drive_mot[{k}]", [(i_pem + k, -eta)], -p_req[k])
        if params.R_b > 0.0:
            ineq.add(f"drive_regen[{k}]", [(i_pem + k, -1.0)], -eta * params.R_b * p_req[k])
        else:
            ineq.add(f"drive_regen[{k}]", [(i_pem + k, -1.0)], 0.0)
        sf = speed_factor[k]
        ineq.add(f"torque_hi[{k}]", [(i_pem + k, 1.0), (gamma_col(k), -t_max * sf)], 0.0)
        ineq.add(f"torque_lo[{k}]", [(i_pem + k, -1.0), (gamma_col(k), -t_max * sf)], 0.0)
        ineq.add(f"power_hi[{k}]", [(i_pem + k, 1.0), (gamma_col(k), -km1 * sf)], km2)
        ineq.add(f"power_lo[{k}]", [(i_pem + k, -1.0), (gamma_col(k), -km1 * sf)], km2)
        if v[k] > 0.0:
            ineq.add(f"overspeed[{k}]", [(gamma_col(k), 1.0)],
                     motor.omega_max * params.r_w / (params.gamma_fd * v[k]))
        if a3[k] == 0.0 or sf == 0.0:
            ineq.add(f"loss_lin[{k}]",
                     [(i_pem + k, 1.0), (gamma_col(k), a2[k] * sf), (i_pdc + k, -1.0)],
                     -a1[k])
        ineq.add(f"p_i_hi[{k}]",
                 [(i_pi + k, 1.0), (i_eb + k, -battery.q1), (i_emax, -battery.q2)], 0.0)
        ineq.add(f"p_i_lo[{k}]",
                 [(i_pi + k, -1.0), (i_eb + k, -battery.q1), (i_emax, -battery.q2)], 0.0)
    for k in range(n + 1):
        ineq.add(f"soe_hi[{k}]", [(i_eb + k, 1.0), (i_emax, -params.zeta_max)], 0.0)
        ineq.add(f"soe_lo[{k}]", [(i_eb + k, -1.0), (i_emax, params.zeta_min)], 0.0)
    if cvt:
        for k in range(n):
            ineq.add(f"band_lo[{k}]", [(i_gmin, 1.0), (i_gam + k, -1.0)], 0.0)
            ineq.add(f"band_hi[{k}]", [(i_gam + k, 1.0), (i_gmin, -params.c_f)], 0.0)

    ineq.add("range", [(i_deb, ratio_range / (1.0 - params.zeta_min)), (i_emax, -1.0)], 0.0)

    req = check_requirements(params, p_em_max, t_max, (km1, km2), m_bar)
    t_req_top = (required_power_point(params, m_bar, params.v_max)
                 / params.v_max * params.r_w)
    power_rhs = km2 * params.r_w / params.v_max - t_req_top / eta
    i_gx = i_gmin if cvt else i_gam   # top-speed ratio; gradeability uses gamma_max
    if cvt:
        ineq.add("gradeability", [(i_gmin, -params.c_f)], -req.gamma_lb_grade)
    else:
        ineq.add("gradeability", [(i_gam, -1.0)], -req.gamma_lb_grade)
    ineq.add("topspeed_torque", [(i_gx, -1.0)], -req.gamma_lb_topspeed)
    ineq.add("topspeed_power", [(i_gx, -km1 * params.gamma_fd)], power_rhs)

    cones: list[ConeBlock] = []
    for k in range(n):
        sf = speed_factor[k]
        if a3[k] > 0.0 and sf > 0.0:
            # y = P_dc - P_em - a1 - a2*omega;  a3*omega^2 <= y  as
            # ||(2*sqrt(a3)*omega, 1 - y)|| <= 1 + y
            rows = _Rows(n_var)
            y_cols = [(i_pdc + k, 1.0), (i_pem + k, -1.0), (gamma_col(k), -a2[k] * sf)]
            rows.add("t", y_cols, 0.0)
            rows.add("u1", [(gamma_col(k), 2.0 * np.sqrt(a3[k]) * sf)], 0.0)
            rows.add("u2", [(col, -val) for col, val in y_cols], 0.0)
            g = np.array([1.0 - a1[k], 0.0, 1.0 + a1[k]])
            cones.append(ConeBlock(h=rows.matrix(), g=g, label=f"loss_cone[{k}]"))
    for k in range(n):
        # ||(2 P_i, P_i - P_b - P_oc)|| <= P_i - P_b + P_oc
        poc_cols = [(i_eb + k, battery.p1), (i_emax, battery.p2)]
        rows = _Rows(n_var)
        rows.add("t", [(i_pi + k, 1.0), (i_pb + k, -1.0)] + poc_cols, 0.0)
        rows.add("u1", [(i_pi + k, 2.0)], 0.0)
        rows.add("u2", [(i_pi + k, 1.0), (i_pb + k, -1.0)]
                 + [(col, -val) for col, val in poc_cols], 0.0)
        cones.append(ConeBlock(h=rows.matrix(), g=np.zeros(3), label=f"bat_cone[{k}]"))

    meta = {
        "dt": dt,
        "n_steps": n,
        "p_em_max": p_em_max,
        "m_bar": m_bar,
        "transmission": params.transmission,
        "d_cycle": d_cycle,
        "ratio_life": ratio_life,
        "ratio_range": ratio_range,
        "zeta_min": params.zeta_min,
        "zeta_max": params.zeta_max,
        "e_b0_policy": "full-charge",
        "energy_unit": "Wh",
        "fixed_e_b_max": fixed_e_b_max,
        "speed_adjust_convention": "v/(1+2*grade) on climbs",
    }
    data = {
        "p_req": p_req,
        "p_em_bar": p_em_bar,
        "a1": a1, "a2": a2, "a3": a3,
        "speed_factor": speed_factor,
        "envelope": np.array([t_max, km1, km2]),
        "eta": np.array([eta]),
        "r_b": np.array([params.R_b]),
        "battery_fit": np.array([battery.p1, battery.p2, battery.q1, battery.q2]),
    }
    return ConicProgram(
        n_var=n_var, layout=layout, c=c, c0=c0,
        a_eq=eq.matrix(), b_eq=np.asarray(eq.rhs), eq_labels=eq.labels,
        a_in=ineq.matrix(), b_in=np.asarray(ineq.rhs), in_labels=ineq.labels,
        cones=cones, meta=meta, data=data,
    )


# ---------------------------------------------------------------------------
# Solution post-processing


def battery_cone_residual(solution: Solution, program: ConicProgram) -> np.ndarray:
    """Per-step slack of the battery power balance,
    |(P_i - P_b) P_oc - P_i^2| / max(P_oc^2, 1)."""
    if not solution.optimal:
        raise ValidationError("battery residuals are defined for optimal solutions")
    p1, p2, _, _ = program.data["battery_fit"]
    n = program.meta["n_steps"]
    e_b = np.asarray(solution.primal["E_b"])[:n]
    e_max = solution.primal["E_b_max"]
    p_i = np.asarray(solution.primal["P_i"])
    p_b = np.asarray(solution.primal["P_b"])
    p_oc = p1 * e_b + p2 * e_max
    return np.abs((p_i - p_b) * p_oc - p_i ** 2) / np.maximum(p_oc ** 2, 1.0)


def _gamma_per_step(solution: Solution, program: ConicProgram) -> np.ndarray:
    n = program.meta["n_steps"]
    gam = solution.primal["gamma"]
    return np.asarray(gam) if program.meta["transmission"] == CVT else np.full(n, gam)


def relaxation_residuals(solution: Solution, program: ConicProgram,
                         clamp_rtol: float = 1e-6) -> dict:
    """Relative tightness of the three lossless relaxations at an optimum.

    Steps where the relevant variable sits on a box/envelope bound are
    excluded (there the original model allows slack, e.g. friction
    braking absorbs what the motor may not regenerate). Returns per-step
    arrays (NaN where excluded) plus the max over included steps.
    """
    if not solution.optimal:
        raise ValidationError("residuals are defined for optimal solutions")
    d = program.data
    n = program.meta["n_steps"]
    p_max = program.meta["p_em_max"]
    eta = float(d["eta"][0])
    r_b = float(d["r_b"][0])
    t_max, km1, km2 = d["envelope"]
    p_req = d["p_req"]
    a1, a2, a3 = d["a1"], d["a2"], d["a3"]
    sf = d["speed_factor"]
    p1, p2, q1, q2 = d["battery_fit"]

    p_em = np.asarray(solution.primal["P_em"])
    p_dc = np.asarray(solution.primal["P_dc"])
    p_b = np.asarray(solution.primal["P_b"])
    p_i = np.asarray(solution.primal["P_i"])
    e_b = np.asarray(solution.primal["E_b"])[:n]
    e_max = solution.primal["E_b_max"]
    gamma = _gamma_per_step(solution, program)
    omega = sf * gamma

    scale_p = np.maximum(np.abs(p_req), 1e-3 * p_max)
    # drive relaxation: active branch must be tight unless the motor is
    # pinned to its envelope during braking
    motoring = p_req >= 0.0
    target = np.where(motoring, p_em * eta, p_em)
    want = np.where(motoring, p_req, eta * r_b * p_req)
    drive = np.abs(target - want) / scale_p
    env_lo = -np.minimum(t_max * omega, km1 * omega + km2)
    clamped = ~motoring & (p_em <= env_lo + clamp_rtol * p_max)
    drive = np.where(clamped, np.nan, drive)

    # loss relaxation
    loss_fit = a1 + a2 * omega + a3 * omega ** 2
    loss_res = (p_dc - p_em - loss_fit) / np.maximum(np.abs(p_dc), 1e-3 * p_max)
    p_i_floor = -(q1 * e_b + q2 * e_max)
    regen_clamped = p_i <= p_i_floor + clamp_rtol * p_max
    loss_res = np.where(regen_clamped, np.nan, np.abs(loss_res))

    # battery cone
    p_oc = p1 * e_b + p2 * e_max
    bat = np.abs((p_i - p_b) * p_oc - p_i ** 2) / np.maximum(p_oc ** 2, 1.0)
    bat = np.where(regen_clamped, np.nan, bat)

    def nanmax(x):
        return float(np.nanmax(x)) if np.any(~np.isnan(x)) else 0.0

    return {
        "drive": drive, "loss": loss_res, "battery": bat,
        "max_drive": nanmax(drive), "max_loss": nanmax(loss_res),
        "max_battery": nanmax(bat),
        "max_overall": max(nanmax(drive), nanmax(loss_res), nanmax(bat)),
    }


def objective_breakdown(solution: Solution, params: VehicleParams,
                        p_em_max: float) -> tuple[float, float, float]:
    """(operating cost, component cost, total) in euros; checks that the
    recomputed total matches the solver objective plus constant."""
    if not solution.optimal:
        raise ValidationError("objective breakdown needs an optimal solution")
    ratio_life = solution.info["ratio_life"]
    c_op = solution.primal["dE_b"] * params.c_el / 1000.0 * ratio_life
    c_comp = (params.c_bat * solution.primal["E_b_max"] / 1000.0
              + params.c_em * p_em_max / 1000.0 + params.c_add)
    total = c_op + c_comp
    if abs(total - solution.objective) > 1e-6 * max(abs(total), 1.0):
        raise ValidationError(
            f"objective mismatch: breakdown {total} vs solver {solution.objective}"
        )
    return float(c_op), float(c_comp), float(total)
