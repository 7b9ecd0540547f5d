"""Design loop: mass fixed point per motor size, size sweep, selection.

The sizing problem is only convex once the motor size and the vehicle
mass are fixed, so each candidate size runs a fixed-point iteration: the
mass assumed for the power demand is updated to the mass implied by the
sized components until the two agree. The motor size itself is swept over
a grid and the total-cost-of-ownership argmin selected.

The iteration has no global optimality guarantee (the fixed point of a
nonlinear map); every design point therefore carries its full mass trace
so non-convergence or sensitivity is visible, and a dedicated test checks
that distinct initial guesses land on the same mass.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .battery import BatteryModel
from .cycles import DriveCycle
from .errors import ConvergenceError, SweepError
from .motor import MotorModel, scale_motor
from .params import CVT, VehicleParams, check_requirements, mass_closure
from .socp import (Solution, objective_breakdown, relaxation_residuals,
                   transcribe)
from .solvers import SolverAdapter, default_adapter

DEFAULT_EPS_KG = 1e-3
DEFAULT_MAX_ITER = 25
#: initial vehicle-mass guess offset over the bare frame
DEFAULT_M_V0_OFFSET_KG = 3.0


@dataclass(frozen=True)
class DesignPoint:
    p_em_max: float
    e_b_max: float
    gamma: float                      # sizing ratio: gamma_fgt, or gamma_max for CVT
    gamma_min: float | None
    gamma_trajectory: np.ndarray | None
    m_v: float
    iterations: int
    tco: float
    c_op: float
    c_comp: float
    trajectories: dict
    residuals: dict
    mass_trace: list
    solution: Solution = field(repr=False, compare=False, default=None)

    @property
    def c_el(self) -> float:
        """Lifetime electricity cost (alias used in result tables)."""
        return self.c_op

    @property
    def feasible(self) -> bool:
        return True

    def to_dict(self) -> dict:
        d = {
            "feasible": True,
            "p_em_max_w": self.p_em_max,
            "e_b_max_wh": self.e_b_max,
            "gamma": self.gamma,
            "m_v_kg": self.m_v,
            "iterations": self.iterations,
            "tco_eur": self.tco,
            "c_op_eur": self.c_op,
            "c_comp_eur": self.c_comp,
            "mass_trace_kg": [float(m) for m in self.mass_trace],
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "trajectories": {k: np.asarray(v).tolist()
                             for k, v in self.trajectories.items()},
        }
        if self.gamma_min is not None:
            d["gamma_min"] = self.gamma_min
            d["gamma_max"] = self.gamma
        if self.gamma_trajectory is not None:
            d["gamma_trajectory"] = np.asarray(self.gamma_trajectory).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DesignPoint":
        if not d.get("feasible", False):
            raise ValueError("only feasible design points round-trip")
        gamma_traj = (np.asarray(d["gamma_trajectory"], dtype=float)
                      if "gamma_trajectory" in d else None)
        return cls(
            p_em_max=d["p_em_max_w"], e_b_max=d["e_b_max_wh"], gamma=d["gamma"],
            gamma_min=d.get("gamma_min"), gamma_trajectory=gamma_traj,
            m_v=d["m_v_kg"], iterations=d["iterations"], tco=d["tco_eur"],
            c_op=d["c_op_eur"], c_comp=d["c_comp_eur"],
            trajectories={k: np.asarray(v, dtype=float)
                          for k, v in d["trajectories"].items()},
            residuals=dict(d["residuals"]),
            mass_trace=list(d["mass_trace_kg"]), solution=None,
        )


@dataclass(frozen=True)
class InfeasibleDesign:
    p_em_max: float
    reasons: tuple
    stage: str                        # prefilter | requirements | solver | acceleration
    mass_trace: list = field(default_factory=list)
    detail: str = ""

    @property
    def feasible(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {
            "feasible": False,
            "p_em_max_w": self.p_em_max,
            "reasons": list(self.reasons),
            "stage": self.stage,
            "mass_trace_kg": [float(m) for m in self.mass_trace],
            "detail": self.detail,
        }


@dataclass(frozen=True)
class SweepResult:
    grid: list
    points: list
    best: int | None

    @property
    def best_point(self) -> DesignPoint:
        if self.best is None:
            raise SweepError("sweep has no feasible point")
        return self.points[self.best]

    def feasible_points(self) -> list:
        return [p for p in self.points if p.feasible]

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "grid_w": [float(p) for p in self.grid],
            "best_index": self.best,
            "points": [p.to_dict() for p in self.points],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _finalize_point(solution: Solution, params: VehicleParams, cycle: DriveCycle,
                    p_em_max: float, iterations: int, trace: list,
                    residuals: dict) -> DesignPoint:
    primal = solution.primal
    e_b_max = primal["E_b_max"]
    n = solution.info["n_steps"]
    if params.transmission == CVT:
        gamma_min = float(primal["gamma_min"])
        gamma_max = gamma_min * params.c_f
        gamma_traj = np.asarray(primal["gamma"], dtype=float).copy()
        # standstill steps leave the ratio indeterminate; report gamma_max
        gamma_traj[cycle.speed[:n] == 0.0] = gamma_max
        gamma_sizing = gamma_max
    else:
        gamma_min = None
        gamma_traj = None
        gamma_sizing = float(primal["gamma"])
    c_op, c_comp, tco = objective_breakdown(solution, params, p_em_max)
    m_v = mass_closure(params, p_em_max, e_b_max, gamma_sizing).m_v
    trajectories = {
        "t_s": cycle.timestamps,
        "v_mps": cycle.speed,
        "E_b_wh": np.asarray(primal["E_b"]),
        "P_em_w": np.asarray(primal["P_em"]),
        "P_dc_w": np.asarray(primal["P_dc"]),
        "P_b_w": np.asarray(primal["P_b"]),
        "P_i_w": np.asarray(primal["P_i"]),
    }
    if gamma_traj is not None:
        trajectories["gamma"] = gamma_traj
    return DesignPoint(
        p_em_max=float(p_em_max), e_b_max=float(e_b_max), gamma=float(gamma_sizing),
        gamma_min=gamma_min, gamma_trajectory=gamma_traj,
        m_v=float(m_v), iterations=iterations, tco=float(tco),
        c_op=float(c_op), c_comp=float(c_comp),
        trajectories=trajectories, residuals=residuals,
        mass_trace=[float(m) for m in trace], solution=solution,
    )


def mass_fixed_point(cycle: DriveCycle, params: VehicleParams, motor: MotorModel,
                     battery: BatteryModel, p_em_max: float,
                     adapter: SolverAdapter | None = None,
                     m_v0: float | None = None,
                     eps: float = DEFAULT_EPS_KG,
                     max_iter: int = DEFAULT_MAX_ITER) -> DesignPoint | InfeasibleDesign:
    """Iterate mass-assumption -> solve -> implied mass until they agree.

    The sprint-power requirement is constant for a fixed solve, so it is
    not a program row; it is verified at the converged mass (checking it
    at intermediate iterates would wrongly reject heavy initial guesses
    that converge to a feasible light design). Returns an
    :class:`InfeasibleDesign` when a solve is infeasible or the converged
    design misses a requirement; raises :class:`ConvergenceError` when
    ``max_iter`` is exhausted.
    """
    if max_iter < 1:
        raise ConvergenceError("max_iter must be >= 1", trace=[])
    if adapter is None:
        adapter = default_adapter()
    scaled = scale_motor(motor, p_em_max)
    m_v_star = m_v0 if m_v0 is not None else params.m_f + DEFAULT_M_V0_OFFSET_KG
    trace = [float(m_v_star)]
    solution = None
    residual_tracker: dict[str, float] = {"max_drive": 0.0, "max_loss": 0.0,
                                          "max_battery": 0.0, "max_overall": 0.0}
    iterations = 0
    converged = False
    last_program = None
    for _ in range(max_iter):
        m_v_bar = m_v_star
        m_bar = m_v_bar + params.m_d
        program = transcribe(cycle, params, scaled, battery, p_em_max, m_bar)
        solution = adapter.solve(program)
        iterations += 1
        if not solution.optimal:
            req = check_requirements(params, p_em_max, scaled.t_em_max,
                                     (scaled.km1, scaled.km2), m_bar)
            reasons = req.binding() if not req.feasible else solution.infeasibility_rows
            return InfeasibleDesign(
                p_em_max=float(p_em_max),
                reasons=tuple(reasons) if reasons else (solution.status,),
                stage="solver" if req.feasible else "requirements",
                mass_trace=trace, detail=solution.info.get("status_raw", ""),
            )
        last_program = program
        res = relaxation_residuals(solution, program)
        for key in residual_tracker:
            residual_tracker[key] = max(residual_tracker[key], res[key])
        gamma_sizing = (solution.primal["gamma_min"] * params.c_f
                        if params.transmission == CVT else solution.primal["gamma"])
        m_v_star = mass_closure(params, p_em_max,
                                solution.primal["E_b_max"], gamma_sizing).m_v
        trace.append(float(m_v_star))
        if abs(m_v_bar - m_v_star) < eps:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"mass fixed point did not converge in {max_iter} iterations "
            f"for p_em_max={p_em_max} W", trace=trace,
        )

    m_converged = m_v_star + params.m_d
    req = check_requirements(params, p_em_max, scaled.t_em_max,
                             (scaled.km1, scaled.km2), m_converged)
    if not req.acc_feasible:
        return InfeasibleDesign(
            p_em_max=float(p_em_max), reasons=("acceleration",),
            stage="acceleration", mass_trace=trace,
            detail=f"needs {req.p_required_acc:.1f} W at converged mass",
        )
    solution.residuals = dict(residual_tracker)
    return _finalize_point(solution, params, cycle, p_em_max, iterations,
                           trace, dict(residual_tracker))


def acceleration_power_floor(params: VehicleParams) -> float:
    """Sprint power needed by the bare frame plus driver; no converged
    design can ever need less, so sizes below this bound are skipped."""
    return params.v_max ** 2 * (params.m_d + params.m_f) / (params.t_acc * params.eta_drive)


def sweep(cycle: DriveCycle, params: VehicleParams, motor: MotorModel,
          battery: BatteryModel, grid, adapter: SolverAdapter | None = None,
          eps: float = DEFAULT_EPS_KG, max_iter: int = DEFAULT_MAX_ITER,
          m_v0: float | None = None, max_workers: int = 1) -> SweepResult:
    """Run the fixed point for every motor size and pick the TCO argmin."""
    grid = [float(p) for p in grid]
    if not grid:
        raise SweepError("sweep grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise SweepError("sweep grid must be strictly ascending")
    if adapter is None:
        adapter = default_adapter()
    p_floor = acceleration_power_floor(params)

    def run_one(p_em_max: float):
        if p_em_max < p_floor:
            return InfeasibleDesign(p_em_max=p_em_max, reasons=("acceleration",),
                                    stage="prefilter",
                                    detail=f"below bare-vehicle sprint bound {p_floor:.1f} W")
        return mass_fixed_point(cycle, params, motor, battery, p_em_max,
                                adapter=adapter, m_v0=m_v0, eps=eps,
                                max_iter=max_iter)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            points = list(pool.map(run_one, grid))
    else:
        points = [run_one(p) for p in grid]

    feasible = [(i, p.tco) for i, p in enumerate(points) if p.feasible]
    if not feasible:
        raise SweepError(
            "every motor size in the sweep is infeasible",
            diagnostics={p.p_em_max: list(p.reasons) for p in points},
        )
    best = min(feasible, key=lambda t: t[1])[0]
    return SweepResult(grid=grid, points=points, best=best)


@dataclass(frozen=True)
class TrendReport:
    """Relative movement of the optimum between two studies (percent for
    the cost rows, absolute for the sizing rows)."""

    label_a: str
    label_b: str
    d_tco_pct: float
    d_comp_pct: float
    d_el_pct: float
    d_gamma: float
    d_p_em_max_w: float
    d_e_b_max_wh: float
    d_m_v_kg: float

    def to_dict(self) -> dict:
        return {
            "label_a": self.label_a, "label_b": self.label_b,
            "d_tco_pct": self.d_tco_pct, "d_comp_pct": self.d_comp_pct,
            "d_el_pct": self.d_el_pct, "d_gamma": self.d_gamma,
            "d_p_em_max_w": self.d_p_em_max_w,
            "d_e_b_max_wh": self.d_e_b_max_wh, "d_m_v_kg": self.d_m_v_kg,
        }


def compare_scenarios(base: SweepResult, other: SweepResult,
                      label_a: str = "base", label_b: str = "other") -> TrendReport:
    """Percentage/absolute deltas of the optima of two sweeps
    (flat vs hilly, or FGT vs CVT)."""
    a, b = base.best_point, other.best_point

    def pct(x, y):
        return (y - x) / x * 100.0 if x != 0.0 else 0.0

    return TrendReport(
        label_a=label_a, label_b=label_b,
        d_tco_pct=pct(a.tco, b.tco),
        d_comp_pct=pct(a.c_comp, b.c_comp),
        d_el_pct=pct(a.c_op, b.c_op),
        d_gamma=b.gamma - a.gamma,
        d_p_em_max_w=b.p_em_max - a.p_em_max,
        d_e_b_max_wh=b.e_b_max - a.e_b_max,
        d_m_v_kg=b.m_v - a.m_v,
    )
