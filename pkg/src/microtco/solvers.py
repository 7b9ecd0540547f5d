"""Conic solver adapters.

An adapter turns the solver-agnostic :class:`~microtco.socp.ConicProgram`
into one concrete solver's input format and maps the result back into a
:class:`~microtco.socp.Solution`. Adapters must be deterministic for
fixed inputs and safe to call concurrently for independent programs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Protocol

import numpy as np
import scipy.sparse as sp

from .socp import ConicProgram, Solution

SOLVER_TOL_ENV = "MICROTCO_SOLVER_TOL"


@dataclass(frozen=True)
class SolverTolerances:
    feasibility: float = 1e-8
    gap: float = 1e-8

    @classmethod
    def from_env(cls) -> "SolverTolerances":
        override = os.environ.get(SOLVER_TOL_ENV)
        if override:
            tol = float(override)
            return cls(feasibility=tol, gap=tol)
        return cls()


class SolverAdapter(Protocol):
    def solve(self, program: ConicProgram) -> Solution: ...


def _row_labels(program: ConicProgram) -> list[str]:
    labels = list(program.eq_labels) + list(program.in_labels)
    for blk in program.cones:
        labels.extend(f"{blk.label}:{i}" for i in range(blk.dim))
    return labels


class ClarabelAdapter:
    """Interior-point solve via Clarabel.

    The program maps directly: equalities into the zero cone,
    inequalities into the nonnegative cone, and each cone block
    ``H x + g in SOC`` into rows ``-H x + s = g``.
    """

    name = "clarabel"

    def __init__(self, tolerances: SolverTolerances | None = None,
                 max_iter: int = 200, verbose: bool = False):
        self.tolerances = tolerances if tolerances is not None else SolverTolerances.from_env()
        self.max_iter = max_iter
        self.verbose = verbose

    def solve(self, program: ConicProgram) -> Solution:
        import clarabel

        blocks = [program.a_eq, program.a_in] + [-blk.h for blk in program.cones]
        a = sp.vstack(blocks, format="csc")
        b = np.concatenate([program.b_eq, program.b_in]
                           + [blk.g for blk in program.cones])
        cones = [clarabel.ZeroConeT(program.b_eq.size),
                 clarabel.NonnegativeConeT(program.b_in.size)]
        cones.extend(clarabel.SecondOrderConeT(blk.dim) for blk in program.cones)

        settings = clarabel.DefaultSettings()
        settings.verbose = self.verbose
        settings.max_iter = self.max_iter
        settings.tol_feas = self.tolerances.feasibility
        settings.tol_gap_abs = self.tolerances.gap
        settings.tol_gap_rel = self.tolerances.gap

        solver = clarabel.DefaultSolver(
            sp.csc_matrix((program.n_var, program.n_var)), program.c,
            a, b, cones, settings,
        )
        result = solver.solve()
        status = str(result.status)

        info = {
            "solver": self.name,
            "status_raw": status,
            "iterations": int(result.iterations),
            "solve_time_s": float(result.solve_time),
            "tol_feasibility": self.tolerances.feasibility,
            "tol_gap": self.tolerances.gap,
            "r_prim": float(result.r_prim),
            "r_dual": float(result.r_dual),
        }
        for key in ("ratio_life", "ratio_range", "d_cycle", "p_em_max",
                    "m_bar", "dt", "n_steps", "transmission"):
            info[key] = program.meta.get(key)

        if status in ("Solved", "AlmostSolved"):
            x = np.asarray(result.x)
            return Solution(
                status="optimal",
                objective=float(result.obj_val + program.c0),
                solver_objective=float(result.obj_val),
                primal=program.split_primal(x),
                info=info,
            )
        if "Infeasible" in status:
            labels = _row_labels(program)
            z = np.abs(np.asarray(result.z))
            top = np.argsort(-z)[:5] if z.size else []
            rows = [labels[i] for i in top if z[i] > 1e-12 * (z.max() + 1e-300)]
            return Solution(status="infeasible", objective=None,
                            solver_objective=None, primal={}, info=info,
                            infeasibility_rows=rows)
        return Solution(status="numerical-failure", objective=None,
                        solver_objective=None, primal={}, info=info)


def default_adapter(**kwargs) -> ClarabelAdapter:
    return ClarabelAdapter(**kwargs)
