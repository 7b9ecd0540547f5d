#!/usr/bin/env python3
"""Mass fixed-point robustness: sweep initial guesses, print the traces.

The fixed point has no global-optimality guarantee, so this script checks
numerically that widely spread initial vehicle masses converge to the
same value, for the scooter on the flat cycle at a fixed motor size.
"""

import argparse
import sys

from microtco.battery import default_cell_table, fit_battery
from microtco.cycles import scooter_urban
from microtco.design import mass_fixed_point
from microtco.motor import reference_motor
from microtco.params import scooter_params


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--size-w", type=float, default=590.0)
    parser.add_argument("--eps-kg", type=float, default=1e-6)
    parser.add_argument("--guesses", type=float, nargs="+",
                        default=[5.0, 10.0, 15.0, 20.0, 30.0])
    args = parser.parse_args()

    params = scooter_params()
    cycle = scooter_urban()
    motor = reference_motor(1000.0, params.omega_em_max)
    battery = fit_battery(default_cell_table(),
                          soe_window=(params.zeta_min, params.zeta_max))

    masses = []
    for m0 in args.guesses:
        point = mass_fixed_point(cycle, params, motor, battery, args.size_w,
                                 m_v0=m0, eps=args.eps_kg, max_iter=50)
        if not point.feasible:
            print(f"m_v0 {m0:5.1f} kg: infeasible ({', '.join(point.reasons)})")
            continue
        trace = " -> ".join(f"{m:.4f}" for m in point.mass_trace)
        print(f"m_v0 {m0:5.1f} kg: {point.iterations} iterations, {trace}")
        masses.append(point.m_v)

    if masses:
        spread = (max(masses) - min(masses)) / min(masses)
        print(f"\nconverged vehicle mass spread: {spread * 100:.4f}% "
              f"({min(masses):.4f}..{max(masses):.4f} kg)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
