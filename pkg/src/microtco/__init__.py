"""TCO-optimal powertrain sizing and control for electric micromobility.

The pipeline: process a drive cycle, fit convex component models (motor
loss polynomial, battery affine power fits), transcribe the joint
sizing/control problem into a second-order conic program, iterate it to a
mass fixed point per motor size, sweep motor sizes for the
total-cost-of-ownership optimum, and validate the winner against the
original nonlinear component models.
"""

__version__ = "0.1.0"

from .battery import (BatteryModel, CellTable, default_cell_table, fit_battery,
                      internal_power_root)
from .cycles import (DriveCycle, GradientProfileSpec, builtin_cycle, cap_speed,
                     load_cycle, moped_urban, resample, save_cycle,
                     scooter_urban, synthesize_gradient)
from .design import (DesignPoint, InfeasibleDesign, SweepResult, TrendReport,
                     compare_scenarios, mass_fixed_point, sweep)
from .errors import (ConfigError, ConvergenceError, CycleParseError, FitError,
                     SolverFailure, SweepError, TranscriptionError,
                     ValidationError)
from .motor import (LossShape, MotorModel, ScaledMotor, default_loss_shape,
                    exogenous_motor_power, fit_loss_coefficients,
                    reference_motor, scale_motor, synthesize_motor_map)
from .params import (CVT, FGT, MassBreakdown, RequirementReport, VehicleParams,
                     check_requirements, mass_closure, moped_params,
                     required_power, required_power_point, scooter_params)
from .simulate import (OperatingPoints, SimulationTrace, consumption_gap,
                       operating_points, simulate)
from .socp import (ConicProgram, Solution, battery_cone_residual,
                   objective_breakdown, relaxation_residuals, transcribe)
from .solvers import ClarabelAdapter, SolverAdapter, SolverTolerances

__all__ = [name for name in dir() if not name.startswith("_")]
