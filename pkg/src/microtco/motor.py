"""Electric-motor loss model: surrogate map, loss-coefficient fit, scaling.

The reference motor is described by a gridded loss map over (speed,
torque) plus a feasible envelope made of a constant torque ceiling and a
drooping power line ``km1 * omega + km2`` (km1 <= 0). Because the actual
machine data behind such maps is proprietary, the map here is synthesized
from a four-term parametric loss (copper + friction + iron + constant),
calibrated so peak efficiency sits near mid speed / mid torque.

For the conic program the losses must be a convex function of speed
alone. That is achieved by fitting, for every mechanical power level on a
dense grid, a quadratic in speed along the constant-power contour of the
map, with the curvature constrained non-negative. A nearest-level lookup
then turns a per-step exogenous power into per-step loss coefficients.

All envelope quantities and loss coefficients scale linearly with the
motor's maximum power, which keeps the efficiency map invariant under
sizing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cycles import DriveCycle
from .errors import FitError, ValidationError
from .params import VehicleParams, required_power

#: fraction of omega_max where the torque ceiling meets the power line
CORNER_SPEED_FRACTION = 0.35
#: power-line droop between zero speed and omega_max, as a fraction of rated power
POWER_DROOP_FRACTION = 0.15

DEFAULT_N_LEVELS = 201


@dataclass(frozen=True)
class LossShape:
    """Coefficients of the parametric loss, all >= 0 and not all zero.

    loss(omega, T) = c_cu * T^2 + c_fr * omega + c_fe * omega^2 + c_0
    """

    c_cu: float   # copper [W/Nm^2]
    c_fr: float   # friction [W*s/rad]
    c_fe: float   # iron [W*s^2/rad^2]
    c_0: float    # constant electronics draw [W]

    def __post_init__(self):
        coeffs = (self.c_cu, self.c_fr, self.c_fe, self.c_0)
        if any(c < 0.0 for c in coeffs):
            raise ValidationError("loss-shape coefficients must be non-negative")
        if all(c == 0.0 for c in coeffs):
            raise ValidationError("loss shape cannot be identically zero")

    def loss(self, omega, torque):
        omega = np.asarray(omega, dtype=float)
        torque = np.asarray(torque, dtype=float)
        return (self.c_cu * torque ** 2 + self.c_fr * omega
                + self.c_fe * omega ** 2 + self.c_0)


def default_loss_shape(p_max_ref: float, t_max_ref: float, omega_max: float,
                       eta_peak: float = 0.85,
                       fractions: tuple[float, float, float, float] =
                       (0.10, 0.30, 0.42, 0.18)) -> LossShape:
    """Calibrate the four loss terms so the efficiency at mid speed and mid
    torque equals ``eta_peak``, split between the terms as ``fractions``.

    The default split keeps the copper share small: the torque-squared
    term is the one a speed-only quadratic cannot represent along
    constant-power contours, so it bounds the achievable fit quality.
    """
    if not 0.0 < eta_peak < 1.0:
        raise ValidationError("eta_peak must be in (0, 1)")
    if abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0.0:
        raise ValidationError("loss fractions must be non-negative and sum to 1")
    omega_nom = 0.5 * omega_max
    torque_nom = 0.5 * t_max_ref
    loss_nom = omega_nom * torque_nom * (1.0 - eta_peak) / eta_peak
    f_cu, f_fr, f_fe, f_0 = fractions
    return LossShape(
        c_cu=f_cu * loss_nom / torque_nom ** 2,
        c_fr=f_fr * loss_nom / omega_nom,
        c_fe=f_fe * loss_nom / omega_nom ** 2,
        c_0=f_0 * loss_nom,
    )


@dataclass(frozen=True)
class MotorModel:
    """Reference motor: loss map, envelope, and (after fitting) the
    per-power-level speed-polynomial coefficient table."""

    p_max_ref: float
    t_max_ref: float
    omega_max: float
    km1_ref: float            # power-line slope [W*s/rad], <= 0
    km2_ref: float            # power-line intercept [W], >= 0
    omega_grid: np.ndarray
    torque_grid: np.ndarray
    loss_map: np.ndarray      # shape (n_omega, n_torque)
    levels: np.ndarray | None = None          # mechanical power levels [W]
    coeff_table: np.ndarray | None = None     # shape (n_levels, 3): a1, a2, a3
    level_included: np.ndarray | None = None  # levels with enough contour support
    level_rmse: np.ndarray | None = None      # per-level rms residual [W]
    fit_rmse_norm: float | None = None        # map-wide normalized rmse [-]

    @property
    def fitted(self) -> bool:
        return self.coeff_table is not None

    def envelope_power(self, omega):
        """Maximum deliverable |mechanical power| at each speed."""
        omega = np.asarray(omega, dtype=float)
        return np.minimum(self.t_max_ref * omega,
                          self.km1_ref * omega + self.km2_ref)

    def in_envelope(self, omega, torque, rtol: float = 1e-9):
        omega = np.asarray(omega, dtype=float)
        torque = np.asarray(torque, dtype=float)
        tol_t = rtol * self.t_max_ref
        tol_p = rtol * self.km2_ref
        return ((omega >= -tol_p) & (omega <= self.omega_max * (1 + rtol))
                & (np.abs(torque) <= self.t_max_ref + tol_t)
                & (np.abs(torque * omega) <= self.km1_ref * omega + self.km2_ref + tol_p))

    def map_loss(self, omega, torque):
        """Bilinear interpolation of the loss map, clamped at the grid edge."""
        omega = np.clip(np.asarray(omega, dtype=float), self.omega_grid[0], self.omega_grid[-1])
        torque = np.clip(np.asarray(torque, dtype=float), self.torque_grid[0], self.torque_grid[-1])
        i = np.clip(np.searchsorted(self.omega_grid, omega, side="right") - 1,
                    0, self.omega_grid.size - 2)
        j = np.clip(np.searchsorted(self.torque_grid, torque, side="right") - 1,
                    0, self.torque_grid.size - 2)
        do = self.omega_grid[i + 1] - self.omega_grid[i]
        dt = self.torque_grid[j + 1] - self.torque_grid[j]
        u = (omega - self.omega_grid[i]) / do
        w = (torque - self.torque_grid[j]) / dt
        z = self.loss_map
        return ((1 - u) * (1 - w) * z[i, j] + u * (1 - w) * z[i + 1, j]
                + (1 - u) * w * z[i, j + 1] + u * w * z[i + 1, j + 1])

    def efficiency(self, omega, torque):
        """Map efficiency; motoring P/(P+loss), generating |P_dc|/|P_em|."""
        p_em = np.asarray(omega, dtype=float) * np.asarray(torque, dtype=float)
        loss = self.map_loss(omega, torque)
        with np.errstate(divide="ignore", invalid="ignore"):
            eta = np.where(p_em > 0.0, p_em / (p_em + loss),
                           np.where(p_em < 0.0, (p_em + loss) / p_em, 0.0))
        return np.clip(eta, 0.0, 1.0)

    def to_dict(self) -> dict:
        d = {
            "p_max_ref": self.p_max_ref,
            "t_max_ref": self.t_max_ref,
            "omega_max": self.omega_max,
            "km1_ref": self.km1_ref,
            "km2_ref": self.km2_ref,
            "omega_grid": self.omega_grid.tolist(),
            "torque_grid": self.torque_grid.tolist(),
            "loss_map": self.loss_map.tolist(),
        }
        if self.fitted:
            d.update({
                "levels": self.levels.tolist(),
                "coeff_table": self.coeff_table.tolist(),
                "level_included": self.level_included.astype(int).tolist(),
                "level_rmse": self.level_rmse.tolist(),
                "fit_rmse_norm": self.fit_rmse_norm,
            })
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MotorModel":
        kwargs = dict(
            p_max_ref=d["p_max_ref"], t_max_ref=d["t_max_ref"],
            omega_max=d["omega_max"], km1_ref=d["km1_ref"], km2_ref=d["km2_ref"],
            omega_grid=np.asarray(d["omega_grid"]),
            torque_grid=np.asarray(d["torque_grid"]),
            loss_map=np.asarray(d["loss_map"]),
        )
        if "coeff_table" in d:
            kwargs.update(
                levels=np.asarray(d["levels"]),
                coeff_table=np.asarray(d["coeff_table"]),
                level_included=np.asarray(d["level_included"], dtype=bool),
                level_rmse=np.asarray(d["level_rmse"]),
                fit_rmse_norm=d["fit_rmse_norm"],
            )
        return cls(**kwargs)


def default_envelope(p_max_ref: float, omega_max: float) -> tuple[float, float, float]:
    """(t_max_ref, km1_ref, km2_ref) such that peak deliverable power is
    exactly ``p_max_ref`` at the torque/power corner speed."""
    omega_corner = CORNER_SPEED_FRACTION * omega_max
    t_max_ref = p_max_ref / omega_corner
    km1_ref = -POWER_DROOP_FRACTION * p_max_ref / omega_max
    km2_ref = omega_corner * (t_max_ref - km1_ref)
    return t_max_ref, km1_ref, km2_ref


def synthesize_motor_map(shape: LossShape, p_max_ref: float, t_max_ref: float,
                         omega_max: float, km1_ref: float | None = None,
                         km2_ref: float | None = None,
                         n_omega: int = 61, n_torque: int = 61) -> MotorModel:
    """Evaluate the parametric loss on a rectangular (speed, torque) grid."""
    if min(p_max_ref, t_max_ref, omega_max) <= 0.0:
        raise ValidationError("p_max_ref, t_max_ref, omega_max must be positive")
    if km1_ref is None or km2_ref is None:
        _, km1_d, km2_d = default_envelope(p_max_ref, omega_max)
        km1_ref = km1_d if km1_ref is None else km1_ref
        km2_ref = km2_d if km2_ref is None else km2_ref
    if km1_ref > 0.0 or km2_ref < 0.0:
        raise ValidationError("need km1_ref <= 0 and km2_ref >= 0")
    omega_grid = np.linspace(0.0, omega_max, n_omega)
    torque_grid = np.linspace(-t_max_ref, t_max_ref, n_torque)
    loss = shape.loss(omega_grid[:, None], torque_grid[None, :])
    if np.any(loss < 0.0):
        raise ValidationError("loss shape produces negative losses on the map")
    return MotorModel(
        p_max_ref=float(p_max_ref), t_max_ref=float(t_max_ref),
        omega_max=float(omega_max), km1_ref=float(km1_ref), km2_ref=float(km2_ref),
        omega_grid=omega_grid, torque_grid=torque_grid, loss_map=loss,
    )


def _contour_points(model: MotorModel, p_level: float):
    """Sampling points for one power level: the map's speed nodes, with
    torque saturated at the ceiling where the exact contour would exceed
    it, dropped where even the saturated point leaves the power line."""
    if p_level == 0.0:
        omega = model.omega_grid
        return omega, np.zeros_like(omega)
    omega = model.omega_grid[model.omega_grid > 0.0]
    torque = np.clip(p_level / omega, -model.t_max_ref, model.t_max_ref)
    ok = np.abs(torque) * omega <= model.km1_ref * omega + model.km2_ref + 1e-9 * model.km2_ref
    return omega[ok], torque[ok]


def _fit_quadratic_nonneg_curvature(omega: np.ndarray, loss: np.ndarray):
    """Least squares of loss ~ a1 + a2*w + a3*w^2 with a3 >= 0."""
    basis = np.column_stack([np.ones_like(omega), omega, omega ** 2])
    coef, *_ = np.linalg.lstsq(basis, loss, rcond=None)
    if coef[2] < 0.0:
        coef2, *_ = np.linalg.lstsq(basis[:, :2], loss, rcond=None)
        coef = np.array([coef2[0], coef2[1], 0.0])
    resid = basis @ coef - loss
    return coef, float(np.sqrt(np.mean(resid ** 2)))


def fit_loss_coefficients(model: MotorModel,
                          n_levels: int = DEFAULT_N_LEVELS,
                          max_excluded_fraction: float = 0.10) -> MotorModel:
    """Fill the per-power-level coefficient table of a reference motor.

    Each level is fit on the map's own speed nodes so the fit minimizes
    exactly the error later measured against the map. Levels with fewer
    than three feasible contour nodes are excluded from the table (their
    lookups fall back to the nearest included level). The map-wide
    normalized RMSE is evaluated afterwards at every in-envelope grid
    point the quasi-static model can actually reach (positive speed, or
    the zero-speed/zero-torque point: at standstill the drivetrain cannot
    transmit torque).
    """
    levels = np.linspace(-model.p_max_ref, model.p_max_ref, n_levels)
    coeffs = np.zeros((n_levels, 3))
    rmse = np.full(n_levels, np.nan)
    included = np.zeros(n_levels, dtype=bool)

    for idx, p_level in enumerate(levels):
        omega, torque = _contour_points(model, p_level)
        if np.unique(omega).size < 3:
            continue
        loss = model.map_loss(omega, torque)
        coeffs[idx], rmse[idx] = _fit_quadratic_nonneg_curvature(omega, loss)
        included[idx] = True

    n_excluded = int(n_levels - included.sum())
    if n_excluded > max_excluded_fraction * n_levels:
        raise FitError(
            f"{n_excluded}/{n_levels} power levels had underpopulated contours"
        )

    fitted = replace(model, levels=levels, coeff_table=coeffs,
                     level_included=included, level_rmse=rmse)
    fitted = replace(fitted, fit_rmse_norm=_map_rmse_norm(fitted))
    return fitted


def _nearest_included(model: MotorModel, p_em: np.ndarray) -> np.ndarray:
    """Indices of the nearest included level for each mechanical power."""
    levels = model.levels
    step = levels[1] - levels[0]
    idx = np.clip(np.rint((p_em - levels[0]) / step).astype(int), 0, levels.size - 1)
    if not model.level_included.all():
        ok = np.flatnonzero(model.level_included)
        idx = ok[np.argmin(np.abs(levels[ok][None, :] - levels[idx][..., None]), axis=-1)]
    return idx


def _map_rmse_norm(model: MotorModel) -> float:
    om, tq = np.meshgrid(model.omega_grid, model.torque_grid, indexing="ij")
    reachable = model.in_envelope(om, tq) & ((om > 0.0) | (tq == 0.0))
    omega = om[reachable]
    torque = tq[reachable]
    actual = model.loss_map[reachable]
    idx = _nearest_included(model, omega * torque)
    a = model.coeff_table[idx]
    predicted = a[:, 0] + a[:, 1] * omega + a[:, 2] * omega ** 2
    return float(np.sqrt(np.mean((predicted - actual) ** 2)) / np.max(actual))


@dataclass(frozen=True)
class ScaledMotor:
    """A reference motor resized to ``p_em_max``; envelope and loss
    coefficients are the reference values times ``p_em_max / p_max_ref``,
    and coefficient lookups happen at matched relative power."""

    model: MotorModel
    p_em_max: float

    def __post_init__(self):
        if self.p_em_max <= 0.0:
            raise ValidationError("p_em_max must be positive")
        if not self.model.fitted:
            raise ValidationError("scale a motor only after fitting its coefficients")

    @property
    def scale(self) -> float:
        return self.p_em_max / self.model.p_max_ref

    @property
    def t_em_max(self) -> float:
        return self.model.t_max_ref * self.scale

    @property
    def km1(self) -> float:
        return self.model.km1_ref * self.scale

    @property
    def km2(self) -> float:
        return self.model.km2_ref * self.scale

    @property
    def omega_max(self) -> float:
        return self.model.omega_max

    def rescaled(self, p_em_max: float) -> "ScaledMotor":
        return ScaledMotor(self.model, p_em_max)

    def loss_coeffs(self, p_em) -> np.ndarray:
        """Per-sample (a1, a2, a3) for mechanical powers of this size."""
        p_em = np.atleast_1d(np.asarray(p_em, dtype=float))
        idx = _nearest_included(self.model, p_em / self.scale)
        return self.model.coeff_table[idx] * self.scale

    def envelope_power(self, omega):
        return self.model.envelope_power(omega) * self.scale

    def map_loss(self, omega, torque):
        """Loss of the resized machine via the reference map."""
        return self.model.map_loss(omega, np.asarray(torque, dtype=float) / self.scale) * self.scale

    def in_envelope(self, omega, torque, rtol: float = 1e-9):
        return self.model.in_envelope(omega, np.asarray(torque, dtype=float) / self.scale, rtol)

    def efficiency(self, omega, torque):
        return self.model.efficiency(omega, np.asarray(torque, dtype=float) / self.scale)


def scale_motor(model: MotorModel, p_em_max: float) -> ScaledMotor:
    return ScaledMotor(model, p_em_max)


def reference_motor(p_max_ref: float, omega_max: float,
                    eta_peak: float = 0.85,
                    fractions: tuple[float, float, float, float] = (0.10, 0.30, 0.42, 0.18),
                    n_omega: int = 61, n_torque: int = 61,
                    n_levels: int = DEFAULT_N_LEVELS) -> MotorModel:
    """Build and fit the default surrogate reference motor in one call."""
    t_max_ref, km1_ref, km2_ref = default_envelope(p_max_ref, omega_max)
    shape = default_loss_shape(p_max_ref, t_max_ref, omega_max, eta_peak, fractions)
    model = synthesize_motor_map(shape, p_max_ref, t_max_ref, omega_max,
                                 km1_ref, km2_ref, n_omega, n_torque)
    return fit_loss_coefficients(model, n_levels=n_levels)


def exogenous_motor_power(cycle: DriveCycle, params: VehicleParams,
                          m_bar: float, p_em_max: float) -> np.ndarray:
    """Motor mechanical power were the motor the only mover at fixed mass.

    Motoring demand is lifted by the driveline losses; braking demand is
    shrunk by them and by the regeneration fraction; everything is floored
    at the largest absorbable power.
    """
    if m_bar <= 0.0 or p_em_max <= 0.0:
        raise ValidationError("m_bar and p_em_max must be positive")
    p_req = required_power(cycle, params, m_bar)
    eta = params.eta_drive
    return np.maximum.reduce([
        p_req / eta,
        p_req * eta * params.R_b,
        np.full_like(p_req, -p_em_max),
    ])
