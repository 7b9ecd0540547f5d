"""Battery pack model: equivalent-circuit cell table and affine power fits.

The pack is an equivalent circuit with an open-circuit voltage that
depends on the state of energy and a constant internal resistance. Two
pack-level quantities drive the conic program:

* the open-circuit power ``P_oc = V_oc^2 / R``, fitted affinely in the
  stored energy and the capacity, ``P_oc = p1*E_b + p2*E_b_max``;
* the internal power ceiling ``P_i_max = V_oc * I_max``, fitted the same
  way with coefficients (q1, q2).

Both fits are 1-homogeneous in (E_b, E_b_max) because capacity scales by
adding parallel branches at constant voltage, so coefficients identified
on the reference pack apply to any capacity.

The loss-polynomial symbols of the motor model also appear as (a1, a2) in
battery contexts elsewhere; here the open-circuit coefficients are named
(p1, p2) and the power-limit ones (q1, q2) to keep the namespaces apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError, ValidationError


@dataclass(frozen=True)
class CellTable:
    """Per-cell equivalent-circuit data on a state-of-energy grid."""

    soe: np.ndarray       # state of energy grid, ascending in [0, 1]
    voc: np.ndarray       # open-circuit voltage [V]
    r: np.ndarray         # internal resistance [ohm]
    i_max: np.ndarray     # max discharge current [A]
    e_cell_wh: float      # energy content of one cell [Wh]
    capacity_ah: float    # rated charge of one cell [Ah]

    def __post_init__(self):
        for name in ("soe", "voc", "r", "i_max"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.soe.ndim != 1 or self.soe.size < 2:
            raise ValidationError("cell table needs at least two SoE points")
        if np.any(np.diff(self.soe) <= 0.0):
            raise ValidationError("SoE grid must be strictly increasing")
        for name in ("voc", "r", "i_max"):
            arr = getattr(self, name)
            if arr.shape != self.soe.shape:
                raise ValidationError(f"{name} must match the SoE grid")
            if np.any(arr <= 0.0):
                raise ValidationError(f"{name} must be positive")
        if self.e_cell_wh <= 0.0 or self.capacity_ah <= 0.0:
            raise ValidationError("cell energy and capacity must be positive")

    @property
    def v_nom(self) -> float:
        """Nominal cell voltage: energy content over rated charge."""
        return self.e_cell_wh / self.capacity_ah


def default_cell_table(n_points: int = 101) -> CellTable:
    """Generic high-drain 18650-class cell: affine open-circuit voltage
    from 2.8 V (empty) to 4.2 V (full), constant resistance and current
    limit, 2.5 Ah. Thirteen in series give a 48 V / 120 Wh reference pack."""
    soe = np.linspace(0.0, 1.0, n_points)
    return CellTable(
        soe=soe,
        voc=2.8 + 1.4 * soe,
        r=np.full(n_points, 0.025),
        i_max=np.full(n_points, 20.0),
        e_cell_wh=120.0 / 13.0,
        capacity_ah=2.5,
    )


@dataclass(frozen=True)
class BatteryModel:
    """Affine pack fits plus the table they came from."""

    p1: float             # open-circuit power vs stored energy [W/Wh]
    p2: float             # open-circuit power vs capacity [W/Wh]
    q1: float             # power ceiling vs stored energy [W/Wh]
    q2: float             # power ceiling vs capacity [W/Wh]
    e_pack_ref: float     # reference pack energy [Wh]
    v_nom: float          # nominal pack voltage [V]
    fit_rmse_norm: float  # normalized RMSE of the P_oc fit [-]
    cell: CellTable
    series: int
    parallel: int
    soe_window: tuple[float, float]

    def p_oc(self, e_b, e_b_max):
        """Fitted open-circuit power at stored energy / capacity in Wh."""
        return self.p1 * np.asarray(e_b, dtype=float) + self.p2 * e_b_max

    def p_i_max(self, e_b, e_b_max):
        """Fitted internal-power ceiling at stored energy / capacity in Wh."""
        return self.q1 * np.asarray(e_b, dtype=float) + self.q2 * e_b_max

    def p_oc_table(self, e_b, e_b_max):
        """Open-circuit power from the cell table (no affine fit): the
        reference-pack curve scaled by the parallel-branch count that a
        capacity of ``e_b_max`` implies."""
        scale = e_b_max / self.e_pack_ref
        soe = np.asarray(e_b, dtype=float) / e_b_max
        voc = self.series * np.interp(soe, self.cell.soe, self.cell.voc)
        r = self.series * np.interp(soe, self.cell.soe, self.cell.r) / self.parallel
        return voc ** 2 / r * scale

    def p_i_max_table(self, e_b, e_b_max):
        scale = e_b_max / self.e_pack_ref
        soe = np.asarray(e_b, dtype=float) / e_b_max
        voc = self.series * np.interp(soe, self.cell.soe, self.cell.voc)
        i_max = self.parallel * np.interp(soe, self.cell.soe, self.cell.i_max)
        return voc * i_max * scale

    def to_dict(self) -> dict:
        return {
            "p1": self.p1, "p2": self.p2, "q1": self.q1, "q2": self.q2,
            "e_pack_ref": self.e_pack_ref, "v_nom": self.v_nom,
            "fit_rmse_norm": self.fit_rmse_norm,
            "series": self.series, "parallel": self.parallel,
            "soe_window": list(self.soe_window),
            "cell": {
                "soe": self.cell.soe.tolist(),
                "voc": self.cell.voc.tolist(),
                "r": self.cell.r.tolist(),
                "i_max": self.cell.i_max.tolist(),
                "e_cell_wh": self.cell.e_cell_wh,
                "capacity_ah": self.cell.capacity_ah,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BatteryModel":
        cell = CellTable(
            soe=np.asarray(d["cell"]["soe"]), voc=np.asarray(d["cell"]["voc"]),
            r=np.asarray(d["cell"]["r"]), i_max=np.asarray(d["cell"]["i_max"]),
            e_cell_wh=d["cell"]["e_cell_wh"], capacity_ah=d["cell"]["capacity_ah"],
        )
        return cls(p1=d["p1"], p2=d["p2"], q1=d["q1"], q2=d["q2"],
                   e_pack_ref=d["e_pack_ref"], v_nom=d["v_nom"],
                   fit_rmse_norm=d["fit_rmse_norm"], cell=cell,
                   series=d["series"], parallel=d["parallel"],
                   soe_window=tuple(d["soe_window"]))


def fit_battery(cell: CellTable, series: int = 13, parallel: int = 1,
                soe_window: tuple[float, float] = (0.2, 1.0),
                max_rmse_norm: float = 0.05) -> BatteryModel:
    """Identify the affine pack fits over the admissible SoE window.

    Fits are least squares of the pack-level table curves against stored
    energy on the reference pack; the capacity coefficient is the
    intercept divided by the reference energy. A P_oc fit with normalized
    RMSE above ``max_rmse_norm`` is rejected.
    """
    if series < 1 or parallel < 1:
        raise ValidationError("series and parallel counts must be >= 1")
    lo, hi = soe_window
    if not 0.0 <= lo < hi <= 1.0:
        raise ValidationError("SoE window must satisfy 0 <= lo < hi <= 1")

    e_pack_ref = series * parallel * cell.e_cell_wh
    mask = (cell.soe >= lo - 1e-12) & (cell.soe <= hi + 1e-12)
    if mask.sum() < 2:
        raise ValidationError("SoE window contains fewer than two table points")
    soe = cell.soe[mask]
    voc_pack = series * cell.voc[mask]
    r_pack = series * cell.r[mask] / parallel
    i_max_pack = parallel * cell.i_max[mask]

    e_b = soe * e_pack_ref
    p_oc = voc_pack ** 2 / r_pack
    p_lim = voc_pack * i_max_pack

    basis = np.column_stack([e_b, np.ones_like(e_b)])
    (p1, p_icpt), *_ = np.linalg.lstsq(basis, p_oc, rcond=None)
    (q1, q_icpt), *_ = np.linalg.lstsq(basis, p_lim, rcond=None)
    resid = basis @ np.array([p1, p_icpt]) - p_oc
    rmse_norm = float(np.sqrt(np.mean(resid ** 2)) / np.mean(p_oc))
    if rmse_norm > max_rmse_norm:
        raise FitError(
            f"open-circuit power fit RMSE {rmse_norm:.2%} exceeds "
            f"{max_rmse_norm:.0%}; the cell table is too non-affine"
        )

    model = BatteryModel(
        p1=float(p1), p2=float(p_icpt / e_pack_ref),
        q1=float(q1), q2=float(q_icpt / e_pack_ref),
        e_pack_ref=float(e_pack_ref),
        v_nom=float(series * cell.v_nom),
        fit_rmse_norm=rmse_norm,
        cell=cell, series=series, parallel=parallel,
        soe_window=(float(lo), float(hi)),
    )
    _check_positivity(model)
    return model


def _check_positivity(model: BatteryModel) -> None:
    """Fits must stay positive over the admissible window; by homogeneity
    checking the window endpoints at unit capacity suffices."""
    for zeta in model.soe_window:
        if model.p_oc(zeta, 1.0) <= 0.0:
            raise FitError(f"fitted open-circuit power not positive at SoE {zeta}")
        if model.p_i_max(zeta, 1.0) <= 0.0:
            raise FitError(f"fitted power ceiling not positive at SoE {zeta}")


def internal_power_root(p_oc, p_b):
    """Exact internal battery power: the smaller root of
    ``P_i^2 - P_oc*P_i + P_oc*P_b = 0``.

    Returns NaN where the discriminant is negative (the pack cannot
    source that terminal power).
    """
    p_oc = np.asarray(p_oc, dtype=float)
    p_b = np.asarray(p_b, dtype=float)
    disc = p_oc ** 2 - 4.0 * p_oc * p_b
    with np.errstate(invalid="ignore"):
        root = 0.5 * (p_oc - np.sqrt(disc))
    return np.where(disc < 0.0, np.nan, root)
