import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from microtco.battery import (BatteryModel, CellTable, default_cell_table,
                              fit_battery, internal_power_root)
from microtco.errors import FitError, ValidationError


def flat_cell(voc=3.6, r=0.02, i_max=20.0):
    soe = np.linspace(0.0, 1.0, 51)
    return CellTable(soe=soe, voc=np.full(51, voc), r=np.full(51, r),
                     i_max=np.full(51, i_max), e_cell_wh=9.0, capacity_ah=2.5)


class TestFit:
    def test_constant_voltage_gives_flat_fit(self):
        model = fit_battery(flat_cell())
        assert model.p1 == pytest.approx(0.0, abs=1e-9)
        assert model.fit_rmse_norm < 1e-12

    def test_affine_voltage_fit_matches_independent_lsq(self, battery):
        # independent oracle: the quadratic pack curve fitted affinely on a
        # dense window grid
        cell = default_cell_table()
        mask = (cell.soe >= 0.2) & (cell.soe <= 1.0)
        e_ref = 13 * cell.e_cell_wh
        e_b = cell.soe[mask] * e_ref
        p_oc = (13 * cell.voc[mask]) ** 2 / (13 * cell.r[mask])
        coefs = np.polyfit(e_b, p_oc, 1)
        resid = np.polyval(coefs, e_b) - p_oc
        rmse_norm = np.sqrt(np.mean(resid ** 2)) / np.mean(p_oc)
        assert battery.fit_rmse_norm == pytest.approx(rmse_norm, rel=1e-9)
        assert rmse_norm <= 0.01
        assert battery.p1 == pytest.approx(coefs[0], rel=1e-9)

    def test_power_limit_fit_exact_for_affine_voltage(self, battery):
        # Voc affine and I_max constant make the ceiling exactly affine
        z = np.linspace(0.2, 1.0, 9)
        table = battery.p_i_max_table(z * battery.e_pack_ref, battery.e_pack_ref)
        fit = battery.p_i_max(z * battery.e_pack_ref, battery.e_pack_ref)
        assert np.allclose(table, fit, rtol=1e-9)

    def test_doubling_parallel_doubles_pack_curves(self):
        one = fit_battery(default_cell_table(), parallel=1)
        two = fit_battery(default_cell_table(), parallel=2)
        z = np.linspace(0.2, 1.0, 7)
        assert np.allclose(
            two.p_oc_table(z * two.e_pack_ref, two.e_pack_ref),
            2.0 * one.p_oc_table(z * one.e_pack_ref, one.e_pack_ref), rtol=1e-12)
        assert np.allclose(
            two.p_i_max_table(z * two.e_pack_ref, two.e_pack_ref),
            2.0 * one.p_i_max_table(z * one.e_pack_ref, one.e_pack_ref), rtol=1e-12)
        # homogeneity keeps the per-Wh fit coefficients unchanged
        assert two.p1 == pytest.approx(one.p1, rel=1e-9)
        assert two.p2 == pytest.approx(one.p2, rel=1e-9)

    def test_reference_pack_numbers(self, battery):
        assert battery.e_pack_ref == pytest.approx(120.0)
        assert battery.v_nom == pytest.approx(48.0)

    def test_strongly_curved_table_rejected(self):
        soe = np.linspace(0.0, 1.0, 51)
        cell = CellTable(soe=soe, voc=2.0 + 8.0 * soe ** 4,
                         r=np.full(51, 0.02), i_max=np.full(51, 20.0),
                         e_cell_wh=9.0, capacity_ah=2.5)
        with pytest.raises(FitError, match="RMSE"):
            fit_battery(cell, soe_window=(0.0, 1.0), max_rmse_norm=0.05)

    @given(e_max=st.floats(5.0, 5000.0))
    def test_fit_positive_over_window_any_capacity(self, e_max):
        model = fit_battery(default_cell_table(), soe_window=(0.2, 1.0))
        for zeta in (0.2, 0.5, 1.0):
            assert model.p_oc(zeta * e_max, e_max) > 0.0
            assert model.p_i_max(zeta * e_max, e_max) > 0.0

    def test_table_validation(self):
        with pytest.raises(ValidationError):
            CellTable(soe=np.array([0.0, 1.0]), voc=np.array([3.0, -1.0]),
                      r=np.array([0.02, 0.02]), i_max=np.array([20.0, 20.0]),
                      e_cell_wh=9.0, capacity_ah=2.5)


class TestInternalPowerRoot:
    def test_reference_point(self):
        assert internal_power_root(1000.0, 200.0) == pytest.approx(276.4, abs=0.05)

    def test_zero_terminal_power(self):
        assert internal_power_root(1000.0, 0.0) == 0.0

    def test_negative_discriminant_is_nan(self):
        assert np.isnan(internal_power_root(100.0, 80.0))

    def test_root_solves_quadratic(self):
        p_oc, p_b = 5000.0, 900.0
        p_i = internal_power_root(p_oc, p_b)
        assert p_i ** 2 - p_oc * p_i + p_oc * p_b == pytest.approx(0.0, abs=1e-6)
        assert p_i < p_oc / 2  # smaller root

    def test_regeneration_branch(self):
        p_i = internal_power_root(1000.0, -100.0)
        assert p_i < 0.0
        assert p_i ** 2 == pytest.approx((p_i - (-100.0)) * 1000.0, rel=1e-12)


class TestSerialization:
    def test_round_trip(self, battery):
        back = BatteryModel.from_dict(battery.to_dict())
        assert back.p1 == battery.p1
        assert back.q2 == battery.q2
        assert np.array_equal(back.cell.voc, battery.cell.voc)
        z = np.linspace(0.2, 1.0, 5)
        assert np.allclose(back.p_oc_table(z * 120.0, 120.0),
                           battery.p_oc_table(z * 120.0, 120.0))
