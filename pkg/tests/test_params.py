import math

import numpy as np
import pytest

from microtco.errors import ValidationError
from microtco.params import (MOPED_CVT_TABLE, check_requirements, mass_closure,
                             moped_params, params_from_table, required_power,
                             required_power_point, scooter_params)


class TestRequiredPower:
    def test_at_rest_zero(self, scooter):
        assert required_power_point(scooter, 87.7, 0.0) == 0.0

    def test_flat_cruise_hand_value(self, scooter):
        # (m*c_rr*g + 0.5*rho*c_d*A_f*v^2) * v at 87.7 kg, 5 m/s
        p = required_power_point(scooter, 87.7, 5.0)
        assert p == pytest.approx(181.1, abs=0.05)

    def test_grade_term_hand_value(self, scooter):
        # isolate the climbing term: m*g*sin(atan(0.10))*v at 87.7 kg, 5 m/s
        import dataclasses
        bare = dataclasses.replace(scooter, c_rr=1e-12, c_d=1e-12)
        theta = math.atan(0.10)
        added = (required_power_point(bare, 87.7, 5.0, grade_angle=theta)
                 - required_power_point(bare, 87.7, 5.0))
        assert added == pytest.approx(87.7 * 9.81 * math.sin(theta) * 5.0, rel=1e-12)
        assert added == pytest.approx(428.03, abs=0.05)

    def test_vector_matches_scalar(self, scooter, scooter_cycle):
        p_vec = required_power(scooter_cycle, scooter, 87.7)
        for k in (0, 10, 50, 200):
            p_pt = required_power_point(
                scooter, 87.7, scooter_cycle.speed[k], scooter_cycle.accel[k],
                scooter_cycle.grade_angle[k])
            assert p_vec[k] == pytest.approx(p_pt, rel=1e-12)

    def test_deterministic(self, scooter, scooter_cycle):
        a = required_power(scooter_cycle, scooter, 87.7)
        b = required_power(scooter_cycle, scooter, 87.7)
        assert np.array_equal(a, b)

    def test_rejects_nonpositive_mass(self, scooter, scooter_cycle):
        with pytest.raises(ValidationError):
            required_power(scooter_cycle, scooter, 0.0)


class TestMassClosure:
    def test_scooter_reference_sizing(self, scooter):
        mb = mass_closure(scooter, 590.0, 435.0, 5.91)
        assert mb.m_em == pytest.approx(0.295)
        assert mb.m_bat == pytest.approx(2.05755)
        assert mb.m_gb == pytest.approx(0.349281)
        assert mb.m_v == pytest.approx(12.7, abs=0.1)
        assert mb.gross(scooter.m_d) == pytest.approx(87.7, abs=0.1)

    def test_moped_fgt_reference_sizing(self, moped_fgt):
        mb = mass_closure(moped_fgt, 2370.0, 2549.0, 5.03)
        assert mb.m_v == pytest.approx(75.1, abs=0.1)

    def test_moped_cvt_reference_sizing(self, moped_cvt):
        mb = mass_closure(moped_cvt, 2550.0, 2874.0, 7.57)
        assert mb.m_v == pytest.approx(78.2, abs=0.1)

    def test_breakdown_sums(self, scooter):
        mb = mass_closure(scooter, 500.0, 400.0, 5.0)
        assert mb.m_v == mb.m_em + mb.m_bat + mb.m_gb + mb.m_f

    def test_rejects_nonpositive(self, scooter):
        with pytest.raises(ValidationError):
            mass_closure(scooter, 0.0, 400.0, 5.0)


class TestRequirements:
    def test_sprint_power_bound(self, scooter):
        rep = check_requirements(scooter, 590.0, 2.81, (-0.1475, 620.975), 87.7)
        assert rep.p_required_acc == pytest.approx(581.3, abs=0.1)
        assert rep.acc_feasible

    def test_sprint_power_infeasible_below_bound(self, scooter):
        rep = check_requirements(scooter, 580.0, 2.81, (-0.1475, 620.975), 87.7)
        assert not rep.acc_feasible
        assert "acceleration" in rep.binding()

    def test_gradeability_bound_matches_hand_torque(self, scooter):
        # a machine with exactly the hand-computed minimum torque puts the
        # ratio bound at the reference ratio
        t_needed = 87.7 * 9.81 * math.sin(math.atan(0.1)) * 0.125 / (0.97 * 5.91)
        assert t_needed == pytest.approx(1.87, abs=0.005)
        rep = check_requirements(scooter, 590.0, t_needed, (-0.1475, 620.975), 87.7)
        assert rep.gamma_lb_grade == pytest.approx(5.91, rel=1e-6)

    def test_zero_start_grade_zeroes_bound(self, scooter):
        import dataclasses
        flat = dataclasses.replace(scooter, theta_start=0.0)
        rep = check_requirements(flat, 590.0, 2.81, (-0.1475, 620.975), 87.7)
        assert rep.gamma_lb_grade == 0.0

    def test_zero_droop_power_condition(self, scooter):
        ok = check_requirements(scooter, 590.0, 2.81, (0.0, 620.975), 87.7)
        assert ok.gamma_ub_topspeed == math.inf
        bad = check_requirements(scooter, 590.0, 2.81, (0.0, 1.0), 87.7)
        assert not bad.band_feasible
        assert "top-speed power" in bad.binding()

    def test_cvt_maps_grade_bound_through_coverage(self, moped_cvt):
        rep = check_requirements(moped_cvt, 2550.0, 12.14, (-0.6375, 2683.9), 153.2)
        assert rep.gamma_lo == pytest.approx(
            max(rep.gamma_lb_grade / moped_cvt.c_f, rep.gamma_lb_topspeed))


class TestParamsValidation:
    def test_cvt_requires_coverage(self):
        table = dict(MOPED_CVT_TABLE)
        del table["c_f"]
        with pytest.raises(ValidationError, match="c_f"):
            params_from_table(table)

    def test_efficiency_bounds(self):
        with pytest.raises(ValidationError):
            params_from_table(dict(MOPED_CVT_TABLE, eta_gb=1.5))

    def test_soe_window_order(self):
        from microtco.params import SCOOTER_TABLE
        with pytest.raises(ValidationError):
            params_from_table(dict(SCOOTER_TABLE, zeta_min=0.9, zeta_max=0.5))

    def test_presets_build(self):
        assert scooter_params().transmission == "fgt"
        assert moped_params("cvt").c_f == 2.7
        assert scooter_params().v_max == pytest.approx(25.0 / 3.6)
        assert scooter_params().theta_start == pytest.approx(0.10)
