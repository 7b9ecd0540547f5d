import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from microtco.cycles import (DriveCycle, GradientProfileSpec, builtin_cycle,
                             cap_speed, load_cycle, moped_urban, resample,
                             save_cycle, scooter_urban, synthesize_gradient)
from microtco.errors import CycleParseError, ValidationError


def write(tmp_path, text, name="cycle.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoad:
    def test_three_row_constant_acceleration(self, tmp_path):
        p = write(tmp_path, "t_s,v_mps,grade\n0,0,0\n1,1,0\n2,2,0\n")
        c = load_cycle(p, 1.0)
        assert np.array_equal(c.speed, [0.0, 1.0, 2.0])
        assert np.array_equal(c.accel, [1.0, 1.0, 0.0])
        assert c.d_cycle == 3.0

    def test_constant_speed_distance(self, tmp_path):
        rows = "\n".join(f"{t},5,0" for t in range(100))
        p = write(tmp_path, "t_s,v_mps,grade\n" + rows + "\n")
        c = load_cycle(p, 1.0)
        assert c.n_samples == 100
        assert c.d_cycle == pytest.approx(500.0)
        assert np.all(c.accel == 0.0)

    def test_downsample_matches_interpolant(self, tmp_path):
        t = np.arange(0, 25.05, 0.1)
        v = 6.0 + 4.0 * np.sin(0.41 * t)
        rows = "\n".join(f"{ti:.1f},{float(vi)!r},0" for ti, vi in zip(t, v))
        p = write(tmp_path, "t_s,v_mps,grade\n" + rows + "\n")
        c = load_cycle(p, 1.0)
        assert c.n_samples == int(np.ceil(t[-1])) + 1
        expected = np.interp(c.timestamps, t, v)
        assert np.allclose(c.speed, expected, rtol=0, atol=1e-12)
        assert c.speed.max() <= v.max() + 1e-12
        # peak preserved to within one source-interval of interpolation
        assert v.max() - c.speed.max() <= np.max(np.abs(np.diff(v)))

    def test_kmh_altitude_variant(self, tmp_path):
        p = write(tmp_path, "t_s,v_kmh,alt_m\n0,36,0\n1,36,0.5\n2,36,1.0\n3,36,1.5\n")
        c = load_cycle(p, 1.0)
        assert np.allclose(c.speed, 10.0)
        # 0.5 m climb per 10 m -> 5% grade
        assert np.allclose(np.tan(c.grade_angle), 0.05, rtol=1e-9)

    def test_altitude_floor_at_standstill(self, tmp_path):
        # creeping below the 0.1 m/step distance floor: grade uses the
        # floored distance instead of blowing up
        p = write(tmp_path, "t_s,v_kmh,alt_m\n0,0.18,0\n1,0.18,0.02\n2,0.18,0.04\n")
        c = load_cycle(p, 1.0)
        assert np.all(np.isfinite(c.grade))
        assert np.allclose(c.grade, 0.02 / 0.1)

    def test_missing_column_named(self, tmp_path):
        p = write(tmp_path, "t_s,v_mps\n0,0\n1,1\n")
        with pytest.raises(CycleParseError, match="grade"):
            load_cycle(p, 1.0)

    def test_unknown_header(self, tmp_path):
        p = write(tmp_path, "time,speed\n0,0\n1,1\n")
        with pytest.raises(CycleParseError):
            load_cycle(p, 1.0)

    def test_non_monotone_time(self, tmp_path):
        p = write(tmp_path, "t_s,v_mps,grade\n0,0,0\n2,1,0\n1,2,0\n")
        with pytest.raises(ValidationError, match="increasing"):
            load_cycle(p, 1.0)

    def test_empty_file(self, tmp_path):
        p = write(tmp_path, "")
        with pytest.raises(ValidationError):
            load_cycle(p, 1.0)

    def test_single_row(self, tmp_path):
        p = write(tmp_path, "t_s,v_mps,grade\n0,1,0\n")
        with pytest.raises(ValidationError):
            load_cycle(p, 1.0)


class TestRoundTrip:
    def test_save_load_lossless(self, tmp_path):
        c = builtin_cycle("scooter-urban", hilly=True)
        p = tmp_path / "out.csv"
        save_cycle(c, p)
        c2 = load_cycle(p, c.dt)
        assert np.array_equal(c.speed, c2.speed)
        assert np.array_equal(c.accel, c2.accel)
        assert np.array_equal(c.grade, c2.grade)
        assert c.d_cycle == c2.d_cycle

    def test_resample_idempotent(self, tmp_path):
        c = scooter_urban()
        c2 = resample(c, c.dt)
        assert np.array_equal(c.speed, c2.speed)
        assert np.array_equal(c.accel, c2.accel)
        assert np.array_equal(c.grade, c2.grade)

    def test_resample_to_finer_grid(self):
        c = scooter_urban()
        fine = resample(c, 0.5)
        assert fine.dt == 0.5
        assert fine.n_samples == 2 * (c.n_samples - 1) + 1
        assert np.array_equal(fine.speed[::2], c.speed)


class TestCap:
    def test_cap_at_45_kmh(self):
        v = np.linspace(0.0, 20.0, 50)
        c = DriveCycle.from_speed_grade(v, np.zeros_like(v), 1.0)
        capped = cap_speed(c, 45.0 / 3.6)
        assert capped.speed.max() == pytest.approx(12.5)

    def test_cap_above_max_is_identity(self):
        c = scooter_urban()
        capped = cap_speed(c, c.speed.max() + 1.0)
        assert np.array_equal(c.speed, capped.speed)
        assert np.array_equal(c.accel, capped.accel)

    def test_halving_cap_shrinks_distance(self):
        c = scooter_urban()
        capped = cap_speed(c, 0.5 * c.speed.max())
        assert capped.d_cycle == pytest.approx(np.sum(np.minimum(
            c.speed, 0.5 * c.speed.max())) * c.dt)
        assert capped.d_cycle < c.d_cycle

    def test_cap_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            cap_speed(scooter_urban(), 0.0)

    @given(cap1=st.floats(0.5, 15.0), cap2=st.floats(0.5, 15.0))
    def test_cap_idempotent_and_monotone(self, cap1, cap2):
        c = scooter_urban()
        once = cap_speed(c, cap1)
        twice = cap_speed(once, cap1)
        assert np.array_equal(once.speed, twice.speed)
        lo, hi = sorted((cap1, cap2))
        assert cap_speed(c, lo).d_cycle <= cap_speed(c, hi).d_cycle


class TestGradient:
    def test_antisymmetric_profile_closes_altitude(self):
        v = np.full(120, 5.0)
        c = DriveCycle.from_speed_grade(v, np.zeros_like(v), 1.0)
        spec = GradientProfileSpec(segments=((250.0, 0.10), (250.0, -0.10)))
        h = synthesize_gradient(c, spec, speed_adjust=False)
        assert abs(h.net_climb()) < 0.1

    def test_zero_spec_is_identity(self):
        c = scooter_urban()
        h = synthesize_gradient(c, GradientProfileSpec(segments=()))
        assert np.array_equal(c.speed, h.speed)
        assert np.array_equal(c.grade, h.grade)

    def test_speed_adjust_slows_climbs(self):
        v = np.full(200, 5.0)
        c = DriveCycle.from_speed_grade(v, np.zeros_like(v), 1.0)
        spec = GradientProfileSpec(segments=((400.0, 0.10), (400.0, -0.10)))
        flat_mean = c.speed.mean()
        h = synthesize_gradient(c, spec, speed_adjust=True)
        climb = h.grade > 0.01
        assert climb.any()
        assert h.speed[climb].mean() < flat_mean

    def test_profile_longer_than_cycle_rejected(self):
        v = np.full(10, 5.0)
        c = DriveCycle.from_speed_grade(v, np.zeros_like(v), 1.0)
        spec = GradientProfileSpec(segments=((500.0, 0.05), (500.0, -0.05)))
        with pytest.raises(ValidationError, match="longer"):
            synthesize_gradient(c, spec)

    def test_nonzero_net_climb_rejected(self):
        with pytest.raises(ValidationError, match="zero"):
            GradientProfileSpec(segments=((100.0, 0.05), (100.0, -0.02)))

    def test_hilly_preserves_sampling(self):
        flat = moped_urban()
        hilly = builtin_cycle("moped-urban", hilly=True)
        assert hilly.n_samples == flat.n_samples
        assert hilly.dt == flat.dt

    def test_requires_flat_input(self):
        h = builtin_cycle("scooter-urban", hilly=True)
        with pytest.raises(ValidationError, match="flat"):
            synthesize_gradient(h, GradientProfileSpec(segments=((10.0, 0.01), (10.0, -0.01))))

    @given(
        grades=st.lists(st.floats(0.01, 0.12), min_size=1, max_size=3),
        lengths=st.lists(st.floats(50.0, 300.0), min_size=3, max_size=3),
        window=st.integers(1, 9),
        adjust=st.booleans(),
    )
    def test_net_climb_closes_for_any_zero_sum_profile(self, grades, lengths,
                                                       window, adjust):
        segments = []
        for g, length in zip(grades, lengths):
            segments += [(length, g), (length, -g)]
        spec = GradientProfileSpec(segments=tuple(segments),
                                   smoothing_window=window)
        v = np.full(max(int(spec.total_length / 4.0) + 20, 60), 5.0)
        c = DriveCycle.from_speed_grade(v, np.zeros_like(v), 1.0)
        h = synthesize_gradient(c, spec, speed_adjust=adjust)
        assert abs(h.net_climb()) < 0.1
        assert h.n_samples == c.n_samples and h.dt == c.dt


class TestInvariants:
    @pytest.mark.parametrize("name,hilly", [("scooter-urban", False),
                                            ("scooter-urban", True),
                                            ("moped-urban", False),
                                            ("moped-urban", True)])
    def test_accel_rederivable_bit_for_bit(self, name, hilly):
        c = builtin_cycle(name, hilly=hilly)
        recomputed = np.zeros_like(c.speed)
        recomputed[:-1] = np.diff(c.speed) / c.dt
        assert np.array_equal(c.accel, recomputed)

    def test_builtin_cycles_meet_type_invariants(self):
        for name in ("scooter-urban", "moped-urban"):
            c = builtin_cycle(name)
            assert np.all(c.speed >= 0.0)
            assert np.all(np.diff(c.timestamps) == c.dt)
            assert c.d_cycle > 0.0

    def test_negative_speed_rejected(self):
        with pytest.raises(ValidationError):
            DriveCycle.from_speed_grade(np.array([0.0, -1.0]), np.zeros(2), 1.0)

    def test_arrays_immutable(self):
        c = scooter_urban()
        with pytest.raises(ValueError):
            c.speed[0] = 99.0
