import hypothesis
import numpy as np
import pytest

from microtco.battery import default_cell_table, fit_battery
from microtco.cycles import DriveCycle, builtin_cycle, moped_urban, scooter_urban
from microtco.motor import reference_motor
from microtco.params import moped_params, scooter_params
from microtco.solvers import ClarabelAdapter

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def scooter():
    return scooter_params()


@pytest.fixture(scope="session")
def moped_fgt():
    return moped_params("fgt")


@pytest.fixture(scope="session")
def moped_cvt():
    return moped_params("cvt")


@pytest.fixture(scope="session")
def ref_motor():
    return reference_motor(1000.0, 600.0)


@pytest.fixture(scope="session")
def battery():
    return fit_battery(default_cell_table(), soe_window=(0.2, 1.0))


@pytest.fixture(scope="session")
def scooter_cycle():
    return scooter_urban()


@pytest.fixture(scope="session")
def scooter_cycle_hilly():
    return builtin_cycle("scooter-urban", hilly=True)


@pytest.fixture(scope="session")
def moped_cycle():
    return moped_urban()


@pytest.fixture(scope="session")
def moped_cycle_hilly():
    return builtin_cycle("moped-urban", hilly=True)


@pytest.fixture(scope="session")
def adapter():
    return ClarabelAdapter()


@pytest.fixture(scope="session")
def tiny_cycle():
    v = np.array([0.0, 1.5, 3.0, 4.0, 3.0, 1.5, 0.0])
    return DriveCycle.from_speed_grade(v, np.zeros_like(v), 1.0, "tiny")
