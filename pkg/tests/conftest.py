import os

import numpy as np
import pytest

from models.power_law_model import CalibrationCurve
from src.circuit_params import LineTank
from src.network_sim import FrequencySweep, branch_impedance, cascade_two_port, output_reflection, s_parameters, series
from src.sensing import BareReference

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(REPO_ROOT, "data")

# Tested MUT permittivities plus dry soil.
MUT_EPS = [5, 16, 25.3, 46.5, 55.7, 62.4, 66.8, 71.5, 74.5, 78.3]


def lone_tank_sweep(tank, grid, z0=50.0):
    """Sweep of a single tank in series with the line (no line elements)."""
    omega = 2 * np.pi * np.asarray(grid, dtype=float)
    abcd = cascade_two_port([series(lambda w: branch_impedance(tank, 0.0, w))], omega)
    s11, s21 = s_parameters(abcd, z0)
    return FrequencySweep(grid=grid, s21=s21, s11=s11, z0=z0, s22=output_reflection(abcd, z0))


@pytest.fixture
def config_path():
    return os.path.join(DATA_DIR, "sensor_config.yaml")


@pytest.fixture
def config_text(config_path):
    with open(config_path, "r", encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture
def published_bare():
    return BareReference(12.09e9, 17.22e9)


@pytest.fixture
def fdr_curve():
    """FDR_p curve in Hz with the published coefficients."""
    return CalibrationCurve(a=3.09e9, b=-0.9926, r2=0.9994, domain=(5.0, 80.0))


@pytest.fixture
def small_tank():
    return LineTank(l_i=10e-12, c_i=100e-12)
