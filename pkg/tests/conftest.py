import numpy as np
import pytest

from src.cavity.ring import Detuning, RingCavity
from src.quadrature.squeezing import InputSqueezingModel
from src.quadrature.transfer import DetectionModel

# Reference ring cavity and probe used throughout the suite.
SQRT_R1 = 0.99783
SQRT_R1R2R3 = 0.99628
FSR_HZ = 713e6
OMEGA_D_HZ = -11.098e6
PUMP_X = 0.35
OPO_LINEWIDTH_HZ = 66.2e6
ESCAPE_PURITY = 0.85
ETA_C = 0.90 * 0.85


@pytest.fixture
def measured_cavity():
    return RingCavity.from_amplitudes(SQRT_R1, SQRT_R1R2R3, FSR_HZ)


@pytest.fixture
def measured_detuning():
    return Detuning(OMEGA_D_HZ)


@pytest.fixture
def opo_squeezing():
    return InputSqueezingModel.opo_lorentzian(PUMP_X, OPO_LINEWIDTH_HZ, ESCAPE_PURITY)


@pytest.fixture
def detection():
    return DetectionModel.from_budget(0.90, 0.85)


@pytest.fixture
def grid():
    return 5e6 + 100e3 * np.arange(151)


@pytest.fixture
def true_values():
    """Every fit parameter at the reference point, amplitude coordinates."""
    return {
        "sqrt_r1": SQRT_R1,
        "sqrt_r1r2r3": SQRT_R1R2R3,
        "omega_d_hz": OMEGA_D_HZ,
        "fsr_hz": FSR_HZ,
        "pump_x": PUMP_X,
        "opo_linewidth_hz": OPO_LINEWIDTH_HZ,
        "escape_purity": ESCAPE_PURITY,
        "eta_c": ETA_C,
        "eta_m": 0.0,
    }
