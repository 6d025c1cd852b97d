import math

import numpy as np
import pytest

from src.cavity.ring import Detuning, RingCavity
from src.errors import FitSpecError
from src.estimator.fit import FitSpec
from src.estimator.profile import PROFILE_COLUMNS, profile_identifiability, shifted_start
from src.quadrature.spectrum import QuadratureSpectrum, spectrum
from src.quadrature.squeezing import InputSqueezingModel
from src.quadrature.transfer import DetectionModel
from src.synth.measurement import MeasurementConfig, synthesize_trace


def _parts(values):
    cavity = RingCavity.from_amplitudes(values["sqrt_r1"], values["sqrt_r1r2r3"], values["fsr_hz"])
    squeezing = InputSqueezingModel.opo_lorentzian(
        values["pump_x"], values["opo_linewidth_hz"], values["escape_purity"]
    )
    return cavity, Detuning(values["omega_d_hz"]), squeezing, DetectionModel(eta_c=values["eta_c"])


def _spec(values, floats):
    guess = {"sqrt_r1": 0.9977, "sqrt_r1r2r3": 0.9962, "omega_d_hz": 11.0e6, "fsr_hz": 700e6}
    return FitSpec(
        float_params=floats,
        fixed_params={k: v for k, v in values.items() if k not in floats},
        initial_guess={name: guess[name] for name in floats},
    )


def test_detuning_profile_has_its_minimum_at_the_truth(true_values, grid):
    model = spectrum(*_parts(true_values), grid)
    scale = math.sqrt(2.0) / 10.0
    trace = QuadratureSpectrum(grid, model.v1, model.v2, scale * model.v1, scale * model.v2)
    spec = _spec(true_values, ("sqrt_r1", "sqrt_r1r2r3", "omega_d_hz"))
    values = -11.098e6 + np.array([-200e3, -100e3, 0.0, 100e3, 200e3])
    frame = profile_identifiability(trace, spec, "omega_d_hz", values)
    assert list(frame.columns) == PROFILE_COLUMNS
    assert frame["converged"].all()
    assert int(frame["chi2"].idxmin()) == 2
    assert frame["chi2"].iloc[0] > frame["chi2"].iloc[2] + 1.0
    assert frame["chi2"].iloc[4] > frame["chi2"].iloc[2] + 1.0


def test_free_spectral_range_profile_is_flat(true_values, grid):
    trace = synthesize_trace(*_parts(true_values), MeasurementConfig(seed=12), grid)
    spec = _spec(true_values, ("sqrt_r1", "sqrt_r1r2r3", "omega_d_hz", "fsr_hz"))
    values = 713e6 * np.array([0.95, 0.975, 1.0, 1.025, 1.05])
    frame = profile_identifiability(trace, spec, "fsr_hz", values)
    assert frame["converged"].all()
    assert (frame["error"] == "").all()
    assert frame["chi2"].max() - frame["chi2"].min() < 1.0


def test_fixed_parameter_cannot_be_profiled(true_values, grid):
    trace = synthesize_trace(*_parts(true_values), MeasurementConfig(seed=1), grid)
    spec = _spec(true_values, ("sqrt_r1", "sqrt_r1r2r3", "omega_d_hz"))
    with pytest.raises(FitSpecError):
        profile_identifiability(trace, spec, "fsr_hz", [700e6, 713e6])


def test_profile_needs_another_floated_parameter(true_values, grid):
    trace = synthesize_trace(*_parts(true_values), MeasurementConfig(seed=1), grid)
    spec = _spec(true_values, ("omega_d_hz",))
    with pytest.raises(FitSpecError):
        profile_identifiability(trace, spec, "omega_d_hz", [-11e6])


def test_shifting_the_free_spectral_range_keeps_the_linewidth():
    start = {"sqrt_r1": 0.99783, "sqrt_r1r2r3": 0.99628, "omega_d_hz": -11.098e6, "fsr_hz": 713e6}
    moved = shifted_start(start, "fsr_hz", 0.95 * 713e6, "amplitude")
    assert moved["fsr_hz"] == pytest.approx(0.95 * 713e6)
    assert (1.0 - moved["sqrt_r1r2r3"]) * moved["fsr_hz"] == pytest.approx((1.0 - 0.99628) * 713e6)
    assert (1.0 - moved["sqrt_r1"]) * moved["fsr_hz"] == pytest.approx((1.0 - 0.99783) * 713e6)
    assert moved["sqrt_r1r2r3"] < moved["sqrt_r1"]
    assert moved["omega_d_hz"] == start["omega_d_hz"]
    assert start["sqrt_r1"] == 0.99783


def test_shifting_other_parameters_moves_only_them():
    start = {"sqrt_r1": 0.99783, "sqrt_r1r2r3": 0.99628, "omega_d_hz": -11.098e6}
    moved = shifted_start(start, "omega_d_hz", -11.2e6, "amplitude")
    assert moved == {"sqrt_r1": 0.99783, "sqrt_r1r2r3": 0.99628, "omega_d_hz": -11.2e6}
