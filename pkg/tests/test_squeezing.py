import numpy as np
import pytest

from src.errors import HeisenbergViolationError
from src.quadrature.squeezing import InputSqueezingModel


def test_constant_model_is_flat():
    model = InputSqueezingModel.constant(0.25, 4.0)
    v1, v2 = model.variances(np.array([1e6, 10e6, 100e6]))
    np.testing.assert_array_equal(v1, 0.25)
    np.testing.assert_array_equal(v2, 4.0)


def test_constant_model_must_respect_uncertainty():
    with pytest.raises(HeisenbergViolationError):
        InputSqueezingModel.constant(0.5, 1.5)


def test_pure_opo_output_is_minimum_uncertainty_at_dc():
    model = InputSqueezingModel.opo_lorentzian(0.35, 66.2e6, 1.0)
    v1, v2 = model.variances(0.0)
    assert v1 * v2 == pytest.approx(1.0, rel=1e-12)


def test_lossy_opo_levels():
    model = InputSqueezingModel.opo_lorentzian(0.35, 66.2e6, 0.85)
    v1, v2 = model.variances(0.0)
    assert v1 == pytest.approx(0.34705, rel=1e-4)
    assert v2 == pytest.approx(3.8166, rel=1e-4)
    assert v1 * v2 > 1.0


def test_opo_squeezing_rolls_off_with_frequency():
    model = InputSqueezingModel.opo_lorentzian(0.35, 66.2e6, 0.85)
    freqs = np.array([0.0, 20e6, 66.2e6, 200e6, 2e9])
    v1, v2 = model.variances(freqs)
    assert np.all(np.diff(v1) > 0.0)
    assert np.all(np.diff(v2) < 0.0)
    assert v1[-1] == pytest.approx(1.0, abs=2e-3)
    assert np.all(v1 * v2 >= 1.0)


def test_sideband_sign_is_ignored():
    model = InputSqueezingModel.opo_lorentzian(0.35)
    np.testing.assert_array_equal(model.variances(-11e6), model.variances(11e6))


def test_tabulated_model_interpolates_and_holds_ends():
    model = InputSqueezingModel.tabulated([(0.0, 0.5, 2.5), (10e6, 0.7, 1.5)])
    v1, v2 = model.variances(np.array([5e6, 50e6]))
    assert v1[0] == pytest.approx(0.6)
    assert v2[0] == pytest.approx(2.0)
    assert v1[1] == pytest.approx(0.7)
    assert v2[1] == pytest.approx(1.5)


def test_tabulated_model_needs_ascending_frequencies():
    with pytest.raises(ValueError):
        InputSqueezingModel.tabulated([(10e6, 0.5, 2.5), (0.0, 0.7, 1.5)])


def test_tabulated_model_checks_uncertainty():
    with pytest.raises(HeisenbergViolationError):
        InputSqueezingModel.tabulated([(0.0, 0.5, 1.5)])


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "thermal"},
        {"kind": "opo_lorentzian", "pump_x": 1.0},
        {"kind": "opo_lorentzian", "pump_x": 0.3, "escape_purity": 0.0},
        {"kind": "constant", "v1_a": 1.0},
    ],
)
def test_invalid_models(kwargs):
    with pytest.raises(ValueError):
        InputSqueezingModel(**kwargs)
