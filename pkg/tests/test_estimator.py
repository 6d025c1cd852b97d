import math
from types import SimpleNamespace

import numpy as np
import pytest

from src.cavity.ring import Detuning, RingCavity, linewidth
from src.errors import FitConvergenceError, FitSpecError, UnidentifiableParameterError
from src.estimator.fit import (
    FitSpec,
    _central_jacobian,
    _difference_points,
    derive_parameters,
    fit,
    linewidth_agreement,
)
from src.estimator.parameters import ParameterTransform, default_bounds
from src.quadrature.spectrum import QuadratureSpectrum, spectrum
from src.quadrature.squeezing import InputSqueezingModel
from src.quadrature.transfer import DetectionModel
from src.synth.measurement import MeasurementConfig, synthesize_trace

FLOATS = ("sqrt_r1", "sqrt_r1r2r3", "omega_d_hz")
GUESS = {"sqrt_r1": 0.9977, "sqrt_r1r2r3": 0.9962, "omega_d_hz": 11.0e6, "eta_c": 0.7, "escape_purity": 0.9}


def _spec(values, floats=FLOATS, guess=None, **kwargs):
    if guess is None:
        guess = {name: GUESS.get(name, values[name]) for name in floats}
    fixed = {name: value for name, value in values.items() if name not in floats}
    return FitSpec(float_params=floats, fixed_params=fixed, initial_guess=guess, **kwargs)


def _power_values(values):
    converted = dict(values)
    converted["r1"] = converted.pop("sqrt_r1") ** 2
    converted["r1r2r3"] = converted.pop("sqrt_r1r2r3") ** 2
    return converted


def _model_parts(values):
    cavity = RingCavity.from_amplitudes(values["sqrt_r1"], values["sqrt_r1r2r3"], values["fsr_hz"])
    squeezing = InputSqueezingModel.opo_lorentzian(
        values["pump_x"], values["opo_linewidth_hz"], values["escape_purity"]
    )
    detection = DetectionModel(eta_c=values["eta_c"], eta_m=values["eta_m"])
    return cavity, Detuning(values["omega_d_hz"]), squeezing, detection


def _noiseless(values, grid):
    model = spectrum(*_model_parts(values), grid)
    scale = math.sqrt(2.0) / 10.0
    return QuadratureSpectrum(grid, model.v1, model.v2, scale * model.v1, scale * model.v2)


def _noisy(values, grid, seed):
    return synthesize_trace(*_model_parts(values), MeasurementConfig(seed=seed), grid)


def test_noiseless_fit_recovers_truth(true_values, grid):
    result = fit(_noiseless(true_values, grid), _spec(true_values))
    for name in FLOATS:
        assert result.estimates[name] == pytest.approx(true_values[name], rel=1e-6)
    assert result.converged
    assert result.tie
    assert result.branch == -1
    assert result.chi2 < 1e-6


def test_fixed_reflectivities_give_reference_linewidth(true_values, grid):
    result = fit(_noisy(true_values, grid, seed=3), _spec(true_values, floats=("omega_d_hz",)))
    assert result.gamma_hz == pytest.approx(845.85e3, rel=1e-3)
    assert result.gamma_sigma_hz == 0.0
    assert result.q_factor == pytest.approx(3.33e8, rel=2e-3)


def test_noisy_fit_is_consistent_with_truth(true_values, grid):
    result = fit(_noisy(true_values, grid, seed=1), _spec(true_values))
    true_gamma = linewidth(_model_parts(true_values)[0]).exact_hz
    assert result.gamma_sigma_hz > 0.0
    assert abs(result.gamma_hz - true_gamma) < 4 * result.gamma_sigma_hz
    assert 0.5 < result.chi2_reduced < 1.6
    assert result.covariance.shape == (3, 3)
    np.testing.assert_allclose(np.diag(result.correlation), 1.0)
    assert set(result.residual_frame().columns) == {
        "frequency_hz", "quadrature", "data", "model", "sigma", "weighted_residual"
    }


def test_symmetric_data_ties_and_prefers_negative_detuning(true_values, grid):
    result = fit(_noisy(true_values, grid, seed=2), _spec(true_values))
    assert set(result.branch_chi2) == {-1, 1}
    assert result.tie
    assert result.branch == -1
    assert result.estimates["omega_d_hz"] < 0.0
    assert result.branch_chi2[-1] == pytest.approx(result.branch_chi2[1], rel=1e-8)


def test_reflectivity_uncertainty_propagates_to_linewidth(true_values):
    spec = _spec(true_values)
    estimates = {name: true_values[name] for name in FLOATS}
    zero = derive_parameters(estimates, np.zeros((3, 3)), spec)
    assert zero.gamma_sigma_hz == 0.0
    assert zero.q_sigma == 0.0

    covariance = np.diag([0.0, 0.00016 ** 2, 0.0])
    derived = derive_parameters(estimates, covariance, spec)
    assert derived.gamma_sigma_hz == pytest.approx(36e3, rel=0.25)
    assert derived.gamma_sigma_hz == pytest.approx(36.45e3, rel=2e-3)
    assert derived.q_sigma == pytest.approx(derived.q_factor / derived.gamma_hz * derived.gamma_sigma_hz)
    assert derived.finesse == pytest.approx(843, rel=1e-3)


def test_linewidth_falls_as_round_trip_product_rises(true_values):
    spec = _spec(true_values)
    estimates = {name: true_values[name] for name in FLOATS}
    higher = dict(estimates, sqrt_r1r2r3=estimates["sqrt_r1r2r3"] + 1e-4)
    base = derive_parameters(estimates, np.zeros((3, 3)), spec)
    raised = derive_parameters(higher, np.zeros((3, 3)), spec)
    assert raised.gamma_hz < base.gamma_hz


def test_power_coordinates_give_the_same_linewidth_uncertainty(true_values):
    amplitude_spec = _spec(true_values)
    power_values = _power_values(true_values)
    power_spec = _spec(
        power_values,
        floats=("r1", "r1r2r3", "omega_d_hz"),
        guess={"r1": 0.9977 ** 2, "r1r2r3": 0.9962 ** 2, "omega_d_hz": 11.0e6},
        coordinates="power",
    )
    s = true_values["sqrt_r1r2r3"]
    amplitude = derive_parameters(
        {name: true_values[name] for name in FLOATS}, np.diag([0.0, 0.00016 ** 2, 0.0]), amplitude_spec
    )
    power = derive_parameters(
        {name: power_values[name] for name in ("r1", "r1r2r3", "omega_d_hz")},
        np.diag([0.0, (2 * s * 0.00016) ** 2, 0.0]),
        power_spec,
    )
    assert power.gamma_hz == pytest.approx(amplitude.gamma_hz, rel=1e-12)
    assert power.gamma_sigma_hz == pytest.approx(amplitude.gamma_sigma_hz, rel=1e-9)


def test_power_and_amplitude_fits_agree(true_values, grid):
    trace = _noisy(true_values, grid, seed=5)
    amplitude = fit(trace, _spec(true_values))
    power = fit(
        trace,
        _spec(
            _power_values(true_values),
            floats=("r1", "r1r2r3", "omega_d_hz"),
            guess={"r1": 0.9977 ** 2, "r1r2r3": 0.9962 ** 2, "omega_d_hz": 11.0e6},
            coordinates="power",
        ),
    )
    assert power.chi2 == pytest.approx(amplitude.chi2, rel=1e-7)
    assert power.estimates["r1"] == pytest.approx(amplitude.estimates["sqrt_r1"] ** 2, rel=1e-6)
    assert power.gamma_hz == pytest.approx(amplitude.gamma_hz, rel=1e-4)
    assert power.gamma_sigma_hz == pytest.approx(amplitude.gamma_sigma_hz, rel=1e-2)


def test_vacuum_trace_is_unidentifiable(true_values, grid):
    ones = np.ones_like(grid)
    trace = QuadratureSpectrum(grid, ones, ones, 0.14 * ones, 0.14 * ones)
    with pytest.raises(UnidentifiableParameterError):
        fit(trace, _spec(true_values))


def test_efficiency_and_escape_purity_are_degenerate(true_values, grid):
    spec = _spec(true_values, floats=("sqrt_r1r2r3", "eta_c", "escape_purity"))
    with pytest.raises(UnidentifiableParameterError) as excinfo:
        fit(_noisy(true_values, grid, seed=6), spec)
    direction = dict(excinfo.value.direction)
    assert abs(direction["eta_c"]) > 0.1
    assert abs(direction["escape_purity"]) > 0.1
    assert abs(direction["sqrt_r1r2r3"]) < 0.05


def test_masked_points_are_left_out(true_values, grid, caplog):
    spec = _spec(true_values, masks=[(13.0e6, 13.6e6)])
    result = fit(_noisy(true_values, grid, seed=7), spec)
    assert not np.any((result.frequencies_hz >= 13.0e6) & (result.frequencies_hz <= 13.6e6))
    assert result.dof == 2 * (151 - 7) - 3
    assert result.masks == ((13.0e6, 13.6e6),)
    assert "Masked 7" in caplog.text


def test_single_quadrature_fit(true_values, grid):
    result = fit(_noisy(true_values, grid, seed=8), _spec(true_values, quadratures=(1,)))
    assert set(result.quadrature_labels.tolist()) == {1}
    assert result.dof == 151 - 3


def test_unit_weights_allow_traces_without_sigmas(true_values, grid):
    trace = _noiseless(true_values, grid).without_sigmas()
    with pytest.raises(FitSpecError):
        fit(trace, _spec(true_values))
    result = fit(trace, _spec(true_values, unit_weights=True))
    assert result.estimates["sqrt_r1r2r3"] == pytest.approx(true_values["sqrt_r1r2r3"], rel=1e-6)


def test_too_few_points(true_values):
    freqs = np.array([11.0e6, 11.1e6])
    trace = QuadratureSpectrum(freqs, np.array([1.2, 1.5]), np.array([2.0, 2.2]), np.full(2, 0.1), np.full(2, 0.1))
    with pytest.raises(FitSpecError):
        fit(trace, _spec(true_values))


def test_iteration_cap_raises_convergence_error(true_values, grid):
    guess = {"sqrt_r1": 0.9970, "sqrt_r1r2r3": 0.9955, "omega_d_hz": 10.5e6}
    with pytest.raises(FitConvergenceError) as excinfo:
        fit(_noisy(true_values, grid, seed=9), _spec(true_values, guess=guess, max_iter=1))
    assert excinfo.value.n_evaluations is not None


def test_reference_linewidth_agreement(true_values, grid):
    spec = _spec(true_values, reference_linewidth_hz=856e3, reference_linewidth_sigma_hz=34e3)
    result = fit(_noisy(true_values, grid, seed=10), spec)
    expected = (result.gamma_hz - 856e3) / math.hypot(result.gamma_sigma_hz, 34e3)
    assert result.linewidth_z == pytest.approx(expected)


def test_linewidth_agreement_score():
    assert linewidth_agreement(844e3, 40e3, 856e3, 34e3) == pytest.approx(-0.2286, abs=1e-3)
    with pytest.raises(ValueError):
        linewidth_agreement(844e3, 0.0, 856e3, 0.0)


def _bad_specs(values):
    fixed = {name: value for name, value in values.items() if name not in FLOATS}
    guess = {name: GUESS[name] for name in FLOATS}
    return [
        dict(float_params=FLOATS + ("bogus",), fixed_params=fixed, initial_guess=guess),
        dict(float_params=FLOATS, fixed_params=dict(fixed, sqrt_r1=0.99), initial_guess=guess),
        dict(float_params=FLOATS, fixed_params={k: v for k, v in fixed.items() if k != "eta_m"}, initial_guess=guess),
        dict(float_params=FLOATS, fixed_params=fixed, initial_guess=dict(guess, sqrt_r1r2r3=0.999)),
        dict(float_params=FLOATS, fixed_params=fixed, initial_guess=guess, bounds={"sqrt_r1": (0.998, 0.999)}),
        dict(float_params=FLOATS, fixed_params=fixed, initial_guess=guess, quadratures=(3,)),
        dict(float_params=FLOATS, fixed_params=fixed, initial_guess=guess, masks=[(2e6, 1e6)]),
        dict(float_params=(), fixed_params=values, initial_guess={}),
    ]


@pytest.mark.parametrize("case", range(8))
def test_invalid_fit_specs(true_values, case):
    with pytest.raises(FitSpecError):
        FitSpec(**_bad_specs(true_values)[case])


def test_transform_round_trips_inside_bounds():
    names = ["sqrt_r1", "sqrt_r1r2r3", "omega_d_hz"]
    transform = ParameterTransform(names, default_bounds(names), {}, "amplitude")
    values = {"sqrt_r1": 0.99783, "sqrt_r1r2r3": 0.99628, "omega_d_hz": 11.098e6}
    decoded = transform.decode(transform.encode(values))
    for name in names:
        assert decoded[name] == pytest.approx(values[name], rel=1e-12)
    wild = transform.decode([30.0, 30.0, 0.0])
    assert wild["sqrt_r1r2r3"] <= wild["sqrt_r1"]


@pytest.mark.slow
def test_linewidth_recovery_over_many_seeds(true_values, grid):
    true_gamma = linewidth(_model_parts(true_values)[0]).exact_hz
    spec = _spec(true_values)
    z = []
    sigmas = []
    for seed in range(200):
        result = fit(_noisy(true_values, grid, seed=1000 + seed), spec)
        z.append((result.gamma_hz - true_gamma) / result.gamma_sigma_hz)
        sigmas.append(result.gamma_sigma_hz)
    z = np.abs(np.asarray(z))
    assert np.count_nonzero(z[:100] <= 2.0) >= 90
    assert 0.60 <= np.mean(z <= 1.0) <= 0.76
    assert 20e3 <= np.median(sigmas) <= 80e3


@pytest.mark.parametrize(
    "x, lower, upper, expected",
    [
        (0.5, 0.0, 1.0, (0.51, 0.49)),
        (0.995, 0.0, 1.0, (0.995, 0.985)),
        (0.005, 0.0, 1.0, (0.015, 0.005)),
        (0.5, 0.5, 0.502, (0.502, 0.5)),
    ],
)
def test_difference_points_stay_inside_bounds(x, lower, upper, expected):
    ahead, behind = _difference_points(x, 0.01, lower, upper)
    assert (ahead, behind) == pytest.approx(expected)
    assert lower <= behind < ahead <= upper


class DummyProblem:
    """Linear residuals that record every parameter set they are evaluated at."""

    def __init__(self):
        self.spec = SimpleNamespace(coordinates="amplitude")
        self.seen = []

    def weighted_residuals(self, values):
        self.seen.append(dict(values))
        return np.array([values["sqrt_r1"] + 2.0 * values["sqrt_r1r2r3"]])


def test_jacobian_never_steps_the_mirror_below_the_product():
    problem = DummyProblem()
    values = {"sqrt_r1": 0.99628 + 1e-9, "sqrt_r1r2r3": 0.99628, "omega_d_hz": -11e6}
    jacobian = _central_jacobian(problem, ["sqrt_r1", "sqrt_r1r2r3"], values)
    assert all(seen["sqrt_r1r2r3"] <= seen["sqrt_r1"] for seen in problem.seen)
    np.testing.assert_allclose(jacobian, [[1.0, 2.0]], rtol=1e-6)
