import math

import numpy as np
import pytest

from src.cavity.ring import Detuning, RingCavity
from src.errors import NonphysicalTransferError
from src.quadrature.spectrum import spectrum
from src.quadrature.transfer import (
    DetectionModel,
    TwoPhotonTransfer,
    reflect_variances,
    reflect_variances_split,
    transfer_at,
)


def _manual(a_plus, a_minus, phi_plus=0.0, r_m=0.0):
    return TwoPhotonTransfer(
        phi_minus=0.0, phi_plus=phi_plus, a_plus=a_plus, a_minus=a_minus,
        l_plus=0.0, l_minus=0.0, r_m=r_m,
    )


def _random_cavity(rng):
    return RingCavity(
        r1_sq=rng.uniform(0.5, 1.0),
        r2r3_sq=rng.uniform(0.5, 1.0),
        fsr_hz=rng.uniform(100e6, 2e9),
    )


def _random_detection(rng):
    weights = rng.dirichlet([1.0, 1.0, 1.0])
    return DetectionModel(eta_c=weights[0], eta_m=weights[1], eta_l=weights[2])


def test_vacuum_in_gives_vacuum_out_for_random_configurations():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(10_000):
        cavity = _random_cavity(rng)
        detuning = Detuning(rng.uniform(-2, 2) * cavity.fsr_hz)
        omega = rng.uniform(-1, 1) * cavity.fsr_hz
        transfer = transfer_at(cavity, detuning, omega)
        v1, v2 = reflect_variances(transfer, _random_detection(rng), 1.0, 1.0)
        worst = max(worst, abs(v1 - 1.0), abs(v2 - 1.0))
    assert worst <= 1e-12


def test_no_detuning_means_no_rotation(measured_cavity):
    omega = np.array([1e5, 1e6, 5e6])
    transfer = transfer_at(measured_cavity, Detuning(0.0), omega)
    np.testing.assert_allclose(transfer.phi_plus, 0.0, atol=1e-12)
    np.testing.assert_allclose(transfer.a_minus, 0.0, atol=1e-12)


def test_perfect_input_mirror_passes_input_through():
    cavity = RingCavity(r1_sq=1.0, r2r3_sq=0.95, fsr_hz=713e6)
    transfer = transfer_at(cavity, Detuning(-11e6), np.array([1e6, 11e6, 20e6]))
    np.testing.assert_allclose(transfer.a_plus, 1.0, atol=1e-12)
    np.testing.assert_allclose(transfer.a_minus, 0.0, atol=1e-12)
    np.testing.assert_allclose(transfer.l_plus, 0.0, atol=1e-6)


def test_resonant_upper_sideband_creates_asymmetry(measured_cavity, measured_detuning):
    transfer = transfer_at(measured_cavity, measured_detuning, 11.098e6)
    assert abs(transfer.a_minus) > 0.3
    assert transfer.passivity <= 1.0


def test_impedance_matched_identity():
    transfer = _manual(0.5, 0.5)
    v1, v2 = reflect_variances(transfer, DetectionModel.ideal(), 0.2512, 10.0)
    expected = (0.2512 + 10.0) / 4 + 0.5
    assert v1 == pytest.approx(expected, rel=1e-12)
    assert v2 == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(3.063, abs=1e-3)


def test_unrotated_cavity_preserves_minimum_uncertainty():
    v1, v2 = reflect_variances(_manual(1.0, 0.0), DetectionModel.ideal(), 0.25, 4.0)
    assert v1 == pytest.approx(0.25)
    assert v2 == pytest.approx(4.0)
    assert v1 * v2 == pytest.approx(1.0)


def test_quarter_turn_swaps_quadratures():
    transfer = _manual(1.0, 0.0, phi_plus=math.pi / 2)
    v1, v2 = reflect_variances(transfer, DetectionModel.ideal(), 0.25, 4.0)
    assert v1 == pytest.approx(4.0)
    assert v2 == pytest.approx(0.25)


def test_output_stays_between_input_and_vacuum():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        cavity = _random_cavity(rng)
        transfer = transfer_at(cavity, Detuning(rng.uniform(-0.5, 0.5) * cavity.fsr_hz), rng.uniform(0, 0.5) * cavity.fsr_hz)
        v1_a = rng.uniform(0.05, 1.0)
        v2_a = rng.uniform(1.0, 3.0) / v1_a
        v1, v2 = reflect_variances(transfer, _random_detection(rng), v1_a, v2_a)
        low = min(v1_a, v2_a, 1.0) - 1e-12
        high = max(v1_a, v2_a, 1.0) + 1e-12
        assert low <= v1 <= high
        assert low <= v2 <= high


def test_detuning_sign_does_not_change_the_spectrum(measured_cavity, opo_squeezing, detection, grid):
    below = spectrum(measured_cavity, Detuning(-11.098e6), opo_squeezing, detection, grid)
    above = spectrum(measured_cavity, Detuning(11.098e6), opo_squeezing, detection, grid)
    np.testing.assert_allclose(below.v1, above.v1, rtol=1e-10)
    np.testing.assert_allclose(below.v2, above.v2, rtol=1e-10)


def test_split_inputs_reduce_to_shared_input(measured_cavity, measured_detuning, detection):
    transfer = transfer_at(measured_cavity, measured_detuning, np.array([5e6, 11.1e6]))
    shared = reflect_variances(transfer, detection, 0.4, 3.5)
    split = reflect_variances_split(transfer, detection, (0.4, 3.5), (0.4, 3.5))
    np.testing.assert_allclose(shared, split)


def test_mismatched_input_matters_only_with_mismatch_efficiency(measured_cavity, measured_detuning):
    transfer = transfer_at(measured_cavity, measured_detuning, 11.1e6)
    no_mismatch = DetectionModel(eta_c=0.8, eta_m=0.0)
    a = reflect_variances_split(transfer, no_mismatch, (0.4, 3.5), (1.0, 1.0))
    b = reflect_variances_split(transfer, no_mismatch, (0.4, 3.5), (0.4, 3.5))
    assert a == pytest.approx(b)

    with_mismatch = DetectionModel(eta_c=0.6, eta_m=0.2)
    c = reflect_variances_split(transfer, with_mismatch, (0.4, 3.5), (1.0, 1.0))
    d = reflect_variances_split(transfer, with_mismatch, (0.4, 3.5), (0.4, 3.5))
    assert c[0] > d[0]


def test_active_transfer_is_rejected():
    with pytest.raises(NonphysicalTransferError):
        reflect_variances(_manual(1.0, 0.5), DetectionModel.ideal(), 1.0, 1.0)


def test_non_positive_input_variance_is_rejected():
    with pytest.raises(ValueError):
        reflect_variances(_manual(0.5, 0.5), DetectionModel.ideal(), 0.0, 1.0)


def test_cavity_matrix_entries_match_weights(measured_cavity, measured_detuning):
    transfer = transfer_at(measured_cavity, measured_detuning, 11.1e6)
    matrix = transfer.cavity_matrix
    loss = transfer.loss_matrix
    v1, v2 = reflect_variances(transfer, DetectionModel.ideal(), 0.5, 2.0)
    direct = np.abs(matrix[0, 0]) ** 2 * 0.5 + np.abs(matrix[0, 1]) ** 2 * 2.0 + np.sum(np.abs(loss[0]) ** 2)
    assert v1 == pytest.approx(direct, rel=1e-10)


def test_detection_budget():
    detection = DetectionModel.from_budget(0.90, 0.85)
    assert detection.eta_c == pytest.approx(0.765)
    assert detection.eta_m == 0.0
    assert detection.eta_l == pytest.approx(0.235)


def test_detection_efficiencies_are_renormalised():
    detection = DetectionModel(eta_c=0.5, eta_m=0.3, eta_l=0.4)
    assert detection.eta_c + detection.eta_m + detection.eta_l == pytest.approx(1.0)
    assert detection.eta_c == pytest.approx(0.5 / 1.2)


@pytest.mark.parametrize("eta_c", [-0.1, 1.5, float("nan")])
def test_invalid_detection_efficiency(eta_c):
    with pytest.raises(ValueError):
        DetectionModel(eta_c=eta_c)
