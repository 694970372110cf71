import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tomography import linalg, measurement, qcore
from tomography.exceptions import DimensionException, DomainException
from tomography.measurement import ShotRecord
from tomography.qcore import PauliString


def all_strings(n):
    return [PauliString(indices) for indices in itertools.product(range(4), repeat=n)]


def basis_state(n, j=0):
    U = np.zeros((2 ** n, 1), dtype=complex)
    U[j, 0] = 1
    return U


def test_build_setting_sigma_z_plus_projector():
    setting = measurement.build_setting(PauliString((3,)))
    assert_allclose(setting.projector(0), [[1, 0], [0, 0]])


def test_build_setting_identity_signs():
    assert_allclose(measurement.build_setting(PauliString((0,))).signs, [1, 1])


def test_build_setting_product_signs():
    assert_allclose(measurement.build_setting(PauliString((1, 2))).signs, [1, -1, -1, 1])


@pytest.mark.parametrize('n', [1, 2])
def test_projectors_resolve_pauli_string(n):
    for s in all_strings(n):
        setting = measurement.build_setting(s)
        projectors = [setting.projector(j) for j in range(s.dim)]
        assert_allclose(sum(projectors), np.eye(s.dim), atol=1e-12)
        signed = sum(alpha * E for alpha, E in zip(setting.signs, projectors))
        assert_allclose(signed, qcore.pauli_dense(s), atol=1e-12)


def test_probabilities_of_maximally_mixed_state():
    U = np.eye(8) / np.sqrt(8)
    p = measurement.povm_probabilities(PauliString((1, 2, 3)), U)
    assert_allclose(p, np.full(8, 1 / 8), atol=1e-12)


def test_probabilities_of_eigenstate():
    p = measurement.povm_probabilities(PauliString((3, 3, 3)), basis_state(3))
    assert_allclose(p, np.eye(8)[0], atol=1e-12)


def test_probabilities_match_dense_projectors(rng):
    U, rho = qcore.random_low_rank_state(3, 2, rng)
    for s in qcore.random_pauli_strings(3, 20, rng):
        setting = measurement.build_setting(s)
        dense = [np.vdot(setting.projector(j), rho.matrix).real for j in range(8)]
        assert np.max(np.abs(measurement.povm_probabilities(setting, U) - dense)) <= 1e-12


def test_probabilities_dimension_mismatch():
    with pytest.raises(DimensionException):
        measurement.povm_probabilities(PauliString((1, 1)), np.ones((8, 1)))


@pytest.mark.parametrize('n', [1, 2, 3])
def test_exact_observable_identity(n, rng):
    U, rho = qcore.random_low_rank_state(n, 1, rng)
    for s in all_strings(n):
        expected = np.vdot(qcore.pauli_dense(s), rho.matrix).real
        assert abs(measurement.true_observable(s, U) - expected) <= 1e-12


def test_true_observable_trivial_cases(rng):
    U, _ = qcore.random_low_rank_state(2, 2, rng)
    assert measurement.true_observable(PauliString((0, 0)), U) == pytest.approx(1.0, abs=1e-12)
    assert measurement.true_observable(PauliString((3, 3)), basis_state(2)) == pytest.approx(1.0, abs=1e-12)


def test_sample_counts_point_mass(rng):
    record = measurement.sample_counts([1, 0, 0, 0], 50, rng)
    assert record.counts.tolist() == [50, 0, 0, 0]


def test_sample_counts_uniform_frequencies(rng):
    record = measurement.sample_counts(np.full(4, 0.25), 10 ** 6, rng)
    assert_allclose(record.frequencies, 0.25, atol=0.002)


def test_sample_counts_deterministic():
    p = [0.1, 0.2, 0.3, 0.4]
    first = measurement.sample_counts(p, 1000, np.random.default_rng(5))
    second = measurement.sample_counts(p, 1000, np.random.default_rng(5))
    assert np.array_equal(first.counts, second.counts)


def test_sample_counts_renormalizes_and_clips(rng):
    record = measurement.sample_counts([0.5, 0.5 + 1e-10, -1e-12], 100, rng)
    assert record.counts.sum() == 100
    assert record.counts[2] == 0


def test_sample_counts_rejects_negative_probability(rng):
    with pytest.raises(DomainException):
        measurement.sample_counts([1.1, -0.1], 10, rng)


class _TopOfUnitInterval:
    """ a generator whose every uniform draw is the largest double below 1 """

    def random(self, size):
        return np.full(size, np.nextafter(1.0, 0.0))


def test_sample_counts_never_draws_trailing_zero_outcome(rng):
    record = measurement.sample_counts([0.3, 0.7, 0.0], 10 ** 5, rng)
    assert record.counts[2] == 0


@pytest.mark.parametrize('p', [[0.3, 0.7, 0.0], [0.1] * 10 + [0.0, 0.0], [0.0, 0.5, 0.0, 0.5, 0.0]])
def test_draws_at_top_of_unit_interval_stay_in_support(p):
    last = int(np.flatnonzero(p)[-1])
    record = measurement.sample_counts(p, 7, _TopOfUnitInterval())
    assert record.counts[last] == 7
    table = measurement.sample_count_table(p, 7, 3, _TopOfUnitInterval())
    assert np.all(table[:, last] == 7)


def test_sample_count_table_follows_the_same_law(rng):
    p = np.array([0.7, 0.1, 0.2, 0.0])
    table = measurement.sample_count_table(p, 40, 5000, rng)
    assert table.shape == (5000, 4)
    assert np.all(table.sum(axis=1) == 40)
    assert np.all(table[:, 3] == 0)
    assert_allclose(table.mean(axis=0) / 40, p, atol=0.01)


def test_shot_record_validation():
    with pytest.raises(DomainException):
        ShotRecord(0, 5, [1, 2])
    with pytest.raises(DomainException):
        ShotRecord(0, 0, [0, 0]).frequencies


def test_empirical_observable_all_plus_outcome():
    setting = measurement.build_setting(PauliString((1, 2)))
    record = ShotRecord(0, 30, [30, 0, 0, 0])
    assert measurement.empirical_observable(record, setting) == 1.0


def test_empirical_observable_plug_in(rng):
    U, _ = qcore.random_low_rank_state(2, 1, rng)
    setting = measurement.build_setting(PauliString((2, 1)))
    p = measurement.povm_probabilities(setting, U)
    # f = M p exactly, counts rounded only in the record bookkeeping
    M = 10 ** 12
    counts = np.round(p * M).astype(np.int64)
    record = ShotRecord(0, int(counts.sum()), counts)
    assert measurement.empirical_observable(record, setting) == pytest.approx(
        measurement.true_observable(setting, U), abs=1e-9)


def test_empirical_observable_unbiased(rng):
    U, _ = qcore.random_low_rank_state(2, 1, rng)
    setting = measurement.build_setting(PauliString((1, 3)))
    p = measurement.povm_probabilities(setting, U)
    y = setting.signs @ p
    table = measurement.sample_count_table(p, 10, 10 ** 4, rng)
    y_hat = table @ setting.signs / 10
    sigma = np.sqrt((1 - y ** 2) / 10 / 10 ** 4)
    assert abs(y_hat.mean() - y) <= 3 * sigma + 1e-12


def test_empirical_observable_rejects_zero_shots():
    with pytest.raises(DomainException):
        measurement.empirical_observable(ShotRecord(0, 0, [0, 0]), PauliString((3,)))


def test_measure_ensemble_error_vector(rng):
    U, _ = qcore.random_low_rank_state(2, 1, rng)
    strings = qcore.random_pauli_strings(2, 30, rng)
    observables, records = measurement.measure_ensemble(strings, U, 10 ** 6, rng)
    assert_allclose(observables.e, observables.y_hat - observables.y)
    assert np.max(np.abs(observables.e)) <= 0.01
    assert len(records) == 30 and all(record.shots == 10 ** 6 for record in records)


def test_measure_ensemble_mean_error_near_zero(rng):
    U, _ = qcore.random_low_rank_state(3, 1, rng)
    strings = qcore.random_pauli_strings(3, 100, rng)
    observables, _ = measurement.measure_ensemble(strings, U, 10, rng)
    assert abs(observables.e.mean()) <= 3 * np.sqrt(2 / (10 * 100))


def test_simulate_ensemble_bookkeeping(rng):
    U, _ = qcore.random_low_rank_state(2, 1, rng)
    strings = qcore.random_pauli_strings(2, 12, rng)
    ensemble = measurement.simulate_ensemble(strings, U, 7, rng)
    assert ensemble.K == 12
    assert ensemble.copies_consumed == 84
    assert ensemble.strings == strings
    p_hat = ensemble.empirical_probabilities()
    assert p_hat.shape == (12, 4)
    assert_allclose(p_hat.sum(axis=1), 1.0)
    assert_allclose(ensemble.probabilities.sum(axis=1), 1.0, atol=1e-12)


def test_simulate_ensemble_rejects_zero_shots(rng):
    with pytest.raises(DomainException):
        measurement.simulate_ensemble([PauliString((1,))], basis_state(1), 0, rng)


def test_operator_error_norm_trivial_cases():
    strings = [PauliString((1, 2)), PauliString((3, 0))]
    assert measurement.operator_error_norm(strings, [0.0, 0.0]) == 0.0
    assert measurement.operator_error_norm([PauliString((2, 1))], [-0.3]) == pytest.approx(0.3, rel=1e-10)


def test_operator_error_norm_matches_dense(rng):
    strings = qcore.random_pauli_strings(3, 40, np.random.default_rng(17))
    e = rng.standard_normal(40) * 0.1
    dense = sum(e_k * qcore.pauli_dense(s) for e_k, s in zip(e, strings)) / 40
    expected = np.max(np.abs(linalg.hermitian_eig(dense).eigenvalues))
    assert measurement.operator_error_norm(strings, e) == pytest.approx(expected, rel=1e-8)


def test_operator_error_norm_length_mismatch():
    with pytest.raises(DimensionException):
        measurement.operator_error_norm([PauliString((1,))], [0.1, 0.2])


def _median_operator_norm(K, M, trials=50):
    values = []
    for trial in range(trials):
        rng = np.random.default_rng([K, M, trial])
        truth, _ = qcore.random_low_rank_state(4, 1, rng)
        strings = qcore.random_pauli_strings(4, K, rng)
        ensemble = measurement.simulate_ensemble(strings, truth, M, rng)
        values.append(measurement.operator_error_norm(strings, ensemble.observables.e))
    return np.median(values)


def test_operator_error_norm_shrinks_with_copies():
    base = _median_operator_norm(500, 50)
    for K, M in ((1000, 50), (500, 100)):
        ratio = _median_operator_norm(K, M) / base
        assert 1 / np.sqrt(2) - 0.15 <= ratio <= 1 / np.sqrt(2) + 0.15
