import itertools

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from numpy.testing import assert_allclose

from tomography import linalg, qcore
from tomography.exceptions import DimensionException, DomainException
from tomography.qcore import DensityMatrix, FactorMatrix, PauliString

pauli_strings = st.lists(st.integers(min_value=0, max_value=3), min_size=1, max_size=5) \
    .map(lambda indices: PauliString(tuple(indices)))

# draws (seed, D, r, spread)
factor_pairs = st.tuples(st.integers(min_value=0, max_value=2 ** 32 - 1), st.sampled_from([2, 4, 8, 16]),
                         st.integers(min_value=1, max_value=3), st.sampled_from([1e-3, 0.1, 1.0, 10.0]))

_OUTER_GAP = 2 * (np.sqrt(2) - 1)


def test_pauli_single():
    assert_allclose(qcore.pauli_single(0), [[1, 0], [0, 1]])
    assert_allclose(qcore.pauli_single(2), [[0, 1j], [-1j, 0]])
    assert_allclose(qcore.pauli_single(3), [[1, 0], [0, -1]])


def test_pauli_single_out_of_range():
    with pytest.raises(DomainException):
        qcore.pauli_single(4)


@pytest.mark.parametrize('indices', [(4,), (-1, 0), ()])
def test_pauli_string_validation(indices):
    with pytest.raises((DomainException, DimensionException)):
        PauliString(indices)


def test_pauli_string_labels():
    s = PauliString.from_label('XYZI')
    assert s.indices == (1, 2, 3, 0)
    assert s.label == 'XYZI'
    assert str(s) == 'XYZI'
    with pytest.raises(DomainException):
        PauliString.from_label('XQ')


@given(pauli_strings)
def test_flat_index_round_trip(s):
    assert 1 <= s.flat_index <= 4 ** s.n
    assert PauliString.from_flat_index(s.flat_index, s.n) == s


def test_flat_index_is_big_endian():
    assert PauliString((0, 0)).flat_index == 1
    assert PauliString((0, 1)).flat_index == 2
    assert PauliString((1, 0)).flat_index == 5
    assert PauliString((3, 3)).flat_index == 16


def test_pauli_dense_diagonal():
    assert_allclose(qcore.pauli_dense(PauliString((3, 3))), np.diag([1, -1, -1, 1]))


def test_pauli_dense_identity():
    assert_allclose(qcore.pauli_dense(PauliString((0, 0, 0))), np.eye(8))


def test_pauli_dense_orthogonality():
    strings = [PauliString(indices) for indices in itertools.product(range(4), repeat=2)]
    for a, b in itertools.product(strings, repeat=2):
        overlap = np.trace(qcore.pauli_dense(a) @ qcore.pauli_dense(b))
        assert overlap == pytest.approx(4.0 if a == b else 0.0, abs=1e-12)


def test_pauli_dense_size_cap():
    with pytest.raises(DomainException):
        qcore.pauli_dense(PauliString((0,) * 13))


def test_apply_identity_string(rng):
    B = rng.standard_normal((8, 3)) + 1j * rng.standard_normal((8, 3))
    assert_allclose(qcore.apply_pauli_string(PauliString((0, 0, 0)), B), B)


@given(pauli_strings, st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_apply_matches_dense_and_squares_to_identity(s, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((s.dim, 2)) + 1j * rng.standard_normal((s.dim, 2))
    applied = qcore.apply_pauli_string(s, B)
    assert np.max(np.abs(applied - qcore.pauli_dense(s) @ B)) <= 1e-12
    assert_allclose(qcore.apply_pauli_string(s, applied), B, atol=1e-12)


def test_apply_vector(rng):
    s = PauliString((1, 2))
    b = rng.standard_normal(4) + 0j
    assert_allclose(qcore.apply_pauli_string(s, b), qcore.pauli_dense(s) @ b, atol=1e-12)


def test_apply_dimension_mismatch():
    with pytest.raises(DimensionException):
        qcore.apply_pauli_string(PauliString((1, 1)), np.ones((8, 1)))


@pytest.mark.parametrize('n, r', [(1, 1), (3, 2), (4, 1), (2, 4)])
def test_random_low_rank_state_is_physical(n, r, rng):
    U, rho = qcore.random_low_rank_state(n, r, rng)
    assert U.matrix.shape == (2 ** n, r)
    assert rho.trace == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(rho.matrix - rho.matrix.conj().T) <= 1e-12
    assert np.linalg.eigvalsh(rho.matrix).min() >= -1e-12


def test_random_pure_state_purity(rng):
    _, rho = qcore.random_low_rank_state(4, 1, rng)
    assert qcore.purity(rho) == pytest.approx(1.0, abs=1e-12)


def test_random_low_rank_state_rank():
    _, rho = qcore.random_low_rank_state(3, 2, np.random.default_rng(7))
    assert np.count_nonzero(np.linalg.eigvalsh(rho.matrix) > 1e-12) == 2


def test_random_low_rank_state_rank_too_large(rng):
    with pytest.raises(DomainException):
        qcore.random_low_rank_state(1, 3, rng)


def test_random_pauli_strings_uniform():
    strings = qcore.random_pauli_strings(1, 100_000, np.random.default_rng(3))
    counts = np.bincount([s.indices[0] for s in strings], minlength=4)
    assert_allclose(counts / len(strings), 0.25, atol=0.01)


def test_random_pauli_strings_deterministic():
    first = qcore.random_pauli_strings(3, 50, np.random.default_rng(11))
    second = qcore.random_pauli_strings(3, 50, np.random.default_rng(11))
    assert first == second


def test_random_pauli_strings_single():
    (s,) = qcore.random_pauli_strings(1, 1, np.random.default_rng(0))
    assert s.n == 1 and s.indices[0] in range(4)


def test_dist_self_and_rotation(rng, random_factor, random_unitary):
    X = random_factor(8, 2, rng)
    assert qcore.dist(X, X) <= 1e-10
    assert qcore.dist(X @ random_unitary(2, rng), X) <= 1e-10


def test_dist_is_minimum_over_sampled_unitaries(rng, random_factor, random_unitary):
    U = random_factor(8, 2, rng)
    X = random_factor(8, 2, rng)
    sampled = min(np.linalg.norm(U - X @ random_unitary(2, rng)) for _ in range(5000))
    assert qcore.dist(U, X) <= sampled + 1e-10


def _factor_pair(seed, dim, rank, spread, random_factor, random_unitary):
    """ X and a factor U at a chosen distance from a rotation of X """
    rng = np.random.default_rng(seed)
    rank = min(rank, dim)
    X = random_factor(dim, rank, rng)
    U = X @ random_unitary(rank, rng) + spread * random_factor(dim, rank, rng)
    return U, X


@given(pair=factor_pairs)
def test_dist_is_bounded_by_outer_product_gap(pair, random_factor, random_unitary):
    U, X = _factor_pair(*pair, random_factor, random_unitary)
    assume(qcore.sigma_r(X) > 1e-6)
    gap = np.linalg.norm(U @ U.conj().T - X @ X.conj().T) ** 2
    assert qcore.dist(U, X) ** 2 <= gap / (_OUTER_GAP * qcore.sigma_r(X) ** 2) * (1 + 1e-10) + 1e-12


@given(pair=factor_pairs)
def test_aligned_difference_is_bounded_by_outer_product_gap(pair, random_factor, random_unitary):
    U, X = _factor_pair(*pair, random_factor, random_unitary)
    Y = X @ linalg.procrustes_align(U, X)
    left = np.linalg.norm((U - Y) @ U.conj().T) ** 2
    gap = np.linalg.norm(U @ U.conj().T - Y @ Y.conj().T) ** 2
    assert left <= gap / _OUTER_GAP * (1 + 1e-10) + 1e-12


def test_dist_shape_mismatch():
    with pytest.raises(DimensionException):
        qcore.dist(np.ones((4, 2)), np.ones((8, 2)))


def test_recovery_error(rng, random_factor):
    U, rho = qcore.random_low_rank_state(3, 2, rng)
    assert qcore.recovery_error(U, rho) <= 1e-12
    assert qcore.recovery_error(np.zeros((8, 2)), rho) == pytest.approx(np.linalg.norm(rho.matrix))

    V = random_factor(8, 2, rng)
    difference = V @ V.conj().T - rho.matrix
    expected = np.sqrt(sum(abs(difference[i, j]) ** 2 for i in range(8) for j in range(8)))
    assert qcore.recovery_error(V, rho) == pytest.approx(expected, rel=1e-12)


def test_trace_distance_between_orthogonal_pure_states():
    zero = np.array([[1], [0]], dtype=complex)
    one = np.array([[0], [1]], dtype=complex)
    assert qcore.trace_distance(zero, qcore.hermitian_outer(one)) == pytest.approx(1.0)
    assert qcore.trace_distance(zero, qcore.hermitian_outer(zero)) == pytest.approx(0.0, abs=1e-15)


def test_trace_distance_below_frobenius_bound(rng):
    U, _ = qcore.random_low_rank_state(3, 1, rng)
    _, rho = qcore.random_low_rank_state(3, 1, rng)
    # rank of the difference is at most 2r
    assert qcore.trace_distance(U, rho) <= np.sqrt(2) / 2 * qcore.recovery_error(U, rho) + 1e-12


def test_sigma_r():
    assert qcore.sigma_r(np.diag([3.0, 2.0, 0.5])) == pytest.approx(0.5)


def test_density_matrix_validation():
    with pytest.raises(DimensionException):
        DensityMatrix(np.eye(3) / 3)
    with pytest.raises(DomainException):
        DensityMatrix(np.array([[1, 1], [0, 0]]))
    with pytest.raises(DomainException):
        DensityMatrix(np.diag([1.5, -0.5]), physical=True)
    assert DensityMatrix(np.diag([1.5, -0.5])).trace == pytest.approx(1.0)


def test_values_are_read_only():
    factor = FactorMatrix(np.ones((2, 1)))
    with pytest.raises(ValueError):
        factor.matrix[0, 0] = 2
    assert factor.rank == 1 and factor.dim == 2
    assert factor.frobenius_norm == pytest.approx(np.sqrt(2))


def test_group_strings():
    strings = [PauliString.from_label(label) for label in ('XY', 'ZI', 'XY', 'II')]
    table, inverse = qcore.group_strings(strings)
    assert table.tolist() == [[0, 0], [1, 2], [3, 0]]
    assert [tuple(table[i]) for i in inverse] == [s.indices for s in strings]


def test_index_table_rejects_mixed_widths():
    with pytest.raises(DimensionException):
        qcore.index_table([PauliString((1,)), PauliString((1, 2))])
