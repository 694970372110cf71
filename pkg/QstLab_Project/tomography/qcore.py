"""
Quantum-domain values: Pauli strings, density matrices, factor matrices.

Conventions:
    - sigma_2 is [[0, i], [-i, 0]] (conjugate of the common sigma_y)
    - qubit 1 is the most significant Kronecker factor, so row index bit (n - q) belongs to qubit q
    - every W_k is a signed permutation: (W_k B)[i] = phase_k[i] * B[i XOR x_k]
"""
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import List, Sequence, Tuple, Union

import numpy as np

from QstLab_Project import settings
from tomography import linalg
from tomography.exceptions import DimensionException, DomainException

PAULI_LABELS = 'IXYZ'

_PAULI_MATRICES = {
    0: np.array([[1, 0], [0, 1]], dtype=np.complex128),
    1: np.array([[0, 1], [1, 0]], dtype=np.complex128),
    2: np.array([[0, 1j], [-1j, 0]], dtype=np.complex128),
    3: np.array([[1, 0], [0, -1]], dtype=np.complex128),
}

# per-qubit signed permutation structure: whether the index bit flips, and the row phase by row bit
_FLIPS = np.array([0, 1, 1, 0], dtype=np.int64)
_ROW_PHASES = np.array([[1, 1], [1, 1], [1j, -1j], [1, -1]], dtype=np.complex128)


def _read_only(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PauliString:
    """ W = sigma_{k_1} x ... x sigma_{k_n}, identified by its index tuple """
    indices: Tuple[int, ...]

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        if not indices:
            raise DimensionException('a Pauli string needs at least one qubit')
        if any(i not in _PAULI_MATRICES for i in indices):
            raise DomainException(f'Pauli indices must lie in 0..3, got {indices}')
        object.__setattr__(self, 'indices', indices)

    @property
    def n(self) -> int:
        return len(self.indices)

    @property
    def dim(self) -> int:
        return 2 ** self.n

    @property
    def label(self) -> str:
        return ''.join(PAULI_LABELS[i] for i in self.indices)

    @property
    def flat_index(self) -> int:
        """ 1-based position among all 4^n strings, k_1 most significant """
        value = 0
        for i in self.indices:
            value = 4 * value + i
        return value + 1

    @property
    def is_identity(self) -> bool:
        return not any(self.indices)

    @classmethod
    def from_label(cls, label: str) -> 'PauliString':
        try:
            return cls(tuple(PAULI_LABELS.index(c) for c in label.strip().upper()))
        except ValueError:
            raise DomainException(f'can not parse Pauli string from {label!r}')

    @classmethod
    def from_flat_index(cls, k: int, n: int) -> 'PauliString':
        if not 1 <= k <= 4 ** n:
            raise DomainException(f'flat index {k} outside [1, {4 ** n}]')
        value = k - 1
        digits = []
        for _ in range(n):
            value, digit = divmod(value, 4)
            digits.append(digit)
        return cls(tuple(reversed(digits)))

    def __str__(self):
        return self.label


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    physical: bool = False

    def __post_init__(self):
        matrix = linalg.as_complex_matrix(np.array(self.matrix, dtype=np.complex128))
        rows, cols = matrix.shape
        if rows != cols or rows < 2 or rows & (rows - 1):
            raise DimensionException(f'a density matrix is 2^n x 2^n, got {rows}x{cols}')
        if np.linalg.norm(matrix - matrix.conj().T) > 1e-10 * max(1.0, np.linalg.norm(matrix)):
            raise DomainException('density matrix is not Hermitian')
        if self.physical:
            if abs(np.trace(matrix).real - 1) > 1e-10:
                raise DomainException(f'physical state has trace {np.trace(matrix).real}')
            if np.linalg.eigvalsh(matrix).min() < -1e-10:
                raise DomainException('physical state has a negative eigenvalue')
        object.__setattr__(self, 'matrix', _read_only(matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.dim.bit_length() - 1

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


@dataclass(frozen=True, eq=False)
class FactorMatrix:
    """ D x r factor U of rho = U U^H """
    matrix: np.ndarray

    def __post_init__(self):
        matrix = linalg.as_complex_matrix(np.array(self.matrix, dtype=np.complex128))
        object.__setattr__(self, 'matrix', _read_only(matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        return self.matrix.shape[1]

    @property
    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def density(self) -> DensityMatrix:
        return DensityMatrix(self.matrix @ self.matrix.conj().T)


Matrix = Union[np.ndarray, FactorMatrix, DensityMatrix]


def as_array(value: Matrix) -> np.ndarray:
    """ the raw complex array behind a FactorMatrix / DensityMatrix, or the array itself """
    return np.asarray(getattr(value, 'matrix', value), dtype=np.complex128)


def pauli_single(i: int) -> np.ndarray:
    try:
        return _PAULI_MATRICES[i].copy()
    except KeyError:
        raise DomainException(f'can not build a Pauli matrix from index {i}')


def pauli_dense(s: PauliString) -> np.ndarray:
    if s.n > settings.MAX_DENSE_QUBITS:
        raise DomainException(f'dense Pauli matrices are capped at {settings.MAX_DENSE_QUBITS} qubits')
    return reduce(np.kron, (_PAULI_MATRICES[i] for i in s.indices))


@lru_cache(maxsize=8192)
def _signed_permutation(indices: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray]:
    sources, phases = signed_permutations(np.array([indices]))
    return _read_only(sources[0]), _read_only(phases[0])


def signed_permutations(index_table: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Signed permutation form of many strings at once.
    :param index_table: S x n integer array of Pauli indices
    :return: (sources, phases), both S x D, with (W_s B)[i] = phases[s, i] * B[sources[s, i]]
    """
    index_table = np.asarray(index_table, dtype=np.int64)
    count, n = index_table.shape
    rows = np.arange(2 ** n, dtype=np.int64)
    shifts = n - 1 - np.arange(n)
    bits = (rows[:, None] >> shifts[None, :]) & 1  # D x n

    masks = (_FLIPS[index_table] << shifts[None, :]).sum(axis=1)  # S
    sources = rows[None, :] ^ masks[:, None]
    phases = np.ones((count, rows.size), dtype=np.complex128)
    for q in range(n):
        phases *= _ROW_PHASES[index_table[:, q][:, None], bits[None, :, q]]
    return sources, phases


def apply_pauli_string(s: PauliString, B) -> np.ndarray:
    """
    W_s B without forming W_s, O(D c).
    :param s: Pauli string on n qubits
    :param B: 2^n x c block (or a length-2^n vector)
    """
    B = as_array(B)
    if B.shape[0] != s.dim:
        raise DimensionException(f'{s.label} acts on {s.dim} rows, got {B.shape[0]}')
    sources, phases = _signed_permutation(s.indices)
    if B.ndim == 1:
        return phases * B[sources]
    return phases[:, None] * B[sources]


def random_low_rank_state(n: int, r: int, rng: np.random.Generator) -> Tuple[FactorMatrix, DensityMatrix]:
    """
    U = (A + iB) / ||A + iB||_F with standard normal A, B, and rho = U U^H.
    """
    dim = 2 ** n
    if not 1 <= r <= dim:
        raise DomainException(f'rank must lie in [1, {dim}], got {r}')
    raw = rng.standard_normal((dim, r)) + 1j * rng.standard_normal((dim, r))
    factor = FactorMatrix(raw / np.linalg.norm(raw))
    return factor, DensityMatrix(hermitian_outer(factor.matrix), physical=True)


def random_pauli_strings(n: int, K: int, rng: np.random.Generator) -> List[PauliString]:
    """ K i.i.d. uniform draws over all 4^n strings, identity included """
    if K < 1:
        raise DomainException(f'need at least one measurement setting, got K={K}')
    table = rng.integers(0, 4, size=(K, n))
    return [PauliString(tuple(row)) for row in table.tolist()]


def hermitian_outer(U: np.ndarray) -> np.ndarray:
    """ U U^H, symmetrized to remove rounding asymmetry """
    return linalg.hermitian_part(U @ U.conj().T)


def dist(U: Matrix, X: Matrix) -> float:
    """ min over unitary R of ||U - X R||_F """
    U, X = as_array(U), as_array(X)
    return float(np.linalg.norm(U - X @ linalg.procrustes_align(U, X)))


def recovery_error(U: Matrix, rho: Matrix) -> float:
    U, rho = as_array(U), as_array(rho)
    if rho.shape != (U.shape[0], U.shape[0]):
        raise DimensionException(f'factor with {U.shape[0]} rows does not match state {rho.shape}')
    return float(np.linalg.norm(U @ U.conj().T - rho))


def trace_distance(U: Matrix, rho: Matrix) -> float:
    """ 1/2 ||U U^H - rho||_1 """
    U, rho = as_array(U), as_array(rho)
    difference = linalg.hermitian_part(U @ U.conj().T - rho)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(difference)).sum())


def purity(rho: Matrix) -> float:
    rho = as_array(rho)
    return float(np.vdot(rho, rho).real)


def sigma_r(U: Matrix) -> float:
    """ smallest of the r singular values of a D x r factor """
    return float(np.linalg.svd(as_array(U), compute_uv=False)[-1])


def index_table(strings: Sequence[PauliString]) -> np.ndarray:
    """ K x n integer array of the strings' indices """
    if not strings:
        raise DimensionException('need at least one Pauli string')
    widths = {s.n for s in strings}
    if len(widths) != 1:
        raise DimensionException(f'Pauli strings of mixed qubit counts {sorted(widths)}')
    return np.array([s.indices for s in strings], dtype=np.int64)


def group_strings(strings: Sequence[PauliString]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Distinct strings of a sampled list, in lexicographic order.
    :return: (table, inverse) where table is S x n and strings[k] == table[inverse[k]]
    """
    table, inverse = np.unique(index_table(strings), axis=0, return_inverse=True)
    return table, inverse.reshape(-1)
