"""
From a state to data: Pauli-basis POVMs, outcome probabilities, shot simulation and
empirical Pauli observables.

Outcome j is the bit string (j_1 ... j_n), big-endian like the Kronecker order, with bit 0
meaning the "+" eigenvector of sigma_{k_i} and bit 1 the "-" one. sigma_0 is measured in the
sigma_3 basis, so its outcome bits carry no sign.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple, Union

import numpy as np

from QstLab_Project import settings
from tomography import linalg, qcore
from tomography.exceptions import DimensionException, DomainException
from tomography.qcore import PauliString

logger = logging.getLogger(__name__)

_SQRT_HALF = 1 / np.sqrt(2)

# columns are the "+" and "-" eigenvectors of sigma_0 .. sigma_3
LOCAL_BASES = np.array([
    [[1, 0], [0, 1]],
    [[_SQRT_HALF, _SQRT_HALF], [_SQRT_HALF, -_SQRT_HALF]],
    [[_SQRT_HALF, _SQRT_HALF], [-1j * _SQRT_HALF, 1j * _SQRT_HALF]],
    [[1, 0], [0, 1]],
], dtype=np.complex128)

# sign of a "-" outcome: alpha_0 = 1, alpha_1 = alpha_2 = alpha_3 = -1
_MINUS_FLIPS_SIGN = np.array([0, 1, 1, 1], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class PovmSetting:
    string: PauliString
    bases: np.ndarray  # n x 2 x 2, one local eigenbasis per qubit
    signs: np.ndarray  # alpha_{k, j}, length D

    @property
    def n(self) -> int:
        return self.string.n

    @property
    def dim(self) -> int:
        return self.string.dim

    def projector(self, j: int) -> np.ndarray:
        """ dense E_{k, j}, only meant for small checks """
        vector = np.array([1.0 + 0j])
        for q, basis in enumerate(self.bases):
            bit = (j >> (self.n - 1 - q)) & 1
            vector = np.kron(vector, basis[:, bit])
        return np.outer(vector, vector.conj())


@dataclass(frozen=True, eq=False)
class ShotRecord:
    k: int
    shots: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 1 or np.any(counts < 0):
            raise DomainException('shot counts must be a vector of nonnegative integers')
        if counts.sum() != self.shots:
            raise DomainException(f'counts sum to {counts.sum()}, expected {self.shots} shots')
        counts.setflags(write=False)
        object.__setattr__(self, 'counts', counts)

    @property
    def frequencies(self) -> np.ndarray:
        """ p_hat_{k, j} = f_{k, j} / M """
        if self.shots == 0:
            raise DomainException('no shots recorded')
        return self.counts / self.shots


@dataclass(frozen=True, eq=False)
class ObservableVector:
    y: np.ndarray
    y_hat: np.ndarray
    e: np.ndarray

    @classmethod
    def from_values(cls, y, y_hat) -> 'ObservableVector':
        y = np.asarray(y, dtype=np.float64)
        y_hat = np.asarray(y_hat, dtype=np.float64)
        if y.shape != y_hat.shape:
            raise DimensionException(f'population {y.shape} and empirical {y_hat.shape} differ')
        return cls(y, y_hat, y_hat - y)

    @property
    def K(self) -> int:
        return self.y.size


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    """ K settings measured M times each on one state """
    settings: List[PovmSetting]
    probabilities: np.ndarray  # K x D population probabilities
    records: List[ShotRecord]
    observables: ObservableVector
    shots: int

    @property
    def K(self) -> int:
        return len(self.settings)

    @property
    def strings(self) -> List[PauliString]:
        return [s.string for s in self.settings]

    @property
    def copies_consumed(self) -> int:
        return self.K * self.shots

    def empirical_probabilities(self) -> np.ndarray:
        """ K x D table of p_hat """
        return np.vstack([record.frequencies for record in self.records])


Setting = Union[PovmSetting, PauliString]


def _outcome_signs(indices: Tuple[int, ...]) -> np.ndarray:
    n = len(indices)
    outcomes = np.arange(2 ** n, dtype=np.int64)
    mask = 0
    for q, i in enumerate(indices):
        mask |= int(_MINUS_FLIPS_SIGN[i]) << (n - 1 - q)
    parity = np.array([bin(j & mask).count('1') & 1 for j in outcomes.tolist()])
    return 1 - 2 * parity


@lru_cache(maxsize=8192)
def build_setting(s: PauliString) -> PovmSetting:
    bases = LOCAL_BASES[list(s.indices)].copy()
    signs = _outcome_signs(s.indices).astype(np.float64)
    bases.setflags(write=False)
    signs.setflags(write=False)
    return PovmSetting(s, bases, signs)


def as_setting(setting: Setting) -> PovmSetting:
    if isinstance(setting, PovmSetting):
        return setting
    return build_setting(setting)


def local_basis_transform(index_table: np.ndarray, B: np.ndarray, adjoint: bool) -> np.ndarray:
    """
    Applies V_s^H (adjoint=True) or V_s to B for every string s, one qubit at a time.
    :param index_table: S x n Pauli indices
    :param B: D x r block shared by all strings, or S x D x r
    :return: S x D x r
    """
    index_table = np.asarray(index_table, dtype=np.int64)
    count, n = index_table.shape
    dim = 2 ** n
    if B.shape[-2] != dim:
        raise DimensionException(f'{n}-qubit settings act on {dim} rows, got {B.shape[-2]}')
    rank = B.shape[-1]
    tensor = np.broadcast_to(B, (count, dim, rank)).reshape((count,) + (2,) * n + (rank,))

    local = LOCAL_BASES.conj().transpose(0, 2, 1) if adjoint else LOCAL_BASES
    for q in range(n):
        matrices = local[index_table[:, q]]  # S x 2 x 2
        moved = np.moveaxis(tensor, q + 1, 1)
        shape = moved.shape
        moved = np.matmul(matrices, moved.reshape(count, 2, -1)).reshape(shape)
        tensor = np.moveaxis(moved, 1, q + 1)
    return tensor.reshape(count, dim, rank)


def probability_table(index_table: np.ndarray, U: np.ndarray) -> np.ndarray:
    """ S x D table of <E_{s, j}, U U^H> = ||row_j(V_s^H U)||^2 """
    rotated = local_basis_transform(index_table, U, adjoint=True)
    probabilities = np.einsum('sdc,sdc->sd', rotated.real, rotated.real) \
        + np.einsum('sdc,sdc->sd', rotated.imag, rotated.imag)
    return np.where(probabilities < 0, 0.0, probabilities)


def povm_probabilities(setting: Setting, U) -> np.ndarray:
    setting = as_setting(setting)
    U = qcore.as_array(U)
    if U.ndim != 2 or U.shape[0] != setting.dim:
        raise DimensionException(f'setting {setting.string} needs {setting.dim} rows, got {U.shape}')
    return probability_table(np.array([setting.string.indices]), U)[0]


def true_observable(setting: Setting, U) -> float:
    """ y_k = sum_j alpha_{k, j} p_{k, j} = <W_k, U U^H> """
    setting = as_setting(setting)
    return float(setting.signs @ povm_probabilities(setting, U))


def _checked_distribution(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DimensionException(f'probabilities must be a nonempty vector, got shape {p.shape}')
    if np.any(p < -settings.NEGATIVE_PROBABILITY_TOLERANCE):
        raise DomainException(f'negative probability {p.min():.3e}')
    p = np.maximum(p, 0.0)
    total = p.sum()
    if total <= 0:
        raise DomainException('probabilities sum to zero')
    return p / total


def _cdf(p: np.ndarray) -> np.ndarray:
    """ cumulative sums, pinned to 1 from the last outcome with nonzero probability on """
    cdf = np.cumsum(p)
    cdf[np.flatnonzero(p)[-1]:] = 1.0
    return cdf


def sample_counts(p, M: int, rng: np.random.Generator, k: int = 0) -> ShotRecord:
    """
    Multinomial(M, p) as M categorical draws through the inverse CDF.
    :param p: outcome probabilities, renormalized internally
    :param M: number of shots
    :param k: setting index stored on the record
    """
    if M < 0:
        raise DomainException(f'shot count must be nonnegative, got {M}')
    p = _checked_distribution(p)
    outcomes = np.searchsorted(_cdf(p), rng.random(M), side='right')
    return ShotRecord(k, M, np.bincount(outcomes, minlength=p.size))


def sample_count_table(p, M: int, resamples: int, rng: np.random.Generator) -> np.ndarray:
    """
    `resamples` independent count vectors, drawn exactly like sample_counts.
    :return: resamples x D integer table
    """
    p = _checked_distribution(p)
    outcomes = np.searchsorted(_cdf(p), rng.random((resamples, M)), side='right')
    offsets = (np.arange(resamples) * p.size)[:, None]
    flat = np.bincount((outcomes + offsets).ravel(), minlength=resamples * p.size)
    return flat.reshape(resamples, p.size)


def empirical_observable(record: ShotRecord, setting: Setting) -> float:
    """ y_hat_k = sum_j alpha_{k, j} f_{k, j} / M """
    setting = as_setting(setting)
    if record.counts.size != setting.dim:
        raise DimensionException(f'{record.counts.size} counts for a {setting.dim}-outcome setting')
    return float(setting.signs @ record.frequencies)


def simulate_ensemble(strings: Sequence[Setting], U, M: int, rng: np.random.Generator) -> MeasurementEnsemble:
    """
    Measures each setting M times on the state U U^H.
    :param strings: K Pauli strings (or settings built from them)
    :param U: factor of the measured state
    :param M: shots per setting
    """
    if M < 1:
        raise DomainException(f'need at least one shot per setting, got M={M}')
    povms = [as_setting(s) for s in strings]
    if not povms:
        raise DomainException('need at least one measurement setting')
    U = qcore.as_array(U)

    table = qcore.index_table([s.string for s in povms])
    probabilities = probability_table(table, U)

    records = [sample_counts(p, M, rng, k) for k, p in enumerate(probabilities)]
    signs = np.vstack([s.signs for s in povms])
    y = np.einsum('kd,kd->k', signs, probabilities)
    y_hat = np.array([empirical_observable(r, s) for r, s in zip(records, povms)])

    logger.debug('measured %d settings x %d shots = %d copies', len(povms), M, len(povms) * M)
    return MeasurementEnsemble(povms, probabilities, records, ObservableVector.from_values(y, y_hat), M)


def measure_ensemble(strings: Sequence[Setting], U, M: int,
                     rng: np.random.Generator) -> Tuple[ObservableVector, List[ShotRecord]]:
    ensemble = simulate_ensemble(strings, U, M, rng)
    return ensemble.observables, ensemble.records


def backprojection_operator(strings: Sequence[Setting], weights) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Signed-permutation form of sum_k weights_k W_k with repeated strings merged.
    :return: (sources, phases, merged weights) over the distinct strings
    """
    pauli = [as_setting(s).string for s in strings]
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(pauli),):
        raise DimensionException(f'{weights.size} weights for {len(pauli)} settings')
    table, inverse = qcore.group_strings(pauli)
    merged = np.bincount(inverse, weights=weights, minlength=table.shape[0])
    sources, phases = qcore.signed_permutations(table)
    return sources, phases, merged


def apply_backprojection(sources: np.ndarray, phases: np.ndarray, weights: np.ndarray,
                         B: np.ndarray) -> np.ndarray:
    """ (sum_s weights_s W_s) B for a D x c block """
    return np.einsum('s,sd,sdc->dc', weights, phases, B[sources])


def dense_backprojection(sources: np.ndarray, phases: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """ sum_s weights_s W_s as a dense D x D matrix, accumulated entry by entry """
    dim = sources.shape[1]
    dense = np.zeros((dim, dim), dtype=np.complex128)
    rows = np.broadcast_to(np.arange(dim), sources.shape)
    np.add.at(dense, (rows, sources), weights[:, None] * phases)
    return dense


def operator_error_norm(strings: Sequence[Setting], e) -> float:
    """ ||A*(e)|| / K with A*(e) = sum_k e_k W_k, by matrix-free power iteration """
    sources, phases, merged = backprojection_operator(strings, e)
    K = len(strings)
    if not np.any(merged):
        return 0.0

    def operator(B):
        return apply_backprojection(sources, phases, merged, B) / K

    return linalg.spectral_norm(operator, dimension=sources.shape[1])
