"""
Dense complex linear algebra shared by the rest of the package.

All matrices are numpy arrays of dtype complex128 (vectors of float64 where the value is real).
Functions never modify their inputs.
"""
import logging
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from QstLab_Project import settings
from tomography.exceptions import DimensionException, DomainException, NumericalException

logger = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]

# fixed start vector seed so that spectral_norm is a deterministic function of its input
_POWER_ITERATION_SEED = 0x5EED


class EigenDecomposition(NamedTuple):
    """ eigenvalues in nonincreasing order, eigenvectors as columns paired with them """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T


def as_complex_matrix(A) -> np.ndarray:
    matrix = np.asarray(A, dtype=np.complex128)
    if matrix.ndim != 2:
        raise DimensionException(f'expected a matrix, got an array of shape {matrix.shape}')
    if not np.all(np.isfinite(matrix)):
        raise DomainException('matrix has non-finite entries')
    return matrix


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return (A + A.conj().T) / 2


def hermitian_eig(A) -> EigenDecomposition:
    """
    Eigendecomposition of a Hermitian matrix.
    :param A: square matrix, Hermitian up to rounding (it is symmetrized before solving)
    :return: EigenDecomposition with eigenvalues sorted nonincreasing
    """
    A = as_complex_matrix(A)
    rows, cols = A.shape
    if rows != cols:
        raise DimensionException(f'hermitian_eig needs a square matrix, got {rows}x{cols}')

    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.conj().T) > settings.HERMITIAN_TOLERANCE * max(scale, 1e-300):
        raise DomainException('hermitian_eig received a matrix that is not Hermitian')

    H = hermitian_part(A)
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(H)
    except np.linalg.LinAlgError as e:
        raise NumericalException(f'eigensolver did not converge: {e}', residual=float('nan')) from e

    # eigh sorts ascending
    decomposition = EigenDecomposition(eigenvalues[::-1].copy(), eigenvectors[:, ::-1].copy())

    residual = float(np.linalg.norm(H - decomposition.reconstruct()))
    if residual > settings.EIGEN_RESIDUAL_TOLERANCE * max(1.0, scale):
        raise NumericalException(f'eigendecomposition residual {residual:.3e} above tolerance',
                                 residual=residual)
    return decomposition


def procrustes_align(U, X) -> np.ndarray:
    """
    Unitary R minimizing ||U - X R||_F.
    :param U: D x r factor
    :param X: D x r factor to be rotated onto U
    :return: r x r unitary R = A B^H where A S B^H is the SVD of X^H U
    """
    U = as_complex_matrix(U)
    X = as_complex_matrix(X)
    if U.shape != X.shape:
        raise DimensionException(f'procrustes_align shapes differ: {U.shape} vs {X.shape}')
    rows, rank = U.shape
    if rank < 1 or rows < rank:
        raise DimensionException(f'procrustes_align needs D >= r >= 1, got D={rows}, r={rank}')

    left, _, right_h = np.linalg.svd(X.conj().T @ U)
    return left @ right_h


def simplex_projection(v) -> np.ndarray:
    """
    Euclidean projection onto the probability simplex {w : w >= 0, sum(w) = 1}.
    Sort-based thresholding: w = max(v - theta, 0) with theta chosen so that w sums to one.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionException(f'simplex_projection needs a nonempty vector, got shape {v.shape}')
    if not np.all(np.isfinite(v)):
        raise DomainException('simplex_projection received non-finite entries')

    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - 1.0
    positions = np.arange(1, v.size + 1)
    support = np.nonzero(u - cumulative / positions > 0)[0][-1]
    theta = cumulative[support] / (support + 1.0)
    return np.maximum(v - theta, 0.0)


def _start_vector(dimension: int) -> np.ndarray:
    rng = np.random.default_rng(_POWER_ITERATION_SEED)
    start = rng.standard_normal(dimension) + 1j * rng.standard_normal(dimension)
    return start / np.linalg.norm(start)


def spectral_norm(A: Union[np.ndarray, Operator], dimension: Optional[int] = None) -> float:
    """
    Largest singular value by power iteration on A^H A.
    :param A: dense matrix, or a callable applying a *Hermitian* operator to a D x c block
    :param dimension: D, required when A is a callable
    :return: estimate of ||A||, 0 for the zero operator
    """
    if callable(A):
        if dimension is None:
            raise DimensionException('spectral_norm needs the dimension of a matrix-free operator')

        def gram(x):
            return A(A(x))
    else:
        A = as_complex_matrix(A)
        dimension = A.shape[1]

        def gram(x):
            return A.conj().T @ (A @ x)

    x = _start_vector(dimension)
    estimate = 0.0
    for _ in range(settings.POWER_ITERATION_MAX_ITER):
        y = gram(x[:, None])[:, 0]
        rayleigh = float(np.vdot(x, y).real)
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            return 0.0
        x = y / y_norm
        if abs(rayleigh - estimate) <= settings.POWER_ITERATION_TOLERANCE * rayleigh:
            estimate = rayleigh
            break
        estimate = rayleigh
    else:
        logger.warning('power iteration hit its iteration cap, returning the last estimate')

    return float(np.sqrt(max(estimate, 0.0)))
