"""
Recovery of a low-rank state from Pauli data by Wirtinger gradient descent on the factor U.

The loss of a factor U is

    f(U) = D / (2K) * sum_k (<W_k, U U^H> - y_hat_k)^2

and its Wirtinger gradient in the conjugate coordinate is

    grad f(U) = D / K * sum_k (<W_k, U U^H> - y_hat_k) W_k U.

Sampled settings repeat (K draws from 4^n strings), so problems keep the distinct strings once and
merge the per-setting residuals onto them. Sums run in a fixed order, so runs are reproducible.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from QstLab_Project import settings
from tomography import linalg, qcore
from tomography.exceptions import DegenerateStepException, DimensionException, DomainException
from tomography.measurement import (Setting, as_setting, dense_backprojection, local_basis_transform,
                                    operator_error_norm)
from tomography.qcore import DensityMatrix, FactorMatrix, PauliString

logger = logging.getLogger(__name__)


class Variant(str, Enum):
    """ gradient descent flavour """
    PLAIN = 'plain'
    RIEMANNIAN = 'riemannian'

    def __str__(self):
        return self.value


class StopReason(str, Enum):
    CONVERGED = 'converged'
    ITERATION_CAP = 'iteration-cap'
    DIVERGED = 'diverged'

    def __str__(self):
        return self.value


class _GroupedStrings:
    """ distinct Pauli strings of a sampled list, with their signed permutation form """

    def __init__(self, strings: Sequence[Setting]):
        self.strings: List[PauliString] = [as_setting(s).string for s in strings]
        self.table, self.inverse = qcore.group_strings(self.strings)
        self.multiplicity = np.bincount(self.inverse, minlength=self.table.shape[0]).astype(np.float64)
        self.sources, self.phases = qcore.signed_permutations(self.table)

    @property
    def K(self) -> int:
        return len(self.strings)

    @property
    def n(self) -> int:
        return self.table.shape[1]

    @property
    def D(self) -> int:
        return 2 ** self.n

    def apply_all(self, U: np.ndarray) -> np.ndarray:
        """ W_s U for every distinct string, S x D x r """
        return self.phases[:, :, None] * U[self.sources]

    def merge(self, values: np.ndarray) -> np.ndarray:
        """ sums per-setting values (K, or K x D) onto the distinct strings """
        if values.ndim == 1:
            return np.bincount(self.inverse, weights=values, minlength=self.table.shape[0])
        merged = np.zeros((self.table.shape[0],) + values.shape[1:], dtype=values.dtype)
        np.add.at(merged, self.inverse, values)
        return merged


class SensingProblem:
    """
    Least squares recovery from K empirical Pauli observables.
    :param strings: the K sampled Pauli strings (or settings), repeats allowed
    :param y_hat: empirical observables, one per setting
    :param r: factor rank
    """

    def __init__(self, strings: Sequence[Setting], y_hat, r: int):
        if not strings:
            raise DimensionException('a sensing problem needs at least one setting')
        self._grouped = _GroupedStrings(strings)
        y_hat = np.array(y_hat, dtype=np.float64)
        if y_hat.shape != (self._grouped.K,):
            raise DimensionException(f'{y_hat.size} observables for {self._grouped.K} settings')
        if not 1 <= r <= self._grouped.D:
            raise DomainException(f'rank must lie in [1, {self._grouped.D}], got {r}')
        y_hat.setflags(write=False)
        self.y_hat = y_hat
        self.r = r

    @property
    def strings(self) -> List[PauliString]:
        return self._grouped.strings

    @property
    def K(self) -> int:
        return self._grouped.K

    @property
    def n(self) -> int:
        return self._grouped.n

    @property
    def D(self) -> int:
        return self._grouped.D

    @property
    def scale(self) -> float:
        """ D / K """
        return self.D / self.K

    def _check(self, U) -> np.ndarray:
        U = qcore.as_array(U)
        if U.ndim != 2 or U.shape[0] != self.D:
            raise DimensionException(f'factor of shape {U.shape} does not act on dimension {self.D}')
        return U

    def measure(self, U) -> np.ndarray:
        """ A(U U^H), one value per setting """
        U = self._check(U)
        applied = self._grouped.apply_all(U)
        return np.einsum('dc,sdc->s', U.conj(), applied).real[self._grouped.inverse]

    def evaluate(self, U) -> Tuple[float, np.ndarray]:
        """ (loss, Wirtinger gradient) sharing one pass over the strings """
        U = self._check(U)
        applied = self._grouped.apply_all(U)
        values = np.einsum('dc,sdc->s', U.conj(), applied).real
        residual = values[self._grouped.inverse] - self.y_hat
        loss = 0.5 * self.scale * float(residual @ residual)
        weights = self._grouped.merge(residual)
        gradient = self.scale * np.einsum('s,sdc->dc', weights, applied)
        return loss, gradient

    def loss(self, U) -> float:
        residual = self.measure(U) - self.y_hat
        return 0.5 * self.scale * float(residual @ residual)

    def gradient(self, U) -> np.ndarray:
        return self.evaluate(U)[1]

    def backprojection_matrix(self, weights) -> np.ndarray:
        """ sum_k weights_k W_k as a dense D x D matrix """
        merged = self._grouped.merge(np.asarray(weights, dtype=np.float64))
        return dense_backprojection(self._grouped.sources, self._grouped.phases, merged)

    def hessian_quadratic_form(self, U, delta) -> float:
        U = self._check(U)
        delta = self._check(delta)
        if delta.shape != U.shape:
            raise DimensionException(f'direction {delta.shape} does not match factor {U.shape}')
        applied = self._grouped.apply_all(U)
        values = np.einsum('dc,sdc->s', U.conj(), applied).real
        residual = self._grouped.merge(values[self._grouped.inverse] - self.y_hat)

        # z_s = <W_s, U delta^H>
        z = np.einsum('dc,sdc->s', delta.conj(), applied)
        curvature = self._grouped.multiplicity @ (np.abs(z) ** 2 + (z ** 2).real)
        delta_values = np.einsum('dc,sdc->s', delta.conj(), self._grouped.apply_all(delta)).real
        return 2 * self.scale * float(curvature + residual @ delta_values)


class BasisProblem:
    """
    Least squares recovery straight from the K x D empirical Pauli basis probabilities,
    f(U) = D / (2K) * sum_{k, j} (<E_{k, j}, U U^H> - p_hat_{k, j})^2.
    """

    def __init__(self, strings: Sequence[Setting], p_hat, r: int):
        if not strings:
            raise DimensionException('a basis problem needs at least one setting')
        self._grouped = _GroupedStrings(strings)
        p_hat = np.array(p_hat, dtype=np.float64)
        if p_hat.shape != (self._grouped.K, self._grouped.D):
            raise DimensionException(f'p_hat of shape {p_hat.shape}, expected '
                                     f'{(self._grouped.K, self._grouped.D)}')
        if not 1 <= r <= self._grouped.D:
            raise DomainException(f'rank must lie in [1, {self._grouped.D}], got {r}')
        p_hat.setflags(write=False)
        self.p_hat = p_hat
        self.r = r

    @property
    def K(self) -> int:
        return self._grouped.K

    @property
    def D(self) -> int:
        return self._grouped.D

    @property
    def scale(self) -> float:
        return self.D / self.K

    def evaluate(self, U) -> Tuple[float, np.ndarray]:
        U = qcore.as_array(U)
        if U.ndim != 2 or U.shape[0] != self.D:
            raise DimensionException(f'factor of shape {U.shape} does not act on dimension {self.D}')
        table = self._grouped.table
        rotated = local_basis_transform(table, U, adjoint=True)
        probabilities = (rotated.real ** 2 + rotated.imag ** 2).sum(axis=2)
        residual = probabilities[self._grouped.inverse] - self.p_hat
        loss = 0.5 * self.scale * float(np.sum(residual ** 2))

        # E_{s, j} U = V_s diag(e_j) V_s^H U
        weights = self._grouped.merge(residual)
        back = local_basis_transform(table, weights[:, :, None] * rotated, adjoint=False)
        return loss, self.scale * back.sum(axis=0)

    def loss(self, U) -> float:
        return self.evaluate(U)[0]

    def gradient(self, U) -> np.ndarray:
        return self.evaluate(U)[1]


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float
    max_iterations: int = settings.DEFAULT_ITERATION_CAP
    tolerance: float = settings.GRADIENT_TOLERANCE
    variant: Variant = Variant.PLAIN
    record_trajectory: bool = True

    def __post_init__(self):
        # step_size = 0 is allowed and leaves the iterate in place
        if self.step_size < 0 or not np.isfinite(self.step_size):
            raise DomainException(f'step size must be a nonnegative number, got {self.step_size}')
        if self.tolerance < 0:
            raise DomainException(f'gradient tolerance must be nonnegative, got {self.tolerance}')
        if self.max_iterations < 0:
            raise DomainException(f'iteration cap must be nonnegative, got {self.max_iterations}')
        object.__setattr__(self, 'variant', Variant(self.variant))


class TraceRecord(NamedTuple):
    iteration: int
    loss: float
    grad_norm: float
    dist_to_true: float
    recovery_error: float


@dataclass
class RunTrace:
    records: List[TraceRecord]
    final: FactorMatrix
    iterations: int
    stop_reason: StopReason
    final_loss: float
    final_grad_norm: float
    physical_error: float = float('nan')
    trace_distance: float = float('nan')

    @property
    def losses(self) -> np.ndarray:
        return np.array([record.loss for record in self.records])


def loss_value(problem, U) -> float:
    return problem.loss(U)


def wirtinger_gradient(problem, U) -> np.ndarray:
    return problem.gradient(U)


def hessian_quadratic_form(problem: SensingProblem, U, delta) -> float:
    """
    Real quadratic form of the Wirtinger Hessian on the direction (delta, delta*):
        2D/K sum |z_k|^2 + 2D/K sum Re(z_k^2) + 2D/K <A*(A(U U^H) - y_hat), delta delta^H>
    with z_k = <W_k, U delta^H>. Equals the second derivative of t -> f(U + t delta) at 0.
    """
    return problem.hessian_quadratic_form(U, delta)


def basis_loss(strings: Sequence[Setting], p_hat, U) -> float:
    U = qcore.as_array(U)
    return BasisProblem(strings, p_hat, U.shape[1]).loss(U)


def basis_gradient(strings: Sequence[Setting], p_hat, U) -> np.ndarray:
    U = qcore.as_array(U)
    return BasisProblem(strings, p_hat, U.shape[1]).gradient(U)


def tangent_projection(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """ P_T(V) = V - <U, V> U on the unit sphere at U """
    return V - np.vdot(U, V) * U


def _should_record(iteration: int) -> bool:
    if iteration <= settings.TRACE_DECIMATION_START:
        return True
    return iteration % settings.TRACE_DECIMATION_STEP == 0


class _Recorder:
    def __init__(self, enabled: bool, truth: Optional[np.ndarray]):
        self.enabled = enabled
        self.truth = truth
        self.rho = None if truth is None else qcore.hermitian_outer(truth)
        self.records: List[TraceRecord] = []

    def __call__(self, iteration: int, U: np.ndarray, loss: float, grad_norm: float, force: bool = False):
        if not self.enabled or not (force or _should_record(iteration)):
            return
        if self.records and self.records[-1].iteration == iteration:
            return
        if self.truth is None:
            distance = error = float('nan')
        else:
            distance = qcore.dist(U, self.truth)
            error = qcore.recovery_error(U, self.rho)
        self.records.append(TraceRecord(iteration, loss, grad_norm, distance, error))


def _descend(problem, U0, cfg: OptimizerConfig, truth, step) -> RunTrace:
    U = np.array(qcore.as_array(U0))
    truth = None if truth is None else qcore.as_array(truth)
    record = _Recorder(cfg.record_trajectory, truth)

    loss, gradient = problem.evaluate(U)
    initial_loss = loss
    threshold = settings.DIVERGENCE_FACTOR * max(initial_loss, np.finfo(float).tiny)
    iteration = 0
    while True:
        grad_norm = float(np.linalg.norm(gradient))
        record(iteration, U, loss, grad_norm)
        if grad_norm <= cfg.tolerance:
            stop = StopReason.CONVERGED
            break
        if iteration >= cfg.max_iterations:
            stop = StopReason.ITERATION_CAP
            break
        previous = U
        U = step(U, gradient)
        iteration += 1
        loss, gradient = problem.evaluate(U)
        if not np.isfinite(loss) or loss > threshold:
            if not np.all(np.isfinite(U)):
                # the trace keeps the last finite iterate
                U = previous
                loss, gradient = problem.evaluate(U)
            grad_norm = float(np.linalg.norm(gradient))
            stop = StopReason.DIVERGED
            logger.warning('run diverged at iteration %d (loss %.3e from %.3e)', iteration, loss, initial_loss)
            break

    record(iteration, U, loss, grad_norm, force=True)
    if stop is StopReason.ITERATION_CAP:
        logger.debug('iteration cap %d reached with gradient norm %.3e', cfg.max_iterations, grad_norm)

    trace = RunTrace(record.records, FactorMatrix(U), iteration, stop, loss, grad_norm)
    if truth is not None and stop is not StopReason.DIVERGED:
        trace.physical_error = float(np.linalg.norm(physical_projection(U).matrix - record.rho))
        trace.trace_distance = qcore.trace_distance(U, record.rho)
    return trace


def gd_run(problem, U0, cfg: OptimizerConfig, truth=None) -> RunTrace:
    """
    Plain Wirtinger gradient descent U_t = U_{t-1} - mu * grad f(U_{t-1}).
    :param problem: SensingProblem or BasisProblem
    :param U0: initial factor
    :param cfg: step size, iteration cap, gradient tolerance
    :param truth: ground-truth factor U*, enables distance and recovery error in the trace
    """
    mu = cfg.step_size

    def step(U, gradient):
        return U - mu * gradient

    return _descend(problem, U0, cfg, truth, step)


def riemannian_step(problem, U, mu: float, gradient: Optional[np.ndarray] = None) -> np.ndarray:
    """ one step on the unit sphere: U - mu P_T(grad), renormalized """
    U = qcore.as_array(U)
    if gradient is None:
        gradient = problem.gradient(U)
    moved = U - mu * tangent_projection(U, gradient)
    norm = np.linalg.norm(moved)
    if norm < settings.DEGENERATE_STEP_NORM:
        raise DegenerateStepException(f'Riemannian step collapsed to norm {norm:.3e}', residual=norm)
    return moved / norm


def riemannian_run(problem, U0, cfg: OptimizerConfig, truth=None) -> RunTrace:
    """ Riemannian Wirtinger gradient descent over factors with ||U||_F = 1 """
    U0 = qcore.as_array(U0)
    if abs(np.linalg.norm(U0) - 1) > 1e-10:
        raise DomainException(f'Riemannian descent starts on the unit sphere, got norm {np.linalg.norm(U0)}')
    mu = cfg.step_size

    def step(U, gradient):
        return riemannian_step(problem, U, mu, gradient)

    return _descend(problem, U0, cfg, truth, step)


def optimize(problem, U0, cfg: OptimizerConfig, truth=None) -> RunTrace:
    """ runs the variant named by cfg; the Riemannian variant normalizes U0 first """
    if cfg.variant is Variant.RIEMANNIAN:
        U0 = qcore.as_array(U0)
        norm = np.linalg.norm(U0)
        if norm < settings.DEGENERATE_STEP_NORM:
            raise DegenerateStepException('can not normalize a zero initial factor', residual=norm)
        return riemannian_run(problem, U0 / norm, cfg, truth)
    return gd_run(problem, U0, cfg, truth)


def spectral_init(problem: SensingProblem) -> FactorMatrix:
    """
    Top-r eigenpairs of S = D/K * sum_k y_hat_k W_k, columns (lambda_i)_+^(1/2) c_i.
    """
    S = problem.scale * problem.backprojection_matrix(problem.y_hat)
    decomposition = linalg.hermitian_eig(S)
    top = np.maximum(decomposition.eigenvalues[:problem.r], 0.0)
    return FactorMatrix(decomposition.eigenvectors[:, :problem.r] * np.sqrt(top))


def project_to_physical(rho) -> DensityMatrix:
    """ nearest PSD trace-one matrix in Frobenius norm, via simplex projection of the spectrum """
    decomposition = linalg.hermitian_eig(qcore.as_array(rho))
    eigenvalues = linalg.simplex_projection(decomposition.eigenvalues)
    projected = linalg.EigenDecomposition(eigenvalues, decomposition.eigenvectors).reconstruct()
    return DensityMatrix(linalg.hermitian_part(projected), physical=True)


def physical_projection(U) -> DensityMatrix:
    return project_to_physical(qcore.hermitian_outer(qcore.as_array(U)))


def error_bound_h(delta: float) -> float:
    """
    h(delta) = (sqrt(2) + sqrt(82.55 - 762.54 delta - 843.09 delta^2)) / (1.5 - 15.7 delta),
    defined for 0 <= delta <= 0.09.
    """
    if not 0 <= delta <= settings.DEFAULT_DELTA:
        raise DomainException(f'h is defined for delta in [0, {settings.DEFAULT_DELTA}], got {delta}')
    radicand = 82.55 - 762.54 * delta - 843.09 * delta ** 2
    denominator = 1.5 - 15.7 * delta
    if radicand < 0 or denominator <= 0:
        raise DomainException(f'h is undefined at delta={delta}')
    return (np.sqrt(2) + np.sqrt(radicand)) / denominator


def theorem_bound_rhs(delta: float, r: int, strings: Sequence[Setting], e) -> float:
    """ D sqrt(r) h(delta) ||A*(e)|| / K, the recovery error bound for second-order critical points """
    if not strings:
        raise DomainException('the bound needs at least one setting')
    h = error_bound_h(delta)
    dim = as_setting(strings[0]).dim
    return dim * np.sqrt(r) * h * operator_error_norm(strings, e)
