"""
One Monte Carlo trial per study kind.

Each trial owns its generators: the trial seed is split into independent streams for the state,
the measurement settings and the shots, so nothing is shared across trials or workers.
"""
import logging
import time
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np

from experiment.config import Configuration, StudyKind
from tomography import measurement, optimizer, qcore, serializers
from tomography.optimizer import OptimizerConfig, RunTrace, Variant

logger = logging.getLogger(__name__)

KEY_FIELDS = ('kind', 'config', 'trial', 'n', 'r', 'K', 'M', 'N', 'mu', 'seed', 'variant')

_RUN_FIELDS = ('iterations', 'stop_reason', 'final_loss', 'init_error', 'recovery_error', 'dist_to_true',
               'physical_error', 'trace_distance')

METRIC_FIELDS = {
    StudyKind.VARIANCE: ('label', 'y', 'mse', 'exact_variance', 'variance_bound'),
    StudyKind.CONVERGENCE: _RUN_FIELDS,
    StudyKind.TRADEOFF: _RUN_FIELDS,
    StudyKind.CONSTRAINT_COMPARE: _RUN_FIELDS,
    StudyKind.BASIS_VS_OBSERVABLE: _RUN_FIELDS,
    StudyKind.INIT_QUALITY: ('init_error', 'init_dist', 'init_sigma_r'),
    StudyKind.OPERATOR_NORM: ('operator_norm',),
    StudyKind.BOUND_CHECK: _RUN_FIELDS + ('bound_rhs', 'bound_holds'),
}

TRACE_FIELDS = ('config', 'trial', 'n', 'r', 'variant', 'iter', 'loss', 'grad_norm', 'dist_to_true',
                'recovery_error')


class TrialJob(NamedTuple):
    kind: StudyKind
    configuration: Configuration
    trial: int
    seed: int
    step_size: float
    max_iterations: int
    tolerance: float
    delta: float
    resamples: int


class TrialOutcome(NamedTuple):
    rows: List[Dict]
    traces: List[Dict]
    elapsed_ms: float


class TrialStreams(NamedTuple):
    state: np.random.Generator
    settings: np.random.Generator
    shots: np.random.Generator


def trial_streams(seed: int) -> TrialStreams:
    children = np.random.SeedSequence(seed).spawn(len(TrialStreams._fields))
    return TrialStreams(*(np.random.default_rng(child) for child in children))


class Instance(NamedTuple):
    """ a random low-rank state and its simulated Pauli measurements """
    truth: qcore.FactorMatrix
    rho: qcore.DensityMatrix
    ensemble: measurement.MeasurementEnsemble


def _row(job: TrialJob, variant: str, **metrics) -> Dict:
    c = job.configuration
    row = {'kind': job.kind.value, 'config': c.index, 'trial': job.trial, 'n': c.n, 'r': c.r, 'K': c.K,
           'M': c.M, 'N': c.K * c.M, 'mu': job.step_size, 'seed': job.seed, 'variant': variant}
    row.update(metrics)
    return row


def _measured_instance(job: TrialJob, streams: TrialStreams) -> Instance:
    c = job.configuration
    truth, rho = qcore.random_low_rank_state(c.n, c.r, streams.state)
    strings = qcore.random_pauli_strings(c.n, c.K, streams.settings)
    ensemble = measurement.simulate_ensemble(strings, truth, c.M, streams.shots)
    return Instance(truth, rho, ensemble)


def _descend(job: TrialJob, problem, U0, instance: Instance, variant: Variant, record: bool) -> RunTrace:
    cfg = OptimizerConfig(step_size=job.step_size, max_iterations=job.max_iterations, tolerance=job.tolerance,
                          variant=variant, record_trajectory=record)
    trace = optimizer.optimize(problem, U0, cfg, truth=instance.truth)
    logger.debug('config %d trial %d (%s): %s after %d iterations', job.configuration.index, job.trial,
                 variant, trace.stop_reason, trace.iterations)
    return trace


def _run_metrics(trace: RunTrace, U0, instance: Instance) -> Dict:
    return {
        'iterations': trace.iterations,
        'stop_reason': trace.stop_reason.value,
        'final_loss': trace.final_loss,
        'init_error': qcore.recovery_error(U0, instance.rho),
        'recovery_error': qcore.recovery_error(trace.final, instance.rho),
        'dist_to_true': qcore.dist(trace.final, instance.truth),
        'physical_error': trace.physical_error,
        'trace_distance': trace.trace_distance,
    }


def _trace_rows(job: TrialJob, variant: str, trace: RunTrace) -> List[Dict]:
    c = job.configuration
    frame = serializers.run_trace_frame(trace).assign(config=c.index, trial=job.trial, n=c.n, r=c.r,
                                                     variant=variant)
    return frame[list(TRACE_FIELDS)].to_dict('records')


def _observable_problem(job: TrialJob, instance: Instance) -> optimizer.SensingProblem:
    ensemble = instance.ensemble
    return optimizer.SensingProblem(ensemble.strings, ensemble.observables.y_hat, job.configuration.r)


def variance_trial(job: TrialJob, streams: TrialStreams):
    """ MSE of y_hat against y over independent resamples of one random setting """
    c = job.configuration
    truth, _ = qcore.random_low_rank_state(c.n, c.r, streams.state)
    string = qcore.random_pauli_strings(c.n, 1, streams.settings)[0]
    setting = measurement.build_setting(string)
    p = measurement.povm_probabilities(setting, truth)
    y = float(setting.signs @ p)

    counts = measurement.sample_count_table(p, c.M, job.resamples, streams.shots)
    y_hat = counts @ setting.signs / c.M
    row = _row(job, 'observable', label=string.label, y=y, mse=float(np.mean((y_hat - y) ** 2)),
               exact_variance=(1 - y ** 2) / c.M, variance_bound=(2 - 2 / string.dim) / c.M)
    return [row], []


def descent_trial(job: TrialJob, streams: TrialStreams):
    """ spectral initialization followed by plain gradient descent """
    instance = _measured_instance(job, streams)
    problem = _observable_problem(job, instance)
    U0 = optimizer.spectral_init(problem)
    record = job.kind is StudyKind.CONVERGENCE
    trace = _descend(job, problem, U0, instance, Variant.PLAIN, record)
    traces = _trace_rows(job, Variant.PLAIN.value, trace) if record else []
    return [_row(job, Variant.PLAIN.value, **_run_metrics(trace, U0, instance))], traces


def constraint_trial(job: TrialJob, streams: TrialStreams):
    """ plain and Riemannian descent from one shared spectral initialization """
    instance = _measured_instance(job, streams)
    problem = _observable_problem(job, instance)
    U0 = optimizer.spectral_init(problem)
    rows, traces = [], []
    for variant in Variant:
        trace = _descend(job, problem, U0, instance, variant, True)
        rows.append(_row(job, variant.value, **_run_metrics(trace, U0, instance)))
        traces.extend(_trace_rows(job, variant.value, trace))
    return rows, traces


def basis_trial(job: TrialJob, streams: TrialStreams):
    """ observable loss against basis loss on the same shots and the same initialization """
    instance = _measured_instance(job, streams)
    observable = _observable_problem(job, instance)
    U0 = optimizer.spectral_init(observable)
    basis = optimizer.BasisProblem(instance.ensemble.strings, instance.ensemble.empirical_probabilities(),
                                   job.configuration.r)
    rows = []
    for variant, problem in (('observable', observable), ('basis', basis)):
        trace = _descend(job, problem, U0, instance, Variant.PLAIN, False)
        rows.append(_row(job, variant, **_run_metrics(trace, U0, instance)))
    return rows, []


def init_quality_trial(job: TrialJob, streams: TrialStreams):
    instance = _measured_instance(job, streams)
    U0 = optimizer.spectral_init(_observable_problem(job, instance))
    row = _row(job, 'spectral', init_error=qcore.recovery_error(U0, instance.rho),
               init_dist=qcore.dist(U0, instance.truth), init_sigma_r=qcore.sigma_r(U0))
    return [row], []


def operator_norm_trial(job: TrialJob, streams: TrialStreams):
    """ ||A*(e)|| / K of the empirical error vector """
    instance = _measured_instance(job, streams)
    ensemble = instance.ensemble
    value = measurement.operator_error_norm(ensemble.strings, ensemble.observables.e)
    return [_row(job, 'observable', operator_norm=value)], []


def bound_check_trial(job: TrialJob, streams: TrialStreams):
    """ converged descent against the recovery error bound for second-order critical points """
    instance = _measured_instance(job, streams)
    problem = _observable_problem(job, instance)
    U0 = optimizer.spectral_init(problem)
    trace = _descend(job, problem, U0, instance, Variant.PLAIN, False)
    metrics = _run_metrics(trace, U0, instance)

    ensemble = instance.ensemble
    rhs = optimizer.theorem_bound_rhs(job.delta, job.configuration.r, ensemble.strings, ensemble.observables.e)
    metrics.update(bound_rhs=rhs, bound_holds=bool(metrics['recovery_error'] <= rhs))
    return [_row(job, Variant.PLAIN.value, **metrics)], []


TRIALS: Dict[StudyKind, Callable] = {
    StudyKind.VARIANCE: variance_trial,
    StudyKind.CONVERGENCE: descent_trial,
    StudyKind.TRADEOFF: descent_trial,
    StudyKind.CONSTRAINT_COMPARE: constraint_trial,
    StudyKind.BASIS_VS_OBSERVABLE: basis_trial,
    StudyKind.INIT_QUALITY: init_quality_trial,
    StudyKind.OPERATOR_NORM: operator_norm_trial,
    StudyKind.BOUND_CHECK: bound_check_trial,
}


def run_trial(job: TrialJob, streams: Optional[TrialStreams] = None) -> TrialOutcome:
    """ runs one job in the calling process; module-level so that worker pools can pickle it """
    try:
        body = TRIALS[job.kind]
    except KeyError:
        raise ValueError(f'can not run trials of kind {job.kind}')
    started = time.perf_counter()
    rows, traces = body(job, streams or trial_streams(job.seed))
    return TrialOutcome(rows, traces, (time.perf_counter() - started) * 1000)


class InstanceRun(NamedTuple):
    instance: Instance
    init: qcore.FactorMatrix
    trace: RunTrace


def simulate_instance(job: TrialJob, streams: Optional[TrialStreams] = None) -> InstanceRun:
    """ one measured instance and its recorded plain descent from the spectral initialization """
    instance = _measured_instance(job, streams or trial_streams(job.seed))
    problem = _observable_problem(job, instance)
    U0 = optimizer.spectral_init(problem)
    trace = _descend(job, problem, U0, instance, Variant.PLAIN, True)
    return InstanceRun(instance, U0, trace)
