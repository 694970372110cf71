"""
Runs a study: expands the config into trial jobs, fans them out to a worker pool and collects
the rows in (config, trial) order.
"""
import logging
from dataclasses import dataclass
from datetime import datetime
from multiprocessing import Pool
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from QstLab_Project import settings
import utils
from experiment.config import TRACED_KINDS, StudyConfig
from experiment.trials import (KEY_FIELDS, METRIC_FIELDS, TRACE_FIELDS, InstanceRun, TrialJob, TrialOutcome,
                               run_trial, simulate_instance)
from tomography import optimizer, qcore, serializers

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

AGGREGATE_KEYS = ('kind', 'config', 'n', 'r', 'K', 'M', 'N', 'variant')
AGGREGATE_FIELDS = AGGREGATE_KEYS + ('metric', 'count', 'mean', 'median', 'sem')
TIMING_FIELDS = ('config', 'trial', 'seed', 'wall_clock_ms')

# bookkeeping columns that are never aggregated
_NOT_METRICS = ('trial', 'seed', 'mu')


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def fnv1a64(label: str) -> int:
    h = _FNV_OFFSET
    for byte in label.encode('utf8'):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def derive_trial_seed(master: int, study: str, config_index: int, trial_index: int) -> int:
    """
    64-bit trial seed, portable across implementations:
        h = splitmix64(master mod 2^64)
        h = splitmix64(h ^ fnv1a64(study))
        h = splitmix64(h ^ config_index)
        seed = splitmix64(h ^ trial_index)
    """
    h = splitmix64(master & _MASK64)
    for value in (fnv1a64(study), config_index & _MASK64, trial_index & _MASK64):
        h = splitmix64(h ^ value)
    return h


@dataclass
class StudyResult:
    config: StudyConfig
    results: pd.DataFrame
    aggregates: pd.DataFrame
    traces: pd.DataFrame
    timings: pd.DataFrame
    started: str
    finished: str

    def write(self, out: Optional[Union[str, Path]] = None) -> Path:
        """
        Writes results.csv, aggregate.csv, timings.csv, manifest.json and, for traced studies, traces.csv.
        :param out: parent folder, the config's output folder by default
        :return: the study folder <out>/<kind>-<timestamp>
        """
        stamp = datetime.fromisoformat(self.started).strftime('%Y%m%d-%H%M%S')
        folder = Path(out or self.config.out) / f'{self.config.kind.value}-{stamp}'
        folder.mkdir(parents=True, exist_ok=True)

        self.results.to_csv(folder / 'results.csv', index=False)
        self.aggregates.to_csv(folder / 'aggregate.csv', index=False)
        self.timings.to_csv(folder / 'timings.csv', index=False)
        if self.config.kind in TRACED_KINDS:
            self.traces.to_csv(folder / 'traces.csv', index=False)
        utils.dump_json(self.manifest(), folder / 'manifest.json')
        logger.info('wrote %s study to %s', self.config.kind, folder)
        return folder

    def manifest(self) -> dict:
        manifest = {
            'config': self.config.to_json(),
            'version': settings.VERSION,
            'started': self.started,
            'finished': self.finished,
            'configurations': len(self.config.configurations()),
            'rows': len(self.results),
        }
        if self.config.N is not None:
            manifest['note'] = 'N is a desk-scale copy budget chosen for runtime'
        return manifest


def _job(cfg: StudyConfig, configuration, trial: int, study: str) -> TrialJob:
    return TrialJob(kind=cfg.kind,
                    configuration=configuration,
                    trial=trial,
                    seed=derive_trial_seed(cfg.seed, study, configuration.index, trial),
                    step_size=cfg.step_size,
                    max_iterations=cfg.max_iterations,
                    tolerance=cfg.tolerance,
                    delta=cfg.delta,
                    resamples=cfg.resamples)


def _jobs(cfg: StudyConfig) -> List[TrialJob]:
    return [_job(cfg, configuration, trial, cfg.kind.value)
            for configuration in cfg.configurations() for trial in range(cfg.trials)]


def _execute(jobs: List[TrialJob], workers: int, progress: bool) -> List[TrialOutcome]:
    bar = tqdm(total=len(jobs), disable=not progress, unit='trial')
    outcomes = []
    if workers == 1:
        for job in jobs:
            outcomes.append(run_trial(job))
            bar.update()
    else:
        with Pool(min(workers, len(jobs))) as pool:
            for outcome in pool.imap(run_trial, jobs):
                outcomes.append(outcome)
                bar.update()
    bar.close()
    return outcomes


def run_study(cfg: StudyConfig, workers: Optional[int] = None, progress: bool = True) -> StudyResult:
    """
    :param cfg: study config, validated before any work starts
    :param workers: pool size, QST_LAB_THREADS / the cpu count by default; 1 runs inline
    :param progress: show a tqdm bar over trials
    """
    cfg.validate()
    workers = workers or utils.worker_count()
    jobs = _jobs(cfg)
    started = datetime.now().isoformat(timespec='seconds')
    logger.info('running %s study: %d configurations x %d trials on %d workers',
                cfg.kind, len(cfg.configurations()), cfg.trials, workers)

    outcomes = _execute(jobs, workers, progress)
    order = sorted(range(len(jobs)), key=lambda i: (jobs[i].configuration.index, jobs[i].trial))

    rows, traces, timings = [], [], []
    for i in order:
        job, outcome = jobs[i], outcomes[i]
        rows.extend(outcome.rows)
        traces.extend(outcome.traces)
        timings.append((job.configuration.index, job.trial, job.seed, outcome.elapsed_ms))

    results = pd.DataFrame(rows, columns=KEY_FIELDS + METRIC_FIELDS[cfg.kind])
    finished = datetime.now().isoformat(timespec='seconds')
    logger.info('%s study finished with %d rows', cfg.kind, len(results))
    return StudyResult(config=cfg,
                       results=results,
                       aggregates=aggregate(results),
                       traces=pd.DataFrame(traces, columns=TRACE_FIELDS),
                       timings=pd.DataFrame(timings, columns=TIMING_FIELDS),
                       started=started,
                       finished=finished)


def aggregate(rows) -> pd.DataFrame:
    """
    Mean, median and standard error of every numeric metric per configuration.
    :param rows: per-trial rows, a DataFrame or a list of dicts
    :return: one row per (configuration, metric); groups without finite values are skipped
    """
    rows = pd.DataFrame(rows)
    if rows.empty:
        logger.warning('no rows to aggregate')
        return pd.DataFrame(columns=AGGREGATE_FIELDS)

    keys = [key for key in AGGREGATE_KEYS if key in rows.columns]
    metrics = [column for column in rows.columns
               if column not in keys and column not in _NOT_METRICS
               and pd.api.types.is_numeric_dtype(rows[column])]
    groups = rows.groupby(keys, sort=True) if keys else [((), rows)]

    records = []
    for key, group in groups:
        key = key if isinstance(key, tuple) else (key,)
        for metric in metrics:
            values = group[metric].to_numpy(dtype=np.float64)
            values = values[np.isfinite(values)]
            if values.size == 0:
                logger.warning('no finite %s values for %s, group skipped', metric, dict(zip(keys, key)))
                continue
            sem = float(np.std(values, ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
            record = dict(zip(keys, key))
            record.update(metric=metric, count=values.size, mean=float(np.mean(values)),
                          median=float(np.median(values)), sem=sem)
            records.append(record)
    return pd.DataFrame(records, columns=[*keys, 'metric', 'count', 'mean', 'median', 'sem'])


@dataclass
class InstanceResult:
    """ one measured instance with its data, truth and estimate """
    config: StudyConfig
    seed: int
    run: InstanceRun
    started: str

    def write(self, out: Optional[Union[str, Path]] = None) -> Path:
        """
        Writes shots.csv, observables.csv, trace.csv, truth.json, estimate.json and manifest.json.
        :return: the folder <out>/simulate-<timestamp>
        """
        stamp = datetime.fromisoformat(self.started).strftime('%Y%m%d-%H%M%S')
        folder = Path(out or self.config.out) / f'simulate-{stamp}'
        folder.mkdir(parents=True, exist_ok=True)

        instance, trace = self.run.instance, self.run.trace
        serializers.shot_records_frame(instance.ensemble.records).to_csv(folder / 'shots.csv', index=False)
        serializers.observables_frame(instance.ensemble.observables).to_csv(folder / 'observables.csv',
                                                                             index=False)
        serializers.run_trace_frame(trace).to_csv(folder / 'trace.csv', index=False)
        utils.dump_json({'factor': serializers.matrix_to_json(instance.truth),
                         'density': serializers.matrix_to_json(instance.rho)}, folder / 'truth.json')
        utils.dump_json({'init': serializers.matrix_to_json(self.run.init),
                         'factor': serializers.matrix_to_json(trace.final),
                         'physical': serializers.matrix_to_json(optimizer.physical_projection(trace.final))},
                        folder / 'estimate.json')
        utils.dump_json(self.manifest(), folder / 'manifest.json')
        logger.info('wrote simulated instance to %s', folder)
        return folder

    def manifest(self) -> dict:
        trace = self.run.trace
        return {
            'kind': 'simulate',
            'config': self.config.to_json(),
            'version': settings.VERSION,
            'started': self.started,
            'seed': self.seed,
            'strings': [s.label for s in self.run.instance.ensemble.strings],
            'iterations': trace.iterations,
            'stop_reason': trace.stop_reason.value,
            'recovery_error': qcore.recovery_error(trace.final, self.run.instance.rho),
        }


def simulate(cfg: StudyConfig) -> InstanceResult:
    """
    Draws the instance of the first grid point of cfg, measures it and recovers it once.
    The seed is derived like a trial seed under the study name "simulate".
    """
    cfg.validate()
    job = _job(cfg, cfg.configurations()[0], 0, 'simulate')
    started = datetime.now().isoformat(timespec='seconds')
    c = job.configuration
    logger.info('simulating n=%d r=%d with K=%d settings x M=%d shots', c.n, c.r, c.K, c.M)
    return InstanceResult(config=cfg, seed=job.seed, run=simulate_instance(job), started=started)
