"""
SVG line plots of study results.

Rendering goes through matplotlib's SVG canvas without pyplot, with a fixed hash salt and no
date metadata so that identical input gives identical bytes.
"""
import io
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
from matplotlib.ticker import LogLocator

from QstLab_Project import settings
from experiment.config import StudyKind
from tomography.exceptions import DimensionException, DomainException

logger = logging.getLogger(__name__)

Series = Dict[str, Tuple[Sequence[float], Sequence[float]]]

_RC = {
    'svg.hashsalt': settings.PLOT_HASH_SALT,
    'svg.fonttype': 'path',
    'path.simplify': False,
}


@dataclass(frozen=True)
class AxesConfig:
    title: str = ''
    xlabel: str = ''
    ylabel: str = ''
    log_x: bool = False
    log_y: bool = True


def _clean(name: str, x, y, axes: AxesConfig) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise DimensionException(f'series {name!r} has x of shape {x.shape} and y of shape {y.shape}')
    keep = np.isfinite(x) & np.isfinite(y)
    if axes.log_y:
        keep &= y > 0
    if axes.log_x:
        keep &= x > 0
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        logger.warning('dropped %d point(s) of series %r that can not be drawn', dropped, name)
    return x[keep], y[keep]


def build_figure(series: Series, axes: AxesConfig) -> Figure:
    if not series:
        raise DomainException('nothing to plot')
    figure = Figure(figsize=(settings.PLOT_WIDTH_INCHES, settings.PLOT_HEIGHT_INCHES))
    FigureCanvasSVG(figure)
    ax = figure.add_subplot()

    for i, (name, (x, y)) in enumerate(series.items()):
        x, y = _clean(name, x, y, axes)
        ax.plot(x, y, marker='o', markersize=3, label=name, gid=f'series-{i}')

    if axes.log_y:
        ax.set_yscale('log')
        ax.yaxis.set_major_locator(LogLocator(base=10))
    if axes.log_x:
        ax.set_xscale('log')
    ax.set_title(axes.title)
    ax.set_xlabel(axes.xlabel)
    ax.set_ylabel(axes.ylabel)
    ax.grid(True, which='major', alpha=0.3)
    ax.legend()
    figure.tight_layout()
    return figure


def emit_plot(series: Series, axes: AxesConfig) -> str:
    """
    :param series: legend name -> (x values, y values), drawn in insertion order
    :param axes: labels and log scales
    :return: standalone SVG document
    """
    with matplotlib.rc_context(_RC):
        figure = build_figure(series, axes)
        buffer = io.StringIO()
        figure.savefig(buffer, format='svg', metadata={'Date': None})
    return buffer.getvalue()


def _by(frame: pd.DataFrame, columns: List[str], label) -> Series:
    series = {}
    for key, group in frame.groupby(columns, sort=True):
        key = key if isinstance(key, tuple) else (key,)
        series[label(*key)] = group
    return series


def _aggregate_series(aggregates: pd.DataFrame, metric: str, x: str, split: List[str], label,
                      statistic: str = 'median') -> Series:
    chosen = aggregates[aggregates['metric'] == metric].sort_values(x)
    return {name: (group[x].to_numpy(), group[statistic].to_numpy())
            for name, group in _by(chosen, split, label).items()}


def _trace_series(traces: pd.DataFrame, y: str, split: List[str], label) -> Series:
    series = {}
    for name, group in _by(traces, split, label).items():
        median = group.groupby('iter', sort=True)[y].median()
        series[name] = (median.index.to_numpy(), median.to_numpy())
    return series


def _sized(label=None):
    """ series label led by the qubit count and rank, then label(*rest) of the remaining keys """
    def keyed(n, r, *rest):
        name = f'n={n}, r={r}'
        return f'{name}, {label(*rest)}' if label else name
    return keyed


def study_plot(kind: StudyKind, aggregates: pd.DataFrame, traces: pd.DataFrame) -> Tuple[Series, AxesConfig]:
    """ the default figure of a study kind, drawn from its aggregate and trace tables """
    kind = StudyKind(kind)
    if kind is StudyKind.VARIANCE:
        return (_aggregate_series(aggregates, 'mse', 'M', ['n', 'r'], _sized(), 'mean'),
                AxesConfig('variance of empirical observables', 'M', 'MSE', log_x=True))
    if kind is StudyKind.CONVERGENCE:
        return (_trace_series(traces, 'loss', ['n', 'r'], _sized()),
                AxesConfig('convergence', 'iteration', 'loss'))
    if kind is StudyKind.CONSTRAINT_COMPARE:
        return (_trace_series(traces, 'recovery_error', ['n', 'r', 'variant'], _sized(str)),
                AxesConfig('plain vs Riemannian descent', 'iteration', 'recovery error'))
    if kind is StudyKind.TRADEOFF:
        return (_aggregate_series(aggregates, 'recovery_error', 'M', ['n', 'r'], _sized()),
                AxesConfig('fixed budget N = KM', 'M', 'median recovery error', log_x=True))
    if kind is StudyKind.BASIS_VS_OBSERVABLE:
        return (_aggregate_series(aggregates, 'recovery_error', 'M', ['n', 'r', 'variant'], _sized(str)),
                AxesConfig('basis vs observable measurements', 'M', 'median recovery error', log_x=True))
    if kind is StudyKind.INIT_QUALITY:
        return (_aggregate_series(aggregates, 'init_error', 'K', ['n', 'r', 'M'],
                                  _sized(lambda M: f'M={M}')),
                AxesConfig('spectral initialization', 'K', 'median initial error', log_x=True))
    if kind is StudyKind.OPERATOR_NORM:
        return (_aggregate_series(aggregates, 'operator_norm', 'K', ['n', 'r', 'M'],
                                  _sized(lambda M: f'M={M}'), 'mean'),
                AxesConfig('operator norm of the error', 'K', 'mean operator norm', log_x=True))
    if kind is StudyKind.BOUND_CHECK:
        series = {}
        for metric in ('recovery_error', 'bound_rhs'):
            series.update(_aggregate_series(aggregates, metric, 'K', ['n', 'r', 'M'],
                                            _sized(lambda M: f'{metric}, M={M}')))
        return series, AxesConfig('error bound check', 'K', 'median value', log_x=True)
    raise DomainException(f'no plot for study kind {kind}')


def h_curve_plot(deltas, values) -> Tuple[Series, AxesConfig]:
    return {'h': (deltas, values)}, AxesConfig('error bound factor', 'delta', 'h(delta)', log_y=False)


def run_trace_plot(trace: pd.DataFrame) -> Tuple[Series, AxesConfig]:
    """ loss and recovery error of one recorded run, from a trace.csv frame """
    x = trace['iter'].to_numpy()
    return ({'loss': (x, trace['loss'].to_numpy()), 'recovery error': (x, trace['recovery_error'].to_numpy())},
            AxesConfig('single run', 'iteration', 'value'))
