"""
Flat representations of library values: matrices as JSON, records and traces as pandas frames.
"""
from typing import Dict, Iterable, List

import numpy as np
import pandas as pd

from tomography.exceptions import DimensionException
from tomography.measurement import ObservableVector, ShotRecord
from tomography.optimizer import RunTrace
from tomography.qcore import DensityMatrix, FactorMatrix, Matrix, as_array

SHOT_RECORD_FIELDS = ('k', 'j', 'count', 'M')
OBSERVABLE_FIELDS = ('k', 'y', 'y_hat', 'e')
RUN_TRACE_FIELDS = ('iter', 'loss', 'grad_norm', 'dist_to_true', 'recovery_error')


def matrix_to_json(matrix: Matrix) -> Dict:
    """
    :return: {"rows", "cols", "entries"} with entries as row-major [re, im] pairs
    """
    array = as_array(matrix)
    if array.ndim != 2:
        raise DimensionException(f'expected a matrix, got an array of shape {array.shape}')
    entries = np.stack([array.real, array.imag], axis=-1).reshape(-1, 2)
    return {'rows': array.shape[0], 'cols': array.shape[1], 'entries': entries.tolist()}


def matrix_from_json(data: Dict) -> np.ndarray:
    try:
        rows, cols, entries = int(data['rows']), int(data['cols']), data['entries']
    except KeyError as e:
        raise DimensionException(f'can not parse matrix, missing key {e}')
    pairs = np.asarray(entries, dtype=np.float64)
    if pairs.shape != (rows * cols, 2):
        raise DimensionException(f'{len(entries)} entries for a {rows}x{cols} matrix')
    return (pairs[:, 0] + 1j * pairs[:, 1]).reshape(rows, cols)


def density_from_json(data: Dict, physical: bool = False) -> DensityMatrix:
    return DensityMatrix(matrix_from_json(data), physical=physical)


def factor_from_json(data: Dict) -> FactorMatrix:
    return FactorMatrix(matrix_from_json(data))


def shot_records_frame(records: Iterable[ShotRecord]) -> pd.DataFrame:
    """ long form, one row per (setting, outcome) """
    rows: List[tuple] = []
    for record in records:
        rows.extend((record.k, j, int(count), record.shots) for j, count in enumerate(record.counts))
    return pd.DataFrame(rows, columns=SHOT_RECORD_FIELDS)


def observables_frame(observables: ObservableVector) -> pd.DataFrame:
    return pd.DataFrame({
        'k': np.arange(observables.K),
        'y': observables.y,
        'y_hat': observables.y_hat,
        'e': observables.e,
    }, columns=OBSERVABLE_FIELDS)


def run_trace_frame(trace: RunTrace) -> pd.DataFrame:
    return pd.DataFrame([tuple(record) for record in trace.records], columns=RUN_TRACE_FIELDS)

