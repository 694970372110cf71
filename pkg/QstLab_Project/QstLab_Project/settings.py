"""
Settings for the qst-lab project.

Every tunable default of the library, the study runner and the command line lives here
as a module constant. Study configs and command-line flags override the study-level values;
the numerical tolerances are not meant to be changed per run.
"""

from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

VERSION = '0.3.0'

# Numerical tolerances
HERMITIAN_TOLERANCE = 1e-8
EIGEN_RESIDUAL_TOLERANCE = 1e-10
PROBABILITY_CLIP = 1e-14
NEGATIVE_PROBABILITY_TOLERANCE = 1e-9
DEGENERATE_STEP_NORM = 1e-14

POWER_ITERATION_MAX_ITER = 20_000
POWER_ITERATION_TOLERANCE = 1e-13

# Desk-scale caps: dense paths hold D x D matrices, studies run many of them
MAX_DENSE_QUBITS = 12
MAX_STUDY_QUBITS = 8

# Optimizer
DEFAULT_ITERATION_CAP = 3000
GRADIENT_TOLERANCE = 1e-9
DIVERGENCE_FACTOR = 1e6
TRACE_DECIMATION_START = 1000
TRACE_DECIMATION_STEP = 10

# error_bound_h is only defined up to the theorem's cap
DEFAULT_DELTA = 0.09

# Studies
DEFAULT_TRIALS = 20
VARIANCE_TRIALS = 100
VARIANCE_RESAMPLES = 1000
DEFAULT_SEED = 2024

DEFAULT_STEP_SIZES = {
    'variance': 0.3,
    'convergence': 0.3,
    'tradeoff': 0.05,
    'constraint-compare': 0.1,
    'basis-vs-observable': 0.5,
    'init-quality': 0.3,
    'operator-norm': 0.3,
    'bound-check': 0.3,
}

# (n values, r values, K values, M values, N) per study kind.
# N values are desk-scale choices and are labeled as such in the manifest.
DEFAULT_STUDY_PARAMETERS = {
    'variance': {'n_values': [1, 3, 5], 'r_values': [1], 'K': [1], 'M': [10, 100, 1000]},
    'convergence': {'n_values': [4, 5, 6], 'r_values': [2], 'K': [2000], 'M': [100]},
    'tradeoff': {'n_values': [4], 'r_values': [1], 'K': [], 'M': [1, 4, 16, 64, 256], 'N': 2 ** 16},
    'constraint-compare': {'n_values': [4], 'r_values': [1], 'K': [4000], 'M': [50]},
    'basis-vs-observable': {'n_values': [4], 'r_values': [1], 'K': [], 'M': [1, 4, 16, 64], 'N': 2 ** 14},
    'init-quality': {'n_values': [4], 'r_values': [1], 'K': [200, 500, 1000, 2000], 'M': [100]},
    'operator-norm': {'n_values': [4], 'r_values': [1], 'K': [250, 500, 1000, 2000], 'M': [25, 50, 100, 200]},
    'bound-check': {'n_values': [4], 'r_values': [1], 'K': [2000], 'M': [100]},
}

# one instance for the simulate command
SIMULATE_PARAMETERS = {'n': 3, 'r': 1, 'K': 500, 'M': 100}

# Command line
THREADS_ENV_VAR = 'QST_LAB_THREADS'
OUTPUT_DIR = 'results'
H_CURVE_POINTS = 100

# Plots
PLOT_WIDTH_INCHES = 6.5
PLOT_HEIGHT_INCHES = 4.5
PLOT_HASH_SALT = 'qst-lab'

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'INFO',
    },
    'loggers': {
        'matplotlib': {
            'level': 'WARNING',
        },
    },
}
