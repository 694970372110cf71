"""
qst-lab command line.

Every study subcommand reads an optional JSON config (--config) and applies the flags on top of it.
Outputs go to <out>/<study>-<timestamp>/.
"""
import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from QstLab_Project import settings
import utils
from cli.plotting import emit_plot, h_curve_plot, run_trace_plot, study_plot
from experiment.config import StudyConfig, StudyKind
from experiment.runner import run_study, simulate
from tomography import optimizer, serializers
from tomography.exceptions import QstLabException

logger = logging.getLogger(__name__)

PROG = 'qst-lab'

STUDY_COMMANDS: Dict[str, StudyKind] = {
    'variance': StudyKind.VARIANCE,
    'converge': StudyKind.CONVERGENCE,
    'tradeoff': StudyKind.TRADEOFF,
    'compare-constraint': StudyKind.CONSTRAINT_COMPARE,
    'compare-basis': StudyKind.BASIS_VS_OBSERVABLE,
    'init-quality': StudyKind.INIT_QUALITY,
    'operator-norm': StudyKind.OPERATOR_NORM,
    'bound-check': StudyKind.BOUND_CHECK,
}

_HELP = {
    'variance': 'MSE of empirical Pauli observables against the shot count M',
    'converge': 'loss and error trajectories of gradient descent',
    'tradeoff': 'recovery error at a fixed copy budget N = K M',
    'compare-constraint': 'plain against Riemannian (unit-norm) gradient descent',
    'compare-basis': 'Pauli basis measurements against Pauli observable measurements',
    'init-quality': 'error of the spectral initialization against K',
    'operator-norm': 'operator norm of the measurement error over a K x M grid',
    'bound-check': 'achieved recovery error against the error bound',
    'run': 'run the study named by the "kind" key of --config',
    'h-curve': 'tabulate the error bound factor h(delta) on [0, 0.09]',
    'simulate': 'measure and recover one random state, writing its data and matrices',
    'plot': 're-render plot.svg of an existing study folder',
}


class CliConfigException(QstLabException, ValueError):
    pass


def int_list(text: str) -> List[int]:
    """ comma-separated integers, e.g. 1,4,16 """
    try:
        values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'can not parse integer list from {text!r}')
    if not values:
        raise argparse.ArgumentTypeError('empty list')
    return values


class _Parser(argparse.ArgumentParser):
    """ reports usage errors as exceptions so run_cli can return a status instead of exiting """

    def __init__(self, *args, **kwargs):
        kwargs.setdefault('allow_abbrev', False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliConfigException(message)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--out', help=f'output folder (default: {settings.OUTPUT_DIR})')
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    parser.add_argument('--quiet', action='store_true', help='no progress bar')


def _add_study_flags(parser: argparse.ArgumentParser, config_required: bool = False) -> None:
    parser.add_argument('--config', required=config_required, help='JSON study config with kebab-case keys')
    parser.add_argument('--n', type=int_list, help='qubit counts, comma separated')
    parser.add_argument('--r', type=int_list, help='ranks, comma separated')
    parser.add_argument('--K', type=int_list, help='numbers of measurement settings, comma separated')
    parser.add_argument('--M', type=int_list, help='shots per setting, comma separated')
    parser.add_argument('--N', type=int, help='fixed copy budget N = K M (tradeoff, compare-basis)')
    parser.add_argument('--mu', type=float, help='step size')
    parser.add_argument('--trials', type=int, help='Monte Carlo trials per configuration')
    parser.add_argument('--seed', type=int, help='master seed')
    parser.add_argument('--iteration-cap', type=int, help='gradient descent iteration cap')
    parser.add_argument('--delta', type=float, help='RIP constant for bound-check, in [0, 0.09]')
    parser.add_argument('--resamples', type=int, help='shot resamples per trial (variance)')
    parser.add_argument('--workers', type=int, help=f'worker processes (default: ${settings.THREADS_ENV_VAR} '
                                                    f'or the cpu count)')
    _add_common(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description='Pauli measurement state tomography lab')
    parser.add_argument('--version', action='version', version=f'%(prog)s {settings.VERSION}')
    commands = parser.add_subparsers(dest='command', required=True, metavar='command', parser_class=_Parser)

    for name in STUDY_COMMANDS:
        _add_study_flags(commands.add_parser(name, help=_HELP[name], description=_HELP[name]))
    _add_study_flags(commands.add_parser('run', help=_HELP['run'], description=_HELP['run']),
                     config_required=True)

    h_curve = commands.add_parser('h-curve', help=_HELP['h-curve'], description=_HELP['h-curve'])
    h_curve.add_argument('--points', type=int, default=settings.H_CURVE_POINTS, help='grid points')
    _add_common(h_curve)

    simulated = commands.add_parser('simulate', help=_HELP['simulate'], description=_HELP['simulate'])
    defaults = settings.SIMULATE_PARAMETERS
    simulated.add_argument('--n', type=int, default=defaults['n'], help='qubits')
    simulated.add_argument('--r', type=int, default=defaults['r'], help='rank of the state')
    simulated.add_argument('--K', type=int, default=defaults['K'], help='measurement settings')
    simulated.add_argument('--M', type=int, default=defaults['M'], help='shots per setting')
    simulated.add_argument('--mu', type=float, help='step size')
    simulated.add_argument('--seed', type=int, help='master seed')
    simulated.add_argument('--iteration-cap', type=int, help='gradient descent iteration cap')
    _add_common(simulated)

    plot = commands.add_parser('plot', help=_HELP['plot'], description=_HELP['plot'])
    plot.add_argument('folder', help='study folder holding manifest.json')
    _add_common(plot)
    return parser


def study_config(command: str, args: argparse.Namespace) -> StudyConfig:
    """ config file (if any) for the subcommand's study kind, overridden by the flags """
    kind = STUDY_COMMANDS.get(command)
    if args.config:
        cfg = StudyConfig.from_json(args.config, kind)
    else:
        cfg = StudyConfig.defaults(kind)
    cfg = cfg.with_overrides(n_values=args.n, r_values=args.r, K=args.K, M=args.M, N=args.N,
                             step_size=args.mu, trials=args.trials, seed=args.seed,
                             max_iterations=args.iteration_cap, delta=args.delta, resamples=args.resamples,
                             out=args.out)
    return cfg.validate()


def _write_plot(folder: Path, kind: StudyKind, aggregates: pd.DataFrame, traces: pd.DataFrame) -> None:
    series, axes = study_plot(kind, aggregates, traces)
    (folder / 'plot.svg').write_text(emit_plot(series, axes), encoding='utf8')


def run_study_command(command: str, args: argparse.Namespace) -> Path:
    cfg = study_config(command, args)
    result = run_study(cfg, workers=args.workers, progress=not args.quiet)
    folder = result.write()
    _write_plot(folder, cfg.kind, result.aggregates, result.traces)
    print(folder)
    return folder


def h_curve_command(args: argparse.Namespace) -> Path:
    if args.points < 2:
        raise CliConfigException(f'h-curve needs at least 2 points, got {args.points}')
    deltas = np.linspace(0.0, settings.DEFAULT_DELTA, args.points)
    values = np.array([optimizer.error_bound_h(delta) for delta in deltas])

    folder = Path(args.out or settings.OUTPUT_DIR) / f'h-curve-{datetime.now().strftime("%Y%m%d-%H%M%S")}'
    folder.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({'delta': deltas, 'h': values}).to_csv(folder / 'results.csv', index=False)
    utils.dump_json({'kind': 'h-curve', 'points': args.points, 'version': settings.VERSION},
                    folder / 'manifest.json')
    series, axes = h_curve_plot(deltas, values)
    (folder / 'plot.svg').write_text(emit_plot(series, axes), encoding='utf8')
    logger.info('h(0) = %.6f, h(%.2f) = %.6f', values[0], deltas[-1], values[-1])
    print(folder)
    return folder


def simulate_command(args: argparse.Namespace) -> Path:
    cfg = StudyConfig.defaults(StudyKind.CONVERGENCE).with_overrides(
        n_values=(args.n,), r_values=(args.r,), K=(args.K,), M=(args.M,), trials=1, step_size=args.mu,
        seed=args.seed, max_iterations=args.iteration_cap, out=args.out)
    result = simulate(cfg.validate())
    folder = result.write()
    series, axes = run_trace_plot(serializers.run_trace_frame(result.run.trace))
    (folder / 'plot.svg').write_text(emit_plot(series, axes), encoding='utf8')
    print(folder)
    return folder


def plot_command(args: argparse.Namespace) -> Path:
    folder = Path(args.folder)
    try:
        manifest = utils.load_json(folder / 'manifest.json')
    except FileNotFoundError:
        raise CliConfigException(f'{folder} holds no manifest.json')

    kind = manifest.get('kind') or manifest.get('config', {}).get('kind')
    if kind == 'h-curve':
        table = pd.read_csv(folder / 'results.csv')
        series, axes = h_curve_plot(table['delta'], table['h'])
        (folder / 'plot.svg').write_text(emit_plot(series, axes), encoding='utf8')
    elif kind == 'simulate':
        series, axes = run_trace_plot(pd.read_csv(folder / 'trace.csv'))
        (folder / 'plot.svg').write_text(emit_plot(series, axes), encoding='utf8')
    else:
        traces_path = folder / 'traces.csv'
        traces = pd.read_csv(traces_path) if traces_path.exists() else pd.DataFrame()
        _write_plot(folder, StudyKind(kind), pd.read_csv(folder / 'aggregate.csv'), traces)
    print(folder / 'plot.svg')
    return folder


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    :param argv: arguments without the program name, sys.argv[1:] by default
    :return: exit status, 0 on success and 2 on usage or config errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliConfigException as e:
        print(f'{PROG}: error: {e}', file=sys.stderr)
        return 2
    except SystemExit as e:
        # --help and --version
        return e.code or 0

    utils.setup_logging(args.verbose)
    try:
        if args.command == 'h-curve':
            h_curve_command(args)
        elif args.command == 'plot':
            plot_command(args)
        elif args.command == 'simulate':
            simulate_command(args)
        else:
            run_study_command(args.command, args)
    except (QstLabException, ValueError, OSError) as e:
        print(f'{PROG}: error: {e}', file=sys.stderr)
        return 2
    return 0
