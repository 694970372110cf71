from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Tuple

from QstLab_Project import settings
import utils
from tomography.exceptions import StudyConfigException


class StudyKind(str, Enum):
    """ experiment family a study reproduces """
    VARIANCE = 'variance'
    CONVERGENCE = 'convergence'
    TRADEOFF = 'tradeoff'
    CONSTRAINT_COMPARE = 'constraint-compare'
    BASIS_VS_OBSERVABLE = 'basis-vs-observable'
    INIT_QUALITY = 'init-quality'
    OPERATOR_NORM = 'operator-norm'
    BOUND_CHECK = 'bound-check'

    def __str__(self):
        return self.value


# K is derived as N / M for these
BUDGET_KINDS = (StudyKind.TRADEOFF, StudyKind.BASIS_VS_OBSERVABLE)

# kinds whose runs record loss / error trajectories
TRACED_KINDS = (StudyKind.CONVERGENCE, StudyKind.CONSTRAINT_COMPARE)

# config file key -> StudyConfig field
_JSON_KEYS = {
    'kind': 'kind',
    'n': 'n_values',
    'r': 'r_values',
    'K': 'K',
    'M': 'M',
    'N': 'N',
    'mu': 'step_size',
    'trials': 'trials',
    'seed': 'seed',
    'iteration-cap': 'max_iterations',
    'tolerance': 'tolerance',
    'delta': 'delta',
    'resamples': 'resamples',
    'out': 'out',
}

_LIST_FIELDS = ('n_values', 'r_values', 'K', 'M')


class Configuration(NamedTuple):
    """ one point of a study grid """
    index: int
    n: int
    r: int
    K: int
    M: int


@dataclass(frozen=True)
class StudyConfig:
    kind: StudyKind
    n_values: Tuple[int, ...]
    r_values: Tuple[int, ...]
    K: Tuple[int, ...] = ()
    M: Tuple[int, ...] = ()
    N: Optional[int] = None
    step_size: float = 0.3
    trials: int = settings.DEFAULT_TRIALS
    seed: int = settings.DEFAULT_SEED
    max_iterations: int = settings.DEFAULT_ITERATION_CAP
    tolerance: float = settings.GRADIENT_TOLERANCE
    delta: float = settings.DEFAULT_DELTA
    resamples: int = settings.VARIANCE_RESAMPLES
    out: str = settings.OUTPUT_DIR

    def __post_init__(self):
        try:
            object.__setattr__(self, 'kind', StudyKind(self.kind))
        except ValueError:
            raise StudyConfigException(f'can not parse study kind from {self.kind!r}')
        for name in _LIST_FIELDS:
            value = getattr(self, name)
            if isinstance(value, int):
                value = (value,)
            try:
                object.__setattr__(self, name, tuple(int(v) for v in value))
            except (TypeError, ValueError):
                raise StudyConfigException(f'can not parse {name} from {value!r}')

    @classmethod
    def defaults(cls, kind) -> 'StudyConfig':
        """ the study's default grid, step size and trial count from settings """
        try:
            kind = StudyKind(kind)
        except ValueError:
            raise StudyConfigException(f'can not parse study kind from {kind!r}')
        parameters = settings.DEFAULT_STUDY_PARAMETERS[kind.value]
        trials = settings.VARIANCE_TRIALS if kind is StudyKind.VARIANCE else settings.DEFAULT_TRIALS
        return cls(kind=kind,
                   n_values=parameters['n_values'],
                   r_values=parameters['r_values'],
                   K=parameters['K'],
                   M=parameters['M'],
                   N=parameters.get('N'),
                   step_size=settings.DEFAULT_STEP_SIZES[kind.value],
                   trials=trials)

    @classmethod
    def from_dict(cls, data: Dict, kind=None) -> 'StudyConfig':
        """
        Builds a config from kebab-case keys on top of the kind's defaults.
        :param data: parsed config file
        :param kind: study kind, required when data has no "kind" key
        """
        unknown = sorted(set(data) - set(_JSON_KEYS))
        if unknown:
            raise StudyConfigException(f'unknown config keys: {", ".join(unknown)}')
        if 'kind' in data and kind is not None and str(data['kind']) != str(kind):
            raise StudyConfigException(f'config file holds a {data["kind"]} study, not {kind}')
        kind = data.get('kind', kind)
        if kind is None:
            raise StudyConfigException('config does not name a study kind')
        overrides = {_JSON_KEYS[key]: value for key, value in data.items() if key != 'kind'}
        return cls.defaults(kind).with_overrides(**overrides)

    @classmethod
    def from_json(cls, path: str, kind=None) -> 'StudyConfig':
        try:
            data = utils.load_json(path)
        except FileNotFoundError:
            raise StudyConfigException(f'config file {path} not found')
        except ValueError as e:
            raise StudyConfigException(f'can not parse config file {path}: {e}')
        if not isinstance(data, dict):
            raise StudyConfigException(f'config file {path} must hold a JSON object')
        return cls.from_dict(data, kind)

    def with_overrides(self, **overrides) -> 'StudyConfig':
        """ copy with every non-None override applied """
        unknown = sorted(set(overrides) - {f for f in self.__dataclass_fields__ if f != 'kind'})
        if unknown:
            raise StudyConfigException(f'unknown config fields: {", ".join(unknown)}')
        return replace(self, **{key: value for key, value in overrides.items() if value is not None})

    def validate(self) -> 'StudyConfig':
        if self.trials < 1:
            raise StudyConfigException(f'trials must be at least 1, got {self.trials}')
        if not self.n_values or not self.r_values or not self.M:
            raise StudyConfigException('a study needs at least one n, r and M value')
        for n in self.n_values:
            if not 1 <= n <= settings.MAX_STUDY_QUBITS:
                raise StudyConfigException(f'n must lie in [1, {settings.MAX_STUDY_QUBITS}], got {n}')
            for r in self.r_values:
                if not 1 <= r <= 2 ** n:
                    raise StudyConfigException(f'r must lie in [1, {2 ** n}] for n={n}, got {r}')
        if self.step_size <= 0:
            raise StudyConfigException(f'mu must be positive, got {self.step_size}')
        if any(M < 1 for M in self.M):
            raise StudyConfigException(f'every M must be at least 1, got {list(self.M)}')
        if any(K < 1 for K in self.K):
            raise StudyConfigException(f'every K must be at least 1, got {list(self.K)}')
        if self.max_iterations < 1:
            raise StudyConfigException(f'iteration cap must be at least 1, got {self.max_iterations}')
        if self.tolerance < 0:
            raise StudyConfigException(f'tolerance must be nonnegative, got {self.tolerance}')
        if not 0 <= self.delta <= settings.DEFAULT_DELTA:
            raise StudyConfigException(f'delta must lie in [0, {settings.DEFAULT_DELTA}], got {self.delta}')
        if self.resamples < 1:
            raise StudyConfigException(f'resamples must be at least 1, got {self.resamples}')

        if self.kind in BUDGET_KINDS:
            if self.N is None or self.N < 1:
                raise StudyConfigException(f'a {self.kind} study needs a positive fixed budget N')
            for M in self.M:
                if self.N % M:
                    raise StudyConfigException(f'M={M} does not divide N={self.N}')
        elif self.kind is not StudyKind.VARIANCE and not self.K:
            raise StudyConfigException(f'a {self.kind} study needs at least one K value')
        return self

    def configurations(self) -> List[Configuration]:
        """ the study grid in a fixed order: n, then r, then K, then M """
        if self.kind is StudyKind.VARIANCE:
            pairs = [(1, M) for M in self.M]
        elif self.kind in BUDGET_KINDS:
            pairs = [(self.N // M, M) for M in self.M]
        else:
            pairs = [(K, M) for K in self.K for M in self.M]

        grid = [(n, r, K, M) for n in self.n_values for r in self.r_values for K, M in pairs]
        return [Configuration(index, *point) for index, point in enumerate(grid)]

    def to_json(self) -> Dict:
        """ kebab-case echo, readable back by from_dict """
        values = asdict(self)
        echo = {key: values[name] for key, name in _JSON_KEYS.items()}
        echo['kind'] = self.kind.value
        for key in ('n', 'r', 'K', 'M'):
            echo[key] = list(echo[key])
        return echo
