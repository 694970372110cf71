import json
import logging.config
import os

from QstLab_Project import settings


def dump_json(o: object, filename: str) -> None:
    with open(filename, 'w', encoding='utf8') as f:
        json.dump(o, f, ensure_ascii=False, indent=2, sort_keys=True)


def load_json(filename: str):
    with open(filename, 'r', encoding='utf8') as f:
        return json.load(f)


def setup_logging(verbose: bool = False) -> None:
    """ applies settings.LOGGING, optionally lowering the root level to DEBUG """
    logging.config.dictConfig(settings.LOGGING)
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def worker_count() -> int:
    """
    :return: number of trial workers, QST_LAB_THREADS if set, otherwise the available parallelism
    """
    raw = os.environ.get(settings.THREADS_ENV_VAR)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f'can not parse {settings.THREADS_ENV_VAR} from {raw!r}')
        if value < 1:
            raise ValueError(f'{settings.THREADS_ENV_VAR} must be positive, got {value}')
        return value
    return os.cpu_count() or 1
