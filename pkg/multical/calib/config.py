import logging
import os
from functools import lru_cache

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def get_thread_cap() -> int:
    raw = os.getenv('MULTICAL_THREADS')
    if not raw:
        return max(1, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def get_log_level() -> str:
    return os.getenv('MULTICAL_LOG_LEVEL', 'INFO').upper()


@lru_cache
def _package_handler() -> logging.Handler:
    ch = logging.StreamHandler()
    ch.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger('multical')
    root.addHandler(ch)
    root.propagate = False
    return ch


def get_logger(name: str) -> logging.Logger:
    _package_handler()
    logging.getLogger('multical').setLevel(get_log_level())
    return logging.getLogger(name)
