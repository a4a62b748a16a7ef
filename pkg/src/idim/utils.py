import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict

from dotenv import dotenv_values

from idim.errors import ConfigError

try:
    from numba import njit

    numba_installed = True
except ImportError:
    numba_installed = False


def optional_njit(*args, **kwargs):
    """`numba.njit` when numba is importable, identity otherwise."""

    def decorator(func):
        if numba_installed:
            return njit(*args, **kwargs)(func)
        return func

    return decorator


def _cast(s):
    if s.isnumeric():
        return int(s)
    try:
        return float(s)
    except ValueError:
        return s


@lru_cache
def settings() -> Dict[str, Any]:
    """
    Return the IDIM_* settings.

    Values come from a `.env` file in the current working directory, overridden
    by the process environment.
    """
    config = dotenv_values(Path.cwd() / ".env")
    config.update(os.environ)
    return {k: _cast(v) for k, v in config.items() if k.startswith("IDIM_") and v}


def num_threads() -> int:
    threads = settings().get("IDIM_THREADS", os.cpu_count() or 1)
    return max(1, int(threads))


def progress_interval() -> float:
    return float(settings().get("IDIM_PROGRESS_INTERVAL", 1.0))


def parse_params(param_string, prefix="") -> Dict[str, Any]:
    if not param_string:
        return {}
    params = {}
    for param_pair in param_string.split(","):
        k, sep, v = param_pair.partition("=")
        if not sep or not k.strip():
            raise ConfigError(f"expected key=value, got {param_pair.strip()!r}")
        params[prefix + k.strip()] = _cast(v.strip())
    return params


def absolute(path) -> str:
    """Resolve a user supplied path (`~` expanded) against the working directory."""
    return str((Path.cwd() / Path(path).expanduser()).resolve())
