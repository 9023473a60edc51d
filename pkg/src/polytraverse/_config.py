"""Numerical tolerances and the switch between jitted and numpy kernels."""
from __future__ import annotations

import contextlib
import contextvars
import os
from dataclasses import dataclass, replace

# Set to 1/true to force the pure-numpy kernels even when numba is importable.
DISABLE_JIT_ENV = "POLYTRAVERSE_DISABLE_JIT"
WORKERS_ENV = "POLYTRAVERSE_WORKERS"


@dataclass(frozen=True)
class Tolerances:
    """Margins used by every feasibility decision.

    eps_int: margin required on open (strict) inequalities.
    eps_num: slack allowed on closed inequalities when re-checking points.
    sentinel: half-width of the box added to keep unbounded problems bounded.
    """

    eps_int: float = 1e-7
    eps_num: float = 1e-9
    sentinel: float = 1e6


_current: contextvars.ContextVar[Tolerances] = contextvars.ContextVar(
    "polytraverse_tolerances", default=Tolerances()
)


def get_tolerances() -> Tolerances:
    return _current.get()


@contextlib.contextmanager
def use_tolerances(**overrides):
    """Temporarily override tolerances, e.g. ``with use_tolerances(eps_int=1e-6):``."""
    token = _current.set(replace(_current.get(), **overrides))
    try:
        yield _current.get()
    finally:
        _current.reset(token)


def jit_disabled() -> bool:
    return os.environ.get(DISABLE_JIT_ENV, "").strip().lower() in {"1", "true", "yes", "on"}


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
