"""Execution engines and selection between them.

Two engines implement the same store semantics: a compiled extension
core that releases the interpreter lock around block execution, and a
pure-Python reference.  ``get_engine("auto")`` prefers the compiled one
and silently falls back, so an installation without a C toolchain still
works (just without parallel speedup).  The SPECMINE_ENGINE environment
variable overrides the default choice.
"""

from __future__ import annotations

import os

from ..model import UsageError
from .base import Event, MineResult, ReplayResult, SerialResult, format_events, resolve_deadlock
from .pure import PureEngine, PureStore, PureStoreHandle

try:
    from .native import NativeEngine
except ImportError:  # extension not built
    NativeEngine = None

__all__ = [
    "Event",
    "MineResult",
    "ReplayResult",
    "SerialResult",
    "format_events",
    "resolve_deadlock",
    "PureEngine",
    "PureStore",
    "PureStoreHandle",
    "NativeEngine",
    "available_engines",
    "get_engine",
]


def available_engines() -> dict:
    engines = {"pure": PureEngine()}
    if NativeEngine is not None:
        engines["native"] = NativeEngine()
    return engines


def get_engine(name: str = "auto"):
    if name == "auto":
        name = os.environ.get("SPECMINE_ENGINE", "auto")
    engines = available_engines()
    if name == "auto":
        return engines.get("native") or engines["pure"]
    try:
        return engines[name]
    except KeyError:
        raise UsageError(
            f"engine {name!r} is not available (have: {', '.join(sorted(engines))})"
        ) from None
