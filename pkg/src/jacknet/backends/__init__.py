"""Backend selection for the hot kernels.

The compiled Cython core is used when its extension module imported
successfully; otherwise the pure-Python twin takes over.  Set
``JACKNET_BACKEND=pure`` or ``=compiled`` to force a choice (forcing
``compiled`` raises if the extension is missing).  Both backends implement
the same three kernels with identical semantics; ``benchmarks/`` compares
their throughput.
"""
from __future__ import annotations

import importlib
import os

from . import pure

_choice = os.environ.get("JACKNET_BACKEND", "auto").lower()
if _choice not in ("auto", "compiled", "pure"):
    raise ValueError(f"JACKNET_BACKEND must be auto, compiled, or pure, not {_choice!r}")

_core = None
if _choice != "pure":
    try:
        _core = importlib.import_module("._core", __package__)
    except ImportError:
        if _choice == "compiled":
            raise
        _core = None

_active = _core if _core is not None else pure


def backend_name() -> str:
    """Name of the kernel implementation in use: 'compiled' or 'pure'."""
    return "compiled" if _active is not pure else "pure"


def get_backend(name: str):
    """Fetch a backend module by name (for benchmarks and twin tests)."""
    if name == "pure":
        return pure
    if name == "compiled":
        if _core is None:
            raise ImportError("compiled backend not available")
        return _core
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    return ["compiled", "pure"] if _core is not None else ["pure"]


def build_transitions(*args, **kwargs):
    return _active.build_transitions(*args, **kwargs)


def iterate_transient(*args, **kwargs):
    return _active.iterate_transient(*args, **kwargs)


def run_simulation(*args, **kwargs):
    return _active.run_simulation(*args, **kwargs)


make_streams = pure.make_streams
