"""Kernel backend selection: compiled extension when available, else Python.

The choice happens at import; NEQRESPONSE_BACKEND=python|compiled forces
one side (forcing the compiled side fails loudly when the extension is
missing). set_backend() exists for tests and the benchmark harness.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def _initial():
    forced = os.environ.get("NEQRESPONSE_BACKEND", "").strip().lower()
    if forced:
        if forced not in ("python", "compiled"):
            raise ValueError(f"NEQRESPONSE_BACKEND={forced!r} not recognized")
        if forced == "compiled" and _compiled is None:
            raise ImportError(
                "NEQRESPONSE_BACKEND=compiled but the extension is not built"
            )
        return _BACKENDS[forced]
    return _compiled if _compiled is not None else _kernels_py


_active = _initial()


def get_kernels():
    return _active


def active_backend():
    return _active.BACKEND_NAME


def available_backends():
    return tuple(sorted(_BACKENDS))


def set_backend(name):
    """Switch kernel backend; returns the previous backend name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    previous = _active.BACKEND_NAME
    _active = _BACKENDS[name]
    return previous
