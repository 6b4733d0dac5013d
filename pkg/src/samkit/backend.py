"""Kernel backend selection: compiled extension if available, numpy otherwise.

The backend is chosen once at import time. Set ``SAMKIT_BACKEND=python`` or
``SAMKIT_BACKEND=cython`` to force a choice (forcing ``cython`` raises if the
extension was not built). ``set_backend`` exists for tests and benchmarks;
runs read the active module once at start, so a swap applies to new runs.
"""

import os

from samkit import _kernels_py
from samkit.errors import ConfigError

try:
    from samkit import _kernels as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled


def available():
    """Names of the importable backends."""
    return tuple(sorted(_BACKENDS))


def _default():
    forced = os.environ.get("SAMKIT_BACKEND", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            raise ConfigError(
                f"SAMKIT_BACKEND={forced!r} requested but only {available()} available"
            )
        return _BACKENDS[forced]
    return _compiled if _compiled is not None else _kernels_py


_active = _default()


def active():
    """The module providing the kernel functions currently in use."""
    return _active


def name():
    return _active.NAME


def set_backend(which):
    """Switch the active backend by name ('python' or 'cython')."""
    global _active
    if which not in _BACKENDS:
        raise ConfigError(f"unknown backend {which!r}; available: {available()}")
    _active = _BACKENDS[which]
    return _active
