"""Kernel backend selection.

``TEMPERGRID_BACKEND=numpy`` forces the pure-numpy path; the default is the
numba path when numba imports, numpy otherwise.
"""
import os

from . import _numpy

try:
    from . import _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

BACKENDS = {"numpy": _numpy}
if _numba is not None:
    BACKENDS["numba"] = _numba

from ._modes import MODE_ALTERNATE, MODE_BETA, MODE_BOTH, MODE_NONE, MODE_P, encode  # noqa: F401


def backend_name() -> str:
    name = os.environ.get("TEMPERGRID_BACKEND", "").strip().lower()
    if not name:
        return "numba" if _numba is not None else "numpy"
    if name not in BACKENDS:
        raise RuntimeError(f"TEMPERGRID_BACKEND={name!r} not available; choose from {sorted(BACKENDS)}")
    return name


def backend(name: str | None = None):
    return BACKENDS[name or backend_name()]
