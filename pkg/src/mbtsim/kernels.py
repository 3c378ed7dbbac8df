"""Backend selection for the hot kernels.

The compiled `_kernels` extension is used when it imports; otherwise the
pure-Python `_kernels_py` module is used. Set ``MBT_KERNELS=python`` to
force the fallback.
"""
from __future__ import annotations

import contextlib
import os
from types import ModuleType

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS: dict[str, ModuleType] = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

_wanted = os.environ.get("MBT_KERNELS", "").strip().lower()
if _wanted and _wanted not in BACKENDS:
    raise ImportError(f"MBT_KERNELS={_wanted!r} requested but not available "
                      f"(have {sorted(BACKENDS)})")
BACKEND = _wanted or ("cython" if _compiled is not None else "python")
_impl = BACKENDS[BACKEND]


def propagate(*args):
    return _impl.propagate(*args)


def pair_scan(X, Y, F, valid, lat_min, vert_min):
    return _impl.pair_scan(X, Y, F, valid, lat_min, vert_min)


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily switch kernel backend (tests and benchmarks)."""
    global _impl, BACKEND
    prev_impl, prev_name = _impl, BACKEND
    _impl, BACKEND = BACKENDS[name], name
    try:
        yield _impl
    finally:
        _impl, BACKEND = prev_impl, prev_name
