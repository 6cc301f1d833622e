"""Kernel backend selection.

The compiled extension is used when present; the pure-numpy fallback is
selected otherwise. Set MODART_KERNEL=fallback (or =compiled) to force a
backend. Both produce bit-identical results.
"""

import os

from . import fallback as _fallback

_requested = os.environ.get("MODART_KERNEL", "").strip().lower()

_impl = None
if _requested != "fallback":
    try:
        from . import _core as _impl  # noqa: F401
    except ImportError:
        _impl = None
        if _requested == "compiled":
            raise ImportError(
                "MODART_KERNEL=compiled but the extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            )

if _impl is None:
    _backend = _fallback
    _BACKEND_NAME = "fallback"
else:
    _backend = _impl
    _BACKEND_NAME = "compiled"


def backend_name() -> str:
    return _BACKEND_NAME


def ray_nearest(pack, origins, directions, t_min, front_only):
    return _backend.ray_nearest(pack, origins, directions, t_min, front_only)


def segments_blocked(pack, starts, ends, eps):
    return _backend.segments_blocked(pack, starts, ends, eps)


def count_crossings(pack, origins, directions, eps):
    return _backend.count_crossings(pack, origins, directions, eps)


def run_energy_recursion(*args, **kwargs):
    return _backend.run_energy_recursion(*args, **kwargs)
