"""Selects the compiled ringdown kernels, falling back to numpy.

Set ``DIPPER_BACKEND=python`` to force the pure-Python kernels.
"""
import os

from . import _fallback

fallback = _fallback

if os.environ.get("DIPPER_BACKEND", "").lower() == "python":
    compiled = None
else:
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

_active = compiled if compiled is not None else _fallback
NAME = "cython" if compiled is not None else "python"

jitter_phase = _active.jitter_phase
integrate_field = _active.integrate_field
