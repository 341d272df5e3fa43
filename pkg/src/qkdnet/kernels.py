"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``QKDNET_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy fallback is used. Both expose the same functions.
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
try:
    from . import _kernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("QKDNET_PURE_PYTHON", "") in ("", "0"):
    _impl = compiled_backend
    BACKEND = "compiled"
else:
    _impl = python_backend
    BACKEND = "python"

dead_time_filter = _impl.dead_time_filter
pulse_coincidences = _impl.pulse_coincidences
pulse_histogram2d = _impl.pulse_histogram2d
