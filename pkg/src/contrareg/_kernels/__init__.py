"""Kernel backend selection.

The hot per-batch kernel exists twice: a Cython extension built at
install time and a pure-numpy fallback. The compiled one is preferred
when importable; set CONTRAREG_KERNELS=numpy (or =compiled) to force a
backend, e.g. for the benchmark in benchmarks/bench_kernels.py.
"""

import os

from . import numpy_impl

_choice = os.environ.get("CONTRAREG_KERNELS", "auto").strip().lower()

if _choice == "numpy":
    _impl = numpy_impl
    BACKEND = "numpy"
elif _choice in ("auto", "compiled"):
    try:
        from . import _fast as _impl

        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = numpy_impl
        BACKEND = "numpy"
else:
    raise ValueError(
        f"CONTRAREG_KERNELS={_choice!r} not understood; use auto, compiled or numpy"
    )

contrast_terms = _impl.contrast_terms


def active_backend():
    """Name of the kernel backend selected at import ('compiled' or 'numpy')."""
    return BACKEND
