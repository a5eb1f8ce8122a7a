"""Kernel backend selection.

The compiled extension (``_stencils``) is preferred when it imported
cleanly; otherwise the pure-NumPy fallback is used.  Both expose the same
functions with identical semantics (and bitwise-identical results; the
extension is built with FP contraction disabled).  Set the environment
variable ``RBCDA_FORCE_NUMPY=1`` before import to force the fallback.
"""

from __future__ import annotations

import os

from . import numpy_backend

if os.environ.get("RBCDA_FORCE_NUMPY"):
    impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _stencils as impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        impl = numpy_backend
        BACKEND = "numpy"


def get_backend(name: str | None = None):
    """Return a kernel module by name ('compiled', 'numpy', or None=default)."""
    if name is None:
        return impl
    if name == "numpy":
        return numpy_backend
    if name == "compiled":
        from . import _stencils  # raises ImportError when not built

        return _stencils
    raise ValueError(f"unknown backend {name!r}")
