"""Hot-loop kernels: compiled core with a pure-Python fallback.

The Cython extension ``pwfit._kernels`` implements the two inner loops
that dominate non-solver runtime (component labeling under an edge
labeling, and the region-fusion merge sweep).  If it is not built, the
pure-Python mirror in ``pwfit._kernels_py`` is used; both produce
bit-identical results.  Set ``PWFIT_PURE_PYTHON=1`` to force the
fallback; ``IMPLEMENTATION`` records which one is active.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("PWFIT_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

IMPLEMENTATION = "python" if _impl is _kernels_py else "cython"

cc_labels = _impl.cc_labels
fuse_regions = _impl.fuse_regions


def implementations() -> dict:
    """Available kernel implementations by name (for tests/benchmarks)."""
    impls = {"python": _kernels_py}
    try:
        from . import _kernels
        impls["cython"] = _kernels
    except ImportError:
        pass
    return impls
