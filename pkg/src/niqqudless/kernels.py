"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the pure-Python
twin. Set ``NIQQUDLESS_PURE_PYTHON=1`` to force the fallback.
"""
import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)

if os.environ.get("NIQQUDLESS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        logger.debug("compiled kernels unavailable, using pure-Python fallback")
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
edit_ops = _impl.edit_ops
count_pairs = _impl.count_pairs
merge_pair = _impl.merge_pair


def backends():
    """All importable kernel implementations, keyed by backend name."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
