"""Numeric kernels with a compiled core and a pure-Python fallback.

The compiled module is used when it imports; set ``TRAJDIFF_PURE_PYTHON=1``
to force the fallback.
"""
import logging
import os

from . import _pykernels

logger = logging.getLogger(__name__)

BACKEND = "python"
_impl = _pykernels
if os.environ.get("TRAJDIFF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # not built
        logger.debug("compiled kernels unavailable, using the pure-Python fallback")
        _impl = _pykernels

displacement_errors = _impl.displacement_errors
pursuit_rollout = _impl.pursuit_rollout

__all__ = ["BACKEND", "displacement_errors", "pursuit_rollout"]
