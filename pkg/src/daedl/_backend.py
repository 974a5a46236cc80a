"""Kernel backend selection.

The compiled extension is used when importable. Set ``DAEDL_BACKEND`` to
``python`` to force the numpy fallback, or to ``cython`` to fail loudly if
the extension is missing.
"""
import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)


def _load(choice):
    if choice == "python":
        return _kernels_py, "python"
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        if choice == "cython":
            raise
        logger.debug("compiled kernels unavailable, using numpy fallback")
        return _kernels_py, "python"
    return _kernels, "cython"


kernels, NAME = _load(os.environ.get("DAEDL_BACKEND", "auto").lower())

PARAM_EXP = _kernels_py.PARAM_EXP
PARAM_RELU = _kernels_py.PARAM_RELU
PARAM_SOFTPLUS = _kernels_py.PARAM_SOFTPLUS
ALPHA_MIN = _kernels_py.ALPHA_MIN
ALPHA_MAX = _kernels_py.ALPHA_MAX


def available():
    """Names of the backends importable in this environment."""
    names = ["python"]
    try:
        from . import _kernels  # type: ignore[attr-defined]  # noqa: F401
    except ImportError:
        return names
    return names + ["cython"]


def get(name):
    """Return the kernel module for ``name`` ("python" or "cython")."""
    return _load(name)[0]
