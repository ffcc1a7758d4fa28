"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; set
``CAUSERL_KERNELS=python`` or ``CAUSERL_KERNELS=cython`` to force a backend.
``BACKEND`` names the one in use.
"""

import os

from causerl.kernels import pylstm

_requested = os.environ.get("CAUSERL_KERNELS", "auto")
if _requested not in ("auto", "python", "cython"):
    raise ValueError(f"CAUSERL_KERNELS must be auto|python|cython, got {_requested!r}")

BACKEND = "python"
_impl = pylstm
if _requested in ("auto", "cython"):
    try:
        from causerl.kernels import _lstm as _compiled
        _impl = _compiled
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
