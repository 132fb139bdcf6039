"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is picked at import time when it is importable and
``SIDNET_PURE_PYTHON`` is not set to a truthy value. ``BACKEND`` names the
active implementation; both modules stay importable for comparison.

The LSTM gate nonlinearities always run through numpy: its SIMD exp/tanh
beat a scalar libm loop several times over.
"""
import os

from . import _pykernels as python

try:
    from . import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None

_force_pure = os.environ.get("SIDNET_PURE_PYTHON", "").lower() in ("1", "true", "yes")

if compiled is not None and not _force_pure:
    active = compiled
    BACKEND = "cython"
else:
    active = python
    BACKEND = "python"

maxpool_forward = active.maxpool_forward
maxpool_backward = active.maxpool_backward
zhang_suen = active.zhang_suen
lstm_gates_forward = python.lstm_gates_forward
lstm_gates_backward = python.lstm_gates_backward

__all__ = [
    "BACKEND", "compiled", "python",
    "maxpool_forward", "maxpool_backward", "zhang_suen",
    "lstm_gates_forward", "lstm_gates_backward",
]
