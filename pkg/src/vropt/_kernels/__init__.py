"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
numerically bit-identical, so the choice only affects speed. Set
``VROPT_KERNELS=numpy`` to force the fallback or ``VROPT_KERNELS=compiled``
to require the extension (ImportError if it is missing).
"""

import os

from . import fallback

_FUNCS = (
    "ordered_sum",
    "guarded_divide",
    "batch_mean_var_rho",
    "bounded_lambda",
    "scaled_step",
    "ema_update",
    "adam_increment",
)

_requested = os.environ.get("VROPT_KERNELS", "").strip().lower()

compiled = None
if _requested != "numpy":
    try:
        from . import _core as compiled
    except ImportError:
        compiled = None
    if _requested == "compiled" and compiled is None:
        raise ImportError(
            "VROPT_KERNELS=compiled but the vropt._kernels._core extension "
            "is not built; reinstall with Cython and a C compiler available"
        )

_active = compiled if compiled is not None else fallback
BACKEND = "compiled" if compiled is not None else "numpy"

ordered_sum = _active.ordered_sum
guarded_divide = _active.guarded_divide
batch_mean_var_rho = _active.batch_mean_var_rho
bounded_lambda = _active.bounded_lambda
scaled_step = _active.scaled_step
ema_update = _active.ema_update
adam_increment = _active.adam_increment

__all__ = list(_FUNCS) + ["BACKEND", "compiled", "fallback"]
