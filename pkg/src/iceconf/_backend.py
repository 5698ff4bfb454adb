"""Select the compiled kernels when importable, else the numpy fallback.

Set ``ICECONF_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("ICECONF_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as kernels

        BACKEND = "python"

counter_uniform = kernels.counter_uniform
ice_lin_head = kernels.ice_lin_head
ice_pow_head = kernels.ice_pow_head

__all__ = ["BACKEND", "counter_uniform", "ice_lin_head", "ice_pow_head"]
