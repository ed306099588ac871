"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy/Python
fallback. ``DYVOL_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _fallback

BACKEND = "python"
if not os.environ.get("DYVOL_PURE_PYTHON"):
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

cir_euler_days = _impl.cir_euler_days
char_exponent_array = _impl.char_exponent_array
fourier_invert = _impl.fourier_invert
fourier_invert_uniform = _impl.fourier_invert_uniform
