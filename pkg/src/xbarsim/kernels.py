"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback
takes over. Set ``XBARSIM_BACKEND=python`` to force the fallback.
"""

import os

from . import _fallback

fallback = _fallback

if os.environ.get("XBARSIM_BACKEND", "").lower() == "python":
    _impl = _fallback
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "python" if _impl is _fallback else "cython"

vteam_integrate = _impl.vteam_integrate
im2col = _impl.im2col
adc_quantize = _impl.adc_quantize


def compiled():
    """Return the compiled kernel module, or None when it is unavailable."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels
