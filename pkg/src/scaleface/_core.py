"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``SCALEFACE_BACKEND=python`` forces the fallback.
"""

import os

from . import _fallback

if os.environ.get("SCALEFACE_BACKEND", "").lower() == "python":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

margin_softmax = _impl.margin_softmax
tar_at_far_sorted = _impl.tar_at_far_sorted
cosine_stat = _impl.cosine_stat

__all__ = ["BACKEND", "margin_softmax", "tar_at_far_sorted", "cosine_stat"]
