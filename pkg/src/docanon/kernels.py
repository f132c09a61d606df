"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``DOCANON_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("DOCANON_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

min_filter = _impl.min_filter
max_filter = _impl.max_filter
label_boxes = _impl.label_boxes
hamming_matrix = _impl.hamming_matrix
fast_score = _impl.fast_score


def backends():
    """Available kernel modules keyed by backend name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
