"""Kernel backend selection.

Imports the compiled extension when available, otherwise the numpy fallback.
Set ``FEATEDIT_NO_EXT=1`` to force the fallback regardless of what is built.
"""

import os

if os.environ.get("FEATEDIT_NO_EXT", "") == "1":
    from . import fallback as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import fallback as _impl

        BACKEND = "numpy"

kurtosis_rows = _impl.kurtosis_rows
svm_epoch = _impl.svm_epoch
nms_keep = _impl.nms_keep


def backend() -> str:
    """Name of the active kernel backend: "cython" or "numpy"."""
    return BACKEND
