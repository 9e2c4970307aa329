"""Kernel backend selection.

The compiled extension is preferred when importable; set
MOTIONSCORE_BACKEND=python to force the numpy fallback or
MOTIONSCORE_BACKEND=cython to require the extension.
"""

import os

from . import _kernels_np

_requested = os.environ.get("MOTIONSCORE_BACKEND", "auto").strip().lower()

if _requested in ("auto", "", "cython", "compiled"):
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        if _requested in ("cython", "compiled"):
            raise ImportError(
                "MOTIONSCORE_BACKEND requested the compiled kernels but the "
                "extension is not built; run pip install -e . --no-build-isolation"
            )
        _impl = _kernels_np
        BACKEND = "python"
elif _requested in ("python", "numpy"):
    _impl = _kernels_np
    BACKEND = "python"
else:
    raise ValueError(
        f"unknown MOTIONSCORE_BACKEND={_requested!r}; use auto, cython, or python"
    )

warp_bilinear = _impl.warp_bilinear
lk_step = _impl.lk_step
box_filter = _impl.box_filter
