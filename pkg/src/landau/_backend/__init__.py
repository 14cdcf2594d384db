"""Kernel backend selection.

The compiled Cython extension is preferred when it is importable; otherwise
the NumPy fallback is used. LANDAU_BACKEND=numpy or =compiled forces the
choice (forcing `compiled` raises if the extension was not built).
"""

import os

_requested = os.environ.get("LANDAU_BACKEND", "").strip().lower()

if _requested in ("", "compiled", "cython"):
    try:
        from . import _compiled as _impl

        BACKEND = "compiled"
    except ImportError:
        if _requested:
            raise ImportError(
                "LANDAU_BACKEND=compiled requested but the extension is not built"
            )
        from . import _numpy as _impl

        BACKEND = "numpy"
elif _requested in ("numpy", "python"):
    from . import _numpy as _impl

    BACKEND = "numpy"
else:
    raise ValueError(f"unknown LANDAU_BACKEND value: {_requested!r}")

velocity_pairwise = _impl.velocity_pairwise
blob_scores = _impl.blob_scores
kde_sum = _impl.kde_sum
softsign_forward = _impl.softsign_forward
softsign_backward = _impl.softsign_backward
adam_update = _impl.adam_update
polar_fill = _impl.polar_fill
