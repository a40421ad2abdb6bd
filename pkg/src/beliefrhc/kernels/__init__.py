"""Numerical kernels with a compiled fast path and a numpy fallback.

The backend is chosen once at import time.  Set ``BELIEFRHC_BACKEND`` to
``reference`` to force the numpy implementation or to ``compiled`` to
require the extension (raising if it is missing); the default ``auto``
prefers the extension when it imported cleanly.
"""

import os

from . import _reference

_requested = os.environ.get("BELIEFRHC_BACKEND", "auto").lower()
if _requested not in ("auto", "reference", "compiled"):
    raise ImportError(
        f"BELIEFRHC_BACKEND must be 'auto', 'reference', or 'compiled', got {_requested!r}"
    )

_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _fast as _impl
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "BELIEFRHC_BACKEND=compiled but the beliefrhc.kernels._fast "
                "extension is not built"
            ) from None

if _impl is None:
    _impl = _reference
    BACKEND = "reference"
else:
    BACKEND = "compiled"


def backend_name():
    """Name of the kernel backend selected at import time."""
    return BACKEND


kde_scores = _impl.kde_scores
offset_scatter = _impl.offset_scatter
systematic_resample = _impl.systematic_resample
diag_gauss_loglik = _impl.diag_gauss_loglik
opf_path = _impl.opf_path

__all__ = [
    "BACKEND",
    "backend_name",
    "kde_scores",
    "offset_scatter",
    "systematic_resample",
    "diag_gauss_loglik",
    "opf_path",
]
