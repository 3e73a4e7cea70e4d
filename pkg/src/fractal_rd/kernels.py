"""Backend selection for the hot kernels.

The compiled extension is used when importable; ``FRACTAL_RD_BACKEND=python``
forces the numpy fallback.
"""

import os

from . import _kernels_py

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _kernels_py}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels


def _select():
    wanted = os.environ.get("FRACTAL_RD_BACKEND", "").strip().lower()
    if wanted:
        if wanted not in BACKENDS:
            raise ImportError(f"FRACTAL_RD_BACKEND={wanted!r} is not available "
                              f"(have: {', '.join(sorted(BACKENDS))})")
        return wanted
    return "cython" if "cython" in BACKENDS else "python"


BACKEND = _select()
_impl = BACKENDS[BACKEND]

nonlocal_matrix = _impl.nonlocal_matrix
first_crossing = _impl.first_crossing
ear_clip = _impl.ear_clip
