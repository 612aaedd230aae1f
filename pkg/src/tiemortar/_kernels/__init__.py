"""Element kernels: compiled extension when built, numpy otherwise.

Set ``TIEMORTAR_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

try:
    if os.getenv("TIEMORTAR_PURE_PYTHON") == "1":
        raise ImportError
    from . import _core
except ImportError:
    _core = None

BACKEND = "compiled" if _core is not None else "numpy"


def elastic_local_matrices(coords, c1, c2, degree):
    if _core is None:
        return _fallback.elastic_local_matrices(coords, c1, c2, degree)
    import numpy as np

    return _core.elastic_local_matrices(np.ascontiguousarray(coords, dtype=np.float64), float(c1), float(c2), int(degree))


__all__ = ["BACKEND", "elastic_local_matrices"]
