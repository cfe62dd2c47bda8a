"""Hot numerical kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built and ``ORBIT_PURE_PYTHON`` is
unset; otherwise the numpy implementations are imported under the same names.
"""

import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("ORBIT_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

conv3x3 = _active.conv3x3
confusion_matrix = _active.confusion_matrix
nearest = _active.nearest
nondominated_ranks = _active.nondominated_ranks
pairwise_mean_distance = _active.pairwise_mean_distance

__all__ = [
    "BACKEND",
    "compiled_backend",
    "python_backend",
    "conv3x3",
    "confusion_matrix",
    "nearest",
    "nondominated_ranks",
    "pairwise_mean_distance",
]
