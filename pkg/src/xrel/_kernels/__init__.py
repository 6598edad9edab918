"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; set ``XREL_PURE_PYTHON=1`` to
force the fallback. ``BACKEND`` names the active choice.
"""
import os

import numpy as np

from . import _pykernels

_force_py = os.environ.get("XREL_PURE_PYTHON", "").strip() not in ("", "0")

try:
    if _force_py:
        raise ImportError("fallback forced")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"


def _c_cell_matmul(a, b):
    a = np.ascontiguousarray(a, dtype=float)
    if np.iscomplexobj(b):
        return _ckernels.cell_matmul_complex(a, np.ascontiguousarray(b, dtype=np.complex128))
    return _ckernels.cell_matmul_real(a, np.ascontiguousarray(b, dtype=float))


def _c_tree_integrate(order, parent, increments, root_value):
    return _ckernels.tree_integrate(
        np.ascontiguousarray(order, dtype=np.int64), np.ascontiguousarray(parent, dtype=np.int64),
        np.ascontiguousarray(increments, dtype=float), root_value)


if _ckernels is not None:
    cell_matmul = _c_cell_matmul
    bfs_tree = _ckernels.bfs_tree
    tree_integrate = _c_tree_integrate
else:
    cell_matmul = _pykernels.cell_matmul
    bfs_tree = _pykernels.bfs_tree
    tree_integrate = _pykernels.tree_integrate

__all__ = ["BACKEND", "cell_matmul", "bfs_tree", "tree_integrate"]
