"""Pure numpy/Python reference implementations of the hot kernels."""
from collections import deque

import numpy as np


def cell_matmul(a, b):
    """Batched product out[c] = a[c] @ b[c]; a real (n, q, k), b real or complex (n, k, r)."""
    return np.matmul(a, b)


def bfs_tree(mask, root):
    """Breadth-first spanning tree over the 4-neighbour graph of a 2D mask.

    Returns
    -------
    order : int64 array
        Flat cell indices in visiting order, root first.
    parent : int64 array
        Flat parent index per visited cell (root maps to -1), aligned with ``order``.
    axis, sign : int64 arrays
        Edge from parent to child is ``sign`` steps along ``axis``.
    """
    nx, ny = mask.shape
    flat = mask.ravel()
    seen = np.zeros(flat.size, dtype=bool)
    order, parent, axis, sign = [root], [-1], [-1], [0]
    seen[root] = True
    queue = deque([root])
    steps = ((0, 1), (0, -1), (1, 1), (1, -1))
    while queue:
        c = queue.popleft()
        i, j = divmod(c, ny)
        for ax, sg in steps:
            ii, jj = (i + sg, j) if ax == 0 else (i, j + sg)
            if 0 <= ii < nx and 0 <= jj < ny:
                nb = ii * ny + jj
                if flat[nb] and not seen[nb]:
                    seen[nb] = True
                    order.append(nb)
                    parent.append(c)
                    axis.append(ax)
                    sign.append(sg)
                    queue.append(nb)
    return (np.array(order, dtype=np.int64), np.array(parent, dtype=np.int64),
            np.array(axis, dtype=np.int64), np.array(sign, dtype=np.int64))


def tree_integrate(order, parent, increments, root_value):
    """Accumulate w[child] = w[parent] + increments[k] along a tree in visiting order.

    ``increments`` has shape (len(order), t) aligned with ``order``; the result is
    indexed by flat cell index and sized to ``order.max() + 1``.
    """
    n = int(order.max()) + 1
    w = np.zeros((n, increments.shape[1]))
    w[order[0]] = root_value
    for k in range(1, len(order)):
        w[order[k]] = w[parent[k]] + increments[k]
    return w
