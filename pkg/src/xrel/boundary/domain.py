"""Staircase domains on a 2D cell lattice: boundary cells, faces, ordered loop."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from ..errors import DomainError

# outward normal (axis, sign) -> unit vector
_AXIS_VEC = {(0, 1): (1.0, 0.0), (0, -1): (-1.0, 0.0), (1, 1): (0.0, 1.0), (1, -1): (0.0, -1.0)}
FACE_TYPES = ((0, 1), (0, -1), (1, 1), (1, -1))


@dataclass(frozen=True, eq=False)
class Domain:
    """Simply connected union of cells on a 2D lattice.

    Cell ``(i, j)`` is centred at ``(i h0, j h1)``. Boundary faces separate a
    cell of the mask from a cell outside it; each carries its outward axis
    normal and the face length as arc measure.

    Parameters
    ----------
    mask : bool ndarray, shape (n0, n1)
    cell_lengths : tuple of float
    """

    mask: np.ndarray
    cell_lengths: tuple = (1.0, 1.0)

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise DomainError("only 2D domains are supported")
        if not mask.any() or mask.all():
            raise DomainError("mask must be nonempty and not full")
        if mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any():
            raise DomainError("mask must not touch the lattice border")
        _, n_in = ndimage.label(mask)
        _, n_out = ndimage.label(~mask, structure=np.ones((3, 3)))
        if n_in != 1 or n_out != 1:
            raise DomainError("domain must be connected and simply connected")
        h = tuple(float(x) for x in self.cell_lengths)
        if len(h) != 2 or min(h) <= 0:
            raise DomainError("cell_lengths must be two positive numbers")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "cell_lengths", h)

    @property
    def sizes(self) -> tuple:
        return self.mask.shape

    @cached_property
    def centroid(self) -> np.ndarray:
        idx = np.argwhere(self.mask).mean(axis=0)
        return idx * np.asarray(self.cell_lengths)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        """Mask cells whose four neighbours all lie in the mask."""
        m = self.mask
        inner = m.copy()
        for ax in (0, 1):
            for s in (1, -1):
                inner &= np.roll(m, s, axis=ax)
        return inner

    @cached_property
    def _faces(self):
        m = self.mask
        cells, axes, signs = [], [], []
        for ax, sg in FACE_TYPES:
            outside = ~np.roll(m, -sg, axis=ax)
            idx = np.argwhere(m & outside)
            cells.append(idx)
            axes.append(np.full(len(idx), ax))
            signs.append(np.full(len(idx), sg))
        cells, axes, signs = np.concatenate(cells), np.concatenate(axes), np.concatenate(signs)
        order = _loop_order(cells, axes, signs)
        return cells[order], axes[order], signs[order]

    @property
    def face_cells(self) -> np.ndarray:
        """(n_faces, 2) cell index of each boundary face, in loop order."""
        return self._faces[0]

    @property
    def face_axes(self) -> np.ndarray:
        return self._faces[1]

    @property
    def face_signs(self) -> np.ndarray:
        return self._faces[2]

    @property
    def n_faces(self) -> int:
        return len(self.face_axes)

    @cached_property
    def face_normals(self) -> np.ndarray:
        return np.array([_AXIS_VEC[(int(a), int(s))] for a, s in zip(self.face_axes, self.face_signs)])

    @cached_property
    def face_lengths(self) -> np.ndarray:
        h = self.cell_lengths
        return np.where(self.face_axes == 0, h[1], h[0]).astype(float)

    @cached_property
    def face_centers(self) -> np.ndarray:
        h = np.asarray(self.cell_lengths)
        return self.face_cells * h + 0.5 * self.face_normals * h

    @cached_property
    def boundary_cells(self) -> np.ndarray:
        """(n_b, 2) mask cells with at least one exterior neighbour, ordered by angle about the centroid."""
        idx = np.argwhere(self.mask & ~self.interior_mask)
        x = idx * np.asarray(self.cell_lengths) - self.centroid
        ang = np.arctan2(x[:, 1], x[:, 0])
        return idx[np.lexsort((idx[:, 1], idx[:, 0], ang))]

    @cached_property
    def boundary_normals(self) -> np.ndarray:
        """Outward unit normals per boundary cell from the mask gradient (sum of exterior face normals)."""
        out = []
        m = self.mask
        for i, j in self.boundary_cells:
            v = np.zeros(2)
            for ax, sg in FACE_TYPES:
                ii, jj = (i + sg, j) if ax == 0 else (i, j + sg)
                if not m[ii, jj]:
                    v += _AXIS_VEC[(ax, sg)]
            nv = np.linalg.norm(v)
            if nv < 1e-12:
                # thin cell with opposite exterior faces
                v = np.array([i, j]) * np.asarray(self.cell_lengths) - self.centroid
                nv = np.linalg.norm(v)
            out.append(v / nv)
        return np.array(out)

    @cached_property
    def boundary_ds(self) -> np.ndarray:
        """Arc measure per boundary cell: total length of its exterior faces."""
        ds = np.zeros(len(self.boundary_cells))
        pos = {tuple(c): k for k, c in enumerate(self.boundary_cells)}
        for c, L in zip(self.face_cells, self.face_lengths):
            ds[pos[tuple(c)]] += L
        return ds

    @cached_property
    def interior_cells(self) -> np.ndarray:
        return np.argwhere(self.interior_mask)


def _loop_order(cells, axes, signs) -> np.ndarray:
    """Order faces into one counter-clockwise loop (interior on the left).

    A face is a directed lattice edge; at a vertex with two outgoing faces the
    sharpest left turn is taken, which keeps diagonal pinches consistent.
    """
    n = len(axes)
    start = np.empty((n, 2), dtype=np.int64)
    end = np.empty((n, 2), dtype=np.int64)
    tau = np.empty((n, 2), dtype=np.int64)
    for f in range(n):
        i, j = cells[f]
        a, s = int(axes[f]), int(signs[f])
        # corner (i, j) is the lower-left vertex of cell (i, j)
        if (a, s) == (0, 1):
            start[f], end[f] = (i + 1, j), (i + 1, j + 1)
        elif (a, s) == (0, -1):
            start[f], end[f] = (i, j + 1), (i, j)
        elif (a, s) == (1, 1):
            start[f], end[f] = (i + 1, j + 1), (i, j + 1)
        else:
            start[f], end[f] = (i, j), (i + 1, j)
        tau[f] = end[f] - start[f]
    by_start = {}
    for f in range(n):
        by_start.setdefault(tuple(start[f]), []).append(f)
    used = np.zeros(n, dtype=bool)
    # deterministic start: lowest-left face
    f = int(np.lexsort((start[:, 1], start[:, 0]))[0])
    order = []
    while not used[f]:
        used[f] = True
        order.append(f)
        cands = [g for g in by_start.get(tuple(end[f]), []) if not used[g]]
        if not cands:
            break
        t = tau[f]
        # turn preference: left, straight, right
        def rank(g):
            cross = t[0] * tau[g][1] - t[1] * tau[g][0]
            return -cross
        f = min(cands, key=rank)
    if len(order) != n:
        raise DomainError("boundary faces do not form a single closed loop")
    if tuple(end[order[-1]]) != tuple(start[order[0]]):
        raise DomainError("boundary loop does not close")
    return np.array(order, dtype=np.int64)


def disk_domain(sizes, radius=None, center=None, cell_lengths=(1.0, 1.0)) -> Domain:
    """Cells whose centres lie strictly inside a disk; defaults: centred, radius N/4 cells."""
    sizes = tuple(int(n) for n in sizes)
    h = np.asarray(cell_lengths, dtype=float)
    if center is None:
        center = 0.5 * (np.asarray(sizes) - 1) * h
    if radius is None:
        radius = 0.25 * min(n * hh for n, hh in zip(sizes, h))
    X = np.meshgrid(*[np.arange(n) * hh for n, hh in zip(sizes, h)], indexing="ij")
    r = np.hypot(X[0] - center[0], X[1] - center[1])
    return Domain(r < radius, tuple(h))


def box_domain(sizes, margin: int = 1, cell_lengths=(1.0, 1.0)) -> Domain:
    """Rectangle of cells leaving ``margin`` exterior cells on every side."""
    mask = np.zeros(tuple(int(n) for n in sizes), dtype=bool)
    mask[margin:-margin, margin:-margin] = True
    return Domain(mask, tuple(cell_lengths))
