# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same contracts as _pykernels."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def cell_matmul_real(const double[:, :, ::1] a, const double[:, :, ::1] b):
    cdef Py_ssize_t n = a.shape[0], q = a.shape[1], k = a.shape[2], r = b.shape[2]
    cdef Py_ssize_t c, i, j, l
    cdef double s
    out = np.empty((n, q, r))
    cdef double[:, :, ::1] o = out
    with nogil:
        for c in range(n):
            for i in range(q):
                for j in range(r):
                    s = 0.0
                    for l in range(k):
                        s = s + a[c, i, l] * b[c, l, j]
                    o[c, i, j] = s
    return out


def cell_matmul_complex(const double[:, :, ::1] a, const double complex[:, :, ::1] b):
    cdef Py_ssize_t n = a.shape[0], q = a.shape[1], k = a.shape[2], r = b.shape[2]
    cdef Py_ssize_t c, i, j, l
    cdef double sr, si, x
    out = np.empty((n, q, r), dtype=np.complex128)
    cdef double complex[:, :, ::1] o = out
    with nogil:
        for c in range(n):
            for i in range(q):
                for j in range(r):
                    sr = 0.0
                    si = 0.0
                    for l in range(k):
                        x = a[c, i, l]
                        sr = sr + x * b[c, l, j].real
                        si = si + x * b[c, l, j].imag
                    o[c, i, j] = sr + 1j * si
    return out


def bfs_tree(mask, Py_ssize_t root):
    cdef Py_ssize_t nx = mask.shape[0], ny = mask.shape[1], ncell = nx * ny
    cdef const cnp.uint8_t[::1] flat = np.ascontiguousarray(mask, dtype=np.uint8).ravel()
    order_a = np.empty(ncell, dtype=np.int64)
    parent_a = np.empty(ncell, dtype=np.int64)
    axis_a = np.empty(ncell, dtype=np.int64)
    sign_a = np.empty(ncell, dtype=np.int64)
    seen_a = np.zeros(ncell, dtype=np.uint8)
    cdef cnp.int64_t[::1] order = order_a, parent = parent_a, axis = axis_a, sign = sign_a
    cdef cnp.uint8_t[::1] seen = seen_a
    cdef Py_ssize_t head = 0, tail = 1, c, i, j, ii, jj, nb, s
    cdef int ax[4]
    cdef int sg[4]
    ax[0] = 0; ax[1] = 0; ax[2] = 1; ax[3] = 1
    sg[0] = 1; sg[1] = -1; sg[2] = 1; sg[3] = -1
    order[0] = root; parent[0] = -1; axis[0] = -1; sign[0] = 0
    seen[root] = 1
    with nogil:
        while head < tail:
            c = order[head]
            head += 1
            i = c // ny
            j = c - i * ny
            for s in range(4):
                if ax[s] == 0:
                    ii = i + sg[s]; jj = j
                else:
                    ii = i; jj = j + sg[s]
                if ii < 0 or ii >= nx or jj < 0 or jj >= ny:
                    continue
                nb = ii * ny + jj
                if flat[nb] and not seen[nb]:
                    seen[nb] = 1
                    order[tail] = nb
                    parent[tail] = c
                    axis[tail] = ax[s]
                    sign[tail] = sg[s]
                    tail += 1
    return order_a[:tail].copy(), parent_a[:tail].copy(), axis_a[:tail].copy(), sign_a[:tail].copy()


def tree_integrate(const cnp.int64_t[::1] order, const cnp.int64_t[::1] parent,
                   const double[:, ::1] increments, root_value):
    cdef Py_ssize_t n = 0, k, a, t = increments.shape[1], ln = order.shape[0]
    for k in range(ln):
        if order[k] + 1 > n:
            n = order[k] + 1
    w_a = np.zeros((n, t))
    cdef double[:, ::1] w = w_a
    cdef const double[::1] rv = np.ascontiguousarray(np.broadcast_to(root_value, (t,)), dtype=float)
    for a in range(t):
        w[order[0], a] = rv[a]
    with nogil:
        for k in range(1, ln):
            for a in range(t):
                w[order[k], a] = w[parent[k], a] + increments[k, a]
    return w_a
