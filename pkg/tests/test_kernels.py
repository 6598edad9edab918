import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xrel import _kernels
from xrel._kernels import _pykernels

ck = _kernels._ckernels
needs_c = pytest.mark.skipif(ck is None, reason="compiled kernels not built")


def test_backend_name():
    assert _kernels.BACKEND in ("cython", "python")
    assert (_kernels.BACKEND == "cython") == (ck is not None)


def test_pure_python_forced():
    env = dict(os.environ, XREL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from xrel import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_c
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 40), st.integers(1, 6), st.integers(1, 6), st.integers(1, 4))
def test_cell_matmul_backends_agree(seed, n, q, k, r):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, q, k))
    b = rng.standard_normal((n, k, r))
    bc = b + 1j * rng.standard_normal((n, k, r))
    ref = _pykernels.cell_matmul(a, b)
    assert np.allclose(_kernels._c_cell_matmul(a, b), ref, rtol=1e-14, atol=1e-14)
    assert np.allclose(_kernels._c_cell_matmul(a, bc), _pykernels.cell_matmul(a, bc), rtol=1e-14, atol=1e-14)


def _random_mask(rng, n):
    from scipy import ndimage
    m = ndimage.binary_dilation(rng.random((n, n)) < 0.08, iterations=2)
    lab, k = ndimage.label(m)
    if k == 0:
        m[n // 2, n // 2] = True
        return m
    sizes = ndimage.sum(m, lab, range(1, k + 1))
    return lab == (1 + int(np.argmax(sizes)))


@needs_c
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(4, 40))
def test_tree_backends_identical(seed, n):
    rng = np.random.default_rng(seed)
    mask = _random_mask(rng, n)
    root = int(np.flatnonzero(mask)[0])
    m8 = np.ascontiguousarray(mask, dtype=np.uint8)
    py = _pykernels.bfs_tree(m8, root)
    c = ck.bfs_tree(m8, root)
    for x, y in zip(py, c):
        assert np.array_equal(np.asarray(x), np.asarray(y))
    order, parent = py[0], py[1]
    # tree covers the component exactly once
    assert len(np.unique(order)) == len(order) == int(mask.sum())
    inc = rng.standard_normal((len(order), 3))
    root_value = rng.standard_normal(3)
    wp = _pykernels.tree_integrate(order, parent, inc, root_value)
    wc = _kernels._c_tree_integrate(order, parent, inc, root_value)
    assert np.array_equal(np.asarray(wp)[order], np.asarray(wc)[order])


def test_tree_integrate_path():
    # chain 0 -> 1 -> 2 accumulates increments
    order = np.array([0, 1, 2], dtype=np.int64)
    parent = np.array([-1, 0, 1], dtype=np.int64)
    inc = np.array([[0.0], [1.5], [2.0]])
    w = _kernels.tree_integrate(order, parent, inc, np.array([1.0]))
    assert np.allclose(np.asarray(w)[:, 0], [1.0, 2.5, 4.5])
