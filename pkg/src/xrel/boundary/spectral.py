"""Off-lattice evaluation of grid fields by exact Fourier multipliers.

A grid field is read as its trigonometric interpolant. Shifts ``F(x + delta)``
and straight-segment integrals along an axis are then diagonal in Fourier
space. At a Nyquist frequency the multiplier is replaced by its real part
(the average of the +k and -k branches) so real fields stay real.
"""
from __future__ import annotations

import numpy as np
import scipy.fft

from ..solver.grid import Grid, get_workers


def _freq(n: int, h: float, half: bool) -> np.ndarray:
    return 2 * np.pi * (scipy.fft.rfftfreq(n, h) if half else scipy.fft.fftfreq(n, h))


def _symmetrize(mult: np.ndarray, n: int) -> np.ndarray:
    if n % 2 == 0:
        mult = mult.copy()
        mult[n // 2] = mult[n // 2].real
    return mult


def shift_factor(n: int, h: float, delta: float, half: bool = False) -> np.ndarray:
    k = _freq(n, h, half)
    return _symmetrize(np.exp(1j * k * delta), n)


def segment_factor(n: int, h: float, delta: float, half: bool = False) -> np.ndarray:
    """(exp(i k delta) - 1) / (i k), equal to delta at k = 0."""
    k = _freq(n, h, half)
    kd = k * delta
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(k == 0, delta + 0j, (np.exp(1j * kd) - 1) / np.where(k == 0, 1.0, 1j * k))
    return _symmetrize(out, n)


def _apply(F: np.ndarray, grid: Grid, factors) -> np.ndarray:
    """Apply a separable multiplier; ``factors`` holds one 1D array per axis (rfft layout on the last)."""
    d = grid.d
    Fh = scipy.fft.rfftn(F, axes=tuple(range(d)), workers=get_workers())
    mult = factors[0]
    for f in factors[1:]:
        mult = np.multiply.outer(mult, f)
    Fh *= mult.reshape(mult.shape + (1,) * (F.ndim - d))
    return scipy.fft.irfftn(Fh, s=grid.sizes, axes=tuple(range(d)), workers=get_workers())


def shifted(F: np.ndarray, grid: Grid, delta) -> np.ndarray:
    """F(x + delta) at every cell centre x."""
    last = grid.d - 1
    facs = [shift_factor(n, h, float(dl), half=(ax == last))
            for ax, (n, h, dl) in enumerate(zip(grid.sizes, grid.cell_lengths, delta))]
    return _apply(F, grid, facs)


def segment_integral(F: np.ndarray, grid: Grid, axis: int, length: float, start_offset=None) -> np.ndarray:
    """Integral of F along ``x0 + t e_axis``, 0 <= t <= length, with ``x0 = x + start_offset``."""
    last = grid.d - 1
    start_offset = np.zeros(grid.d) if start_offset is None else np.asarray(start_offset, dtype=float)
    facs = []
    for ax, (n, h) in enumerate(zip(grid.sizes, grid.cell_lengths)):
        f = shift_factor(n, h, float(start_offset[ax]), half=(ax == last))
        if ax == axis:
            f = _symmetrize(f * segment_factor(n, h, length, half=(ax == last)), n)
        facs.append(f)
    return _apply(F, grid, facs)


def nyquist_split(F: np.ndarray, grid: Grid):
    """Split F into (F without any Nyquist-index mode, relative norm of the removed part).

    A mode with a Nyquist component has a trigonometric interpolant whose
    derivative along that axis is not resolved, so gradients and curls of the
    interpolant are only consistent once such modes are removed.
    """
    last = grid.d - 1
    facs = []
    for ax, n in enumerate(grid.sizes):
        f = np.ones(n // 2 + 1 if ax == last else n)
        if n % 2 == 0:
            f[n // 2] = 0.0
        facs.append(f)
    G = _apply(F, grid, facs)
    nF = float(np.linalg.norm(F))
    return G, (float(np.linalg.norm(F - G)) / nF if nF > 0 else 0.0)
