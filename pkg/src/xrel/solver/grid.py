"""Periodic grids and the real FFT helpers used by every field operator."""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

from ..tensor_space import TensorSpaceSpec

_WORKERS = [max(1, int(os.environ.get("XREL_THREADS", "1") or 1))]


def set_workers(n: int) -> None:
    """Thread count for FFTs. Results do not depend on it."""
    _WORKERS[0] = max(1, int(n))


def get_workers() -> int:
    return _WORKERS[0]


@dataclass(frozen=True)
class Grid:
    """Periodic cell grid; cell centres sit at ``index * cell_length``.

    Parameters
    ----------
    spec : TensorSpaceSpec
    sizes : tuple of int
        Cells per axis, at least 8 each.
    cell_lengths : tuple of float, optional
        Spacing per axis, default 1.
    """

    spec: TensorSpaceSpec
    sizes: tuple
    cell_lengths: tuple = None

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        if len(sizes) != self.spec.d:
            raise ValueError(f"grid needs {self.spec.d} sizes, got {len(sizes)}")
        if min(sizes) < 8:
            raise ValueError("grid sizes must be >= 8")
        h = (1.0,) * len(sizes) if self.cell_lengths is None else tuple(float(x) for x in self.cell_lengths)
        if len(h) != len(sizes) or min(h) <= 0:
            raise ValueError("cell_lengths must be positive, one per axis")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "cell_lengths", h)

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def ncells(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_lengths))

    @property
    def lengths(self) -> tuple:
        return tuple(n * h for n, h in zip(self.sizes, self.cell_lengths))

    @property
    def axes(self) -> tuple:
        return tuple(range(self.d))

    def coords(self) -> list:
        """Cell-centre coordinates, one array per axis with ``indexing='ij'``."""
        return np.meshgrid(*[np.arange(n) * h for n, h in zip(self.sizes, self.cell_lengths)], indexing="ij")

    def min_image(self, x0) -> np.ndarray:
        """Periodic displacement x - x0 per cell, shape (*sizes, d)."""
        out = []
        for X, c, L in zip(self.coords(), x0, self.lengths):
            out.append((X - c + 0.5 * L) % L - 0.5 * L)
        return np.stack(out, axis=-1)

    @cached_property
    def half_shape(self) -> tuple:
        return self.sizes[:-1] + (self.sizes[-1] // 2 + 1,)

    def _freqs(self, half: bool, nyquist_zero: bool = True):
        fs = []
        for ax, (n, h) in enumerate(zip(self.sizes, self.cell_lengths)):
            if half and ax == self.d - 1:
                f = 2 * np.pi * scipy.fft.rfftfreq(n, h)
            else:
                f = 2 * np.pi * scipy.fft.fftfreq(n, h)
            if nyquist_zero and n % 2 == 0:
                # Nyquist component carries no direction; keeps Gamma(k) even in k
                f[n // 2] = 0.0
            fs.append(f)
        return fs

    def wavevectors(self, half: bool = True, nyquist_zero: bool = True) -> np.ndarray:
        """Discrete wavevectors, shape (*shape, d).

        Nyquist components are set to 0 unless ``nyquist_zero`` is False.
        """
        return np.stack(np.meshgrid(*self._freqs(half, nyquist_zero), indexing="ij"), axis=-1)

    def rfft(self, F: np.ndarray) -> np.ndarray:
        return scipy.fft.rfftn(F, axes=self.axes, workers=get_workers())

    def irfft(self, Fh: np.ndarray) -> np.ndarray:
        return scipy.fft.irfftn(Fh, s=self.sizes, axes=self.axes, workers=get_workers())

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.spec, tuple(n * factor for n in self.sizes), tuple(h / factor for h in self.cell_lengths))
