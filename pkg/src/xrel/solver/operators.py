"""Fourier-multiplier and cellwise operators on grid fields.

Extended fields have shape (*sizes, q, r) with r = q; T-valued fields have
shape (*sizes, q). Operators act on the left, column by column.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .. import _kernels
from ..transforms import w_transform
from .grid import Grid


def _as_columns(F: np.ndarray, grid: Grid):
    F = np.asarray(F)
    if F.ndim == grid.d + 1:
        return F[..., None], True
    if F.ndim != grid.d + 2 or F.shape[: grid.d] != grid.sizes or F.shape[grid.d] != grid.spec.q:
        raise ValueError(f"field shape {F.shape} does not fit grid {grid.sizes} with q={grid.spec.q}")
    return F, False


def cellwise(A: np.ndarray, F: np.ndarray) -> np.ndarray:
    """out(x) = A(x) F(x) through the selected kernel backend."""
    lead = F.shape[:-2]
    q, k = A.shape[-2:]
    r = F.shape[-1]
    A = np.broadcast_to(A, lead + (q, k)).reshape(-1, q, k)
    out = _kernels.cell_matmul(A, F.reshape(-1, k, r))
    return out.reshape(lead + (q, r))


@lru_cache(maxsize=16)
def _symbols(grid: Grid, L0_key: bytes):
    spec = grid.spec
    d, m, q = spec.d, spec.m, spec.q
    L0 = np.frombuffer(L0_key).reshape(q, q)
    k = grid.wavevectors(half=True)
    nk = np.linalg.norm(k, axis=-1)
    zero = nk == 0
    n = k / np.where(zero, 1.0, nk)[..., None]
    # acoustic tensor A(n)_ab = n_i n_j L0[(i,a),(j,b)]
    A = np.einsum("...i,...j,iajb->...ab", n, n, L0.reshape(d, m, d, m))
    A[zero] = np.eye(m)
    Ainv = np.linalg.inv(A)
    G = np.einsum("...i,...j,...ab->...iajb", n, n, Ainv).reshape(k.shape[:-1] + (q, q))
    G[zero] = 0.0
    G1 = np.einsum("...i,...j,ab->...iajb", n, n, np.eye(m)).reshape(k.shape[:-1] + (q, q))
    G1[zero] = 0.0
    G.setflags(write=False)
    G1.setflags(write=False)
    return G, G1


def gamma_symbols(grid: Grid, L0) -> np.ndarray:
    """Gamma(k) on the half spectrum, shape (*half_shape, q, q)."""
    return _symbols(grid, np.ascontiguousarray(L0, dtype=float).tobytes())[0]


def gamma1_symbols(grid: Grid) -> np.ndarray:
    return _symbols(grid, np.eye(grid.spec.q).tobytes())[1]


@lru_cache(maxsize=16)
def _closed_symbols(grid: Grid, L0_key: bytes, M_key: bytes):
    q = grid.spec.q
    G = gamma_symbols(grid, np.frombuffer(L0_key).reshape(q, q)).copy()
    # the mean and the pure Nyquist modes all carry a zero effective wavevector
    zero = np.linalg.norm(grid.wavevectors(half=True), axis=-1) == 0
    G[zero] = np.frombuffer(M_key).reshape(q, q)
    G.setflags(write=False)
    return G


def closed_gamma_symbols(grid: Grid, L0, M) -> np.ndarray:
    """Gamma with every zero-wavevector mode set to M, so that Psi(0) = 0.

    Psi(0) = 0 lies in the algebra spanned by Psi(k), k != 0. With Gamma(0) = 0
    instead, the mean of a K-valued field is fed back through M, which is
    generally outside that algebra.
    """
    key = lambda X: np.ascontiguousarray(X, dtype=float).tobytes()
    return _closed_symbols(grid, key(L0), key(M))


def apply_multiplier(F: np.ndarray, grid: Grid, symbols: np.ndarray) -> np.ndarray:
    Fc, vec = _as_columns(F, grid)
    Fh = grid.rfft(Fc)
    out = grid.irfft(cellwise(symbols, Fh))
    return out[..., 0] if vec else out


def apply_gamma(F: np.ndarray, grid: Grid, L0, zero_mode=None) -> np.ndarray:
    """Gamma F with Gamma(0) = 0, so the output is E-type.

    Passing ``zero_mode=M`` uses Gamma(0) = M instead (the closure used by the
    polarization iteration).
    """
    if zero_mode is None:
        return apply_multiplier(F, grid, gamma_symbols(grid, L0))
    return apply_multiplier(F, grid, closed_gamma_symbols(grid, L0, zero_mode))


def apply_gamma1(F: np.ndarray, grid: Grid) -> np.ndarray:
    return apply_multiplier(F, grid, gamma1_symbols(grid))


def apply_psi(F: np.ndarray, grid: Grid, L0, M, mean_mode: str = "drop") -> np.ndarray:
    """Psi F = M F - Gamma F.

    ``mean_mode="drop"`` (default) sets Psi(0) = 0; ``"keep"`` uses Gamma(0) = 0,
    so a constant field maps to M F.
    """
    if mean_mode not in ("drop", "keep"):
        raise ValueError(f"mean_mode must be 'drop' or 'keep', got {mean_mode!r}")
    Fc, vec = _as_columns(F, grid)
    zero_mode = M if mean_mode == "drop" else None
    out = np.einsum("ab,...bc->...ac", M, Fc) - apply_gamma(Fc, grid, L0, zero_mode=zero_mode)
    return out[..., 0] if vec else out


def K_field(Ldata: np.ndarray, L0, M) -> np.ndarray:
    """K(x) = W_M(L(x)) for every cell."""
    return w_transform(Ldata, L0, M)


def apply_K(F: np.ndarray, Kdata: np.ndarray) -> np.ndarray:
    """Cellwise K(x) F(x) with a precomputed K field."""
    if F.ndim == Kdata.ndim - 1:
        return cellwise(Kdata, F[..., None])[..., 0]
    return cellwise(Kdata, F)


@lru_cache(maxsize=16)
def _zero_projector(grid: Grid):
    q = grid.spec.q
    zero = np.linalg.norm(grid.wavevectors(half=True), axis=-1) == 0
    Z = np.zeros(zero.shape + (q, q))
    Z[zero] = np.eye(q)
    Z.setflags(write=False)
    return Z


def zero_mode_part(F: np.ndarray, grid: Grid) -> np.ndarray:
    """Component of F on modes with zero effective wavevector (mean and pure Nyquist)."""
    return apply_multiplier(F, grid, _zero_projector(grid))


def fluctuation(F: np.ndarray, grid: Grid) -> np.ndarray:
    return F - zero_mode_part(F, grid)


def e_type_residual(F: np.ndarray, grid: Grid, fluctuating: bool = False) -> float:
    """||F - Gamma_1 F|| / ||F||; the mean counts as a violation unless ``fluctuating``."""
    if fluctuating:
        F = fluctuation(F, grid)
    nF = np.linalg.norm(F)
    if nF == 0:
        return 0.0
    return float(np.linalg.norm(F - apply_gamma1(F, grid)) / nF)


def j_type_residual(F: np.ndarray, grid: Grid) -> float:
    """||Gamma_1 F|| / ||F||."""
    nF = np.linalg.norm(F)
    if nF == 0:
        return 0.0
    return float(np.linalg.norm(apply_gamma1(F, grid)) / nF)
