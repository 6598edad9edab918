"""Random coefficient and source fields, spectral resampling, and membership reports."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ContrastInfeasibleError, SingularMatrixError
from ..tensor_space import Subspace, residual, right_multiply_space
from ..transforms import ManifoldSpec, w_inverse
from .grid import Grid
from .iterate import CoefficientField


def rng_from_seed(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(int(seed)))


def smooth_random_fields(grid: Grid, n: int, smoothness: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` zero-mean Gaussian-filtered noise fields with unit max magnitude.

    Returns shape (*sizes, n); ``smoothness`` is the correlation length.
    """
    noise = rng.standard_normal(grid.sizes + (n,))
    k2 = np.sum(grid.wavevectors(half=True, nyquist_zero=False) ** 2, axis=-1)
    filt = np.exp(-0.5 * k2 * smoothness**2)
    filt.flat[0] = 0.0
    out = grid.irfft(grid.rfft(noise) * filt[..., None])
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def upsample(F: np.ndarray, grid: Grid, fine: Grid) -> np.ndarray:
    """Trigonometric interpolation of a band-limited field onto a finer grid.

    Nyquist modes of the coarse grid are dropped so the result stays real.
    """
    Fh = np.fft.fftn(F, axes=grid.axes)
    out = np.zeros(fine.sizes + F.shape[grid.d:], dtype=complex)
    src, dst = [], []
    for n, N in zip(grid.sizes, fine.sizes):
        kk = np.concatenate([np.arange(0, (n + 1) // 2), np.arange(-((n - 1) // 2), 0)])
        src.append(kk % n)
        dst.append(kk % N)
    out[np.ix_(*dst)] = Fh[np.ix_(*src)]
    return np.real(np.fft.ifftn(out, axes=grid.axes)) * (fine.ncells / grid.ncells)


def K0_valued_field(spec: ManifoldSpec, grid: Grid, smoothness: float, seed: int) -> np.ndarray:
    """Random smooth K0-valued field H(x) with max cell norm 1."""
    rng = rng_from_seed(seed)
    c = smooth_random_fields(grid, max(spec.K0.dim, 1), smoothness, rng)
    H = np.tensordot(c[..., : spec.K0.dim], spec.K0.basis, axes=(-1, 0))
    peak = np.sqrt(np.sum(H * H, axis=(-1, -2))).max()
    return H / peak if peak > 0 else H


def _field_from_K(spec: ManifoldSpec, grid: Grid, Kdata: np.ndarray) -> Optional[CoefficientField]:
    try:
        L = w_inverse(Kdata, spec.L0, spec.M)
    except SingularMatrixError:
        return None
    L = 0.5 * (L + np.swapaxes(L, -1, -2))
    if np.linalg.eigvalsh(L)[..., 0].min() <= 0:
        return None
    return CoefficientField(grid, L)


def manifold_field_from_K(spec: ManifoldSpec, grid: Grid, Kdata: np.ndarray) -> CoefficientField:
    Lf = _field_from_K(spec, grid, Kdata)
    if Lf is None:
        raise ContrastInfeasibleError("K field leaves the admissible region")
    return Lf


def amplitude_for_contrast(spec: ManifoldSpec, grid: Grid, H: np.ndarray, contrast: float,
                           base: Optional[np.ndarray] = None, iters: int = 60) -> float:
    """Largest amplitude a (bisection) with contrast(base + a H) <= contrast."""
    base = np.zeros_like(H) if base is None else base

    def ok(a):
        Lf = _field_from_K(spec, grid, base + a * H)
        return Lf is not None and Lf.contrast <= contrast

    if not ok(0.0):
        raise ContrastInfeasibleError(f"contrast {contrast} infeasible even at zero amplitude")
    lo, hi = 0.0, 1.0
    while ok(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e8:
            return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def make_manifold_field(spec: ManifoldSpec, grid: Grid, contrast: float, smoothness: float, seed: int,
                        amplitude: Optional[float] = None) -> CoefficientField:
    """Smooth random field with W_M(L(x)) in K0 for every cell.

    With ``amplitude=None`` the amplitude is the largest one keeping the
    contrast beta0/alpha0 at or below ``contrast``.
    """
    H = K0_valued_field(spec, grid, smoothness, seed)
    a = amplitude_for_contrast(spec, grid, H, contrast) if amplitude is None else float(amplitude)
    return manifold_field_from_K(spec, grid, a * H)


def make_source_field(S: Subspace, D, grid: Grid, smoothness: float, seed: int, amplitude: float = 1.0) -> np.ndarray:
    """Smooth zero-mean field with values in S D."""
    SD = S if D is None else right_multiply_space(S, D)
    rng = rng_from_seed(seed)
    c = smooth_random_fields(grid, SD.dim, smoothness, rng)
    return amplitude * np.tensordot(c, SD.basis, axes=(-1, 0))


HIST_EDGES = np.arange(-18.0, 1.0)


@dataclass
class MembershipReport:
    max_residual: float
    mean_residual: float
    tol: float
    n_cells: int
    histogram_edges: list = field(repr=False)
    histogram_counts: list = field(repr=False)
    residuals: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.max_residual < self.tol

    def to_dict(self, iterations=None, residual_history=None):
        out = {
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "tol": self.tol,
            "n_cells": self.n_cells,
            "verdict": "pass" if self.passed else "fail",
        }
        if iterations is not None:
            out["iterations"] = iterations
        if residual_history is not None:
            out["residual_history"] = list(residual_history)
        return out

    def histogram_rows(self):
        e, c = self.histogram_edges, self.histogram_counts
        return [(e[i], e[i + 1], c[i]) for i in range(len(c))]


def cell_relative_residuals(F: np.ndarray, target: Subspace) -> np.ndarray:
    """||F(x) - proj F(x)|| / max(||F(x)||, 1e-14 * max norm) per cell."""
    nrm = np.sqrt(np.sum(F * F, axis=tuple(range(F.ndim - len(target.shape), F.ndim))))
    floor = max(1e-14 * float(nrm.max(initial=0.0)), np.finfo(float).tiny)
    return residual(target, F) / np.maximum(nrm, floor)


def membership_report(F: np.ndarray, target: Subspace, tol: float = 1e-6,
                      exclusion_mask: Optional[np.ndarray] = None) -> MembershipReport:
    """Per-cell relative residuals against ``target``; cells with ``exclusion_mask`` True are skipped."""
    r = cell_relative_residuals(F, target)
    keep = np.ones(r.shape, dtype=bool) if exclusion_mask is None else ~np.asarray(exclusion_mask, dtype=bool)
    vals = r[keep]
    if vals.size == 0:
        vals = np.zeros(0)
    logs = np.log10(np.clip(vals, 1e-18, None))
    counts, _ = np.histogram(np.clip(logs, HIST_EDGES[0], HIST_EDGES[-1] - 1e-12), bins=HIST_EDGES)
    return MembershipReport(
        max_residual=float(vals.max()) if vals.size else 0.0,
        mean_residual=float(vals.mean()) if vals.size else 0.0,
        tol=tol,
        n_cells=int(vals.size),
        histogram_edges=HIST_EDGES.tolist(),
        histogram_counts=counts.tolist(),
        residuals=r,
    )
