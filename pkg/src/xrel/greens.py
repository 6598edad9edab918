"""Point-source experiments: smoothed deltas, the kernel field T(x, x0), adjoint symmetry."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import SingularMatrixError
from .solver import (CoefficientField, Grid, SolveOptions, apply_K, iterate_polarization, membership_report,
                     polarization_partial_sums, solve_E_form)
from .solver.fields import rng_from_seed
from .tensor_space import Subspace


@dataclass(frozen=True)
class DeltaSpec:
    """Truncated Gaussian bump.

    Parameters
    ----------
    center : tuple of float
        Centre in grid-index units (physical position is ``center * cell_length``).
    width : float
        Physical standard deviation epsilon.
    truncation : float
        Support radius in units of ``width``.
    """

    center: tuple
    width: float
    truncation: float = 6.0

    def position(self, grid: Grid) -> np.ndarray:
        return np.asarray(self.center, dtype=float) * np.asarray(grid.cell_lengths)


def smooth_delta(grid: Grid, spec: DeltaSpec) -> np.ndarray:
    """Periodized bump with unit discrete integral ``sum(delta) * cell_volume = 1``."""
    if spec.width < 2 * min(grid.cell_lengths) * (1 - 1e-12):
        raise ValueError(f"delta width {spec.width} is below two grid spacings")
    r = np.linalg.norm(grid.min_image(spec.position(grid)), axis=-1)
    g = np.where(r < spec.truncation * spec.width, np.exp(-0.5 * (r / spec.width) ** 2), 0.0)
    return g / (g.sum() * grid.cell_volume)


def solve_point_source(Lfield: CoefficientField, L0, M, x0, S0, delta: DeltaSpec,
                       opts: SolveOptions = SolveOptions()):
    """Polarization for the source S(x) = S0 delta_eps(x - x0).

    ``x0`` (grid-index units) overrides the delta centre when given.
    Returns ``(P, diagnostics)``.
    """
    if x0 is not None:
        delta = replace(delta, center=tuple(float(c) for c in x0))
    S = smooth_delta(Lfield.grid, delta)[..., None, None] * np.asarray(S0, dtype=float)
    return iterate_polarization(S, Lfield, L0, M, opts)


@dataclass
class KernelField:
    """T(x, x0) per cell; cells with |x - x0| < r_ex form the excluded diagonal region."""

    grid: Grid
    data: np.ndarray
    x0: np.ndarray
    r_ex: float
    s0_condition: float = 1.0

    @property
    def distance(self) -> np.ndarray:
        return np.linalg.norm(self.grid.min_image(self.x0), axis=-1)

    @property
    def mask(self) -> np.ndarray:
        return self.distance < self.r_ex


def assemble_T(P: np.ndarray, S0, delta: DeltaSpec, grid: Grid, r_factor: float = 5.0) -> KernelField:
    """T(x, x0) = P(x) S0^{-1}, diagonal region flagged at ``r_factor * width``."""
    S0 = np.asarray(S0, dtype=float)
    cond = float(np.linalg.cond(S0))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMatrixError(f"S0 is singular (cond={cond:.3e})")
    T = np.einsum("...ab,bc->...ac", P, np.linalg.inv(S0))
    return KernelField(grid, T, delta.position(grid), r_factor * delta.width, cond)


def kernel_membership(T: KernelField, K: Subspace, tol: float = 1e-5):
    return membership_report(T.data, K, tol, exclusion_mask=T.mask)


def _sample(F: np.ndarray, grid: Grid, delta: DeltaSpec, at, sampling: str) -> np.ndarray:
    if sampling == "delta":
        w = smooth_delta(grid, replace(delta, center=tuple(at))) * grid.cell_volume
        return np.tensordot(w, F, axes=(tuple(range(grid.d)), tuple(range(grid.d))))
    if sampling == "stencil":
        idx = np.rint(np.asarray(at)).astype(int)
        acc = 0.0
        offs = np.stack(np.meshgrid(*[[-1, 0, 1]] * grid.d, indexing="ij"), -1).reshape(-1, grid.d)
        for o in offs:
            acc = acc + F[tuple((idx + o) % np.asarray(grid.sizes))]
        return acc / len(offs)
    raise ValueError(f"unknown sampling {sampling!r}")


@dataclass
class AdjointReport:
    residual: float
    residual_stencil: float
    norm: float
    separation: float
    iterations: tuple

    def to_dict(self):
        return {
            "residual": self.residual,
            "residual_stencil": self.residual_stencil,
            "kernel_norm": self.norm,
            "separation": self.separation,
            "iterations": list(self.iterations),
        }


def adjoint_symmetry_check(Lfield: CoefficientField, L0, M, x0, x1, delta: DeltaSpec,
                           opts: SolveOptions = SolveOptions()) -> AdjointReport:
    """Compare T(x1, x0) with T(x0, x1)^T.

    ``residual`` samples each kernel by weighting with the same smoothed delta
    used as the source, which is an exact discrete reciprocity pair.
    ``residual_stencil`` samples by a 3^d box average instead and carries the
    mismatch between the two smoothing shapes.
    """
    grid = Lfield.grid
    if np.abs(Lfield.data - np.swapaxes(Lfield.data, -1, -2)).max() > 1e-12:
        raise ValueError("adjoint check needs a symmetric coefficient field")
    p0 = np.asarray(x0, dtype=float) * np.asarray(grid.cell_lengths)
    p1 = np.asarray(x1, dtype=float) * np.asarray(grid.cell_lengths)
    L = np.asarray(grid.lengths)
    sep = float(np.linalg.norm((p1 - p0 + 0.5 * L) % L - 0.5 * L))
    if sep < 10 * delta.width * (1 - 1e-12):
        raise ValueError(f"source separation {sep} is below 10 delta widths")
    eye = np.eye(grid.spec.q)
    P0, d0 = solve_point_source(Lfield, L0, M, x0, eye, delta, opts)
    P1, d1 = solve_point_source(Lfield, L0, M, x1, eye, delta, opts)
    out = []
    for mode in ("delta", "stencil"):
        A = _sample(P0, grid, delta, x1, mode)
        B = _sample(P1, grid, delta, x0, mode)
        nA = float(np.linalg.norm(A))
        out.append((float(np.linalg.norm(A - B.T)) / nA if nA > 0 else 0.0, nA))
    return AdjointReport(out[0][0], out[1][0], out[0][1], sep, (d0.iterations, d1.iterations))


def compact_random_source(grid: Grid, center, radius: float, seed: int) -> np.ndarray:
    """T-valued smooth random field supported in a ball."""
    rng = rng_from_seed(seed)
    r = np.linalg.norm(grid.min_image(np.asarray(center, dtype=float) * np.asarray(grid.cell_lengths)), axis=-1)
    bump = np.where(r < radius, np.cos(0.5 * np.pi * r / radius) ** 2, 0.0)
    coef = rng.standard_normal((grid.spec.q, 3))
    X = grid.coords()
    waves = [np.cos(2 * np.pi * (j + 1) * X[0] / grid.lengths[0] + X[-1] / grid.lengths[-1] * 2 * np.pi * j)
             for j in range(3)]
    h = np.stack([sum(coef[a, j] * waves[j] for j in range(3)) for a in range(grid.spec.q)], axis=-1)
    return h * bump[..., None]


def reciprocity_check(Lfield: CoefficientField, L0, M, h1, h2, opts: SolveOptions = SolveOptions()) -> dict:
    """|<G h1, h2> - <h1, G h2>| relative to ||G h1|| ||h2||, with G h the E-form solution."""
    E1, _, a = solve_E_form(h1, Lfield, L0, opts, M=M)
    E2, _, b = solve_E_form(h2, Lfield, L0, opts, M=M)
    lhs, rhs = float(np.sum(E1 * h2)), float(np.sum(h1 * E2))
    scale = float(np.linalg.norm(E1) * np.linalg.norm(h2))
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs) / scale if scale > 0 else 0.0,
            "iterations": [a.iterations, b.iterations]}


def neumann_kernel_partial_sum(Lfield: CoefficientField, L0, M, x0, S0, delta: DeltaSpec, order: int,
                               lam: float, return_all: bool = False):
    """Partial sum of the series for the point-source polarization at coupling ``lam``.

    Order 0 is ``lam K S``; each further order applies ``lam K Psi`` once more.
    """
    if not 0 <= order <= 6:
        raise ValueError("order must lie in [0, 6]")
    if x0 is not None:
        delta = replace(delta, center=tuple(float(c) for c in x0))
    S = smooth_delta(Lfield.grid, delta)[..., None, None] * np.asarray(S0, dtype=float)
    sums = polarization_partial_sums(S, Lfield, L0, M, lam, order)
    return sums if return_all else sums[-1]
