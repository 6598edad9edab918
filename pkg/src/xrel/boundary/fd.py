"""Bounded-domain finite differences for L = delta_ij A(x) and the two-phase rank-one flux check."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import FACE_TYPES, Domain

SPD_TOL = 1e-12


def _check_spd(A, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if np.abs(A - A.T).max() > SPD_TOL * max(1.0, np.abs(A).max()):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(A).min() <= SPD_TOL * max(1.0, np.abs(A).max()):
        raise ValueError(f"{name} must be positive definite")
    return 0.5 * (A + A.T)


def _sym_power(A: np.ndarray, p: float) -> np.ndarray:
    w, V = np.linalg.eigh(A)
    return (V * w**p) @ V.T


def congruence_diagonalize(A1, A2):
    """W with W A2 W^T = I and W A1 W^T = diag(sigma), sigma in descending order.

    W = Q A2^{-1/2} where the rows of Q are eigenvectors of A2^{-1/2} A1 A2^{-1/2}.
    """
    A1, A2 = _check_spd(A1, "A1"), _check_spd(A2, "A2")
    isq = _sym_power(A2, -0.5)
    B = isq @ A1 @ isq
    sig, V = np.linalg.eigh(0.5 * (B + B.T))
    idx = np.argsort(sig)[::-1]
    Q = V[:, idx].T
    return Q @ isq, sig[idx]


@dataclass
class TwoPhaseSpec:
    """Two SPD m x m phases and an indicator (True marks phase 1) on the lattice."""

    A1: np.ndarray
    A2: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        self.A1 = _check_spd(self.A1, "A1")
        self.A2 = _check_spd(self.A2, "A2")
        if self.A1.shape != self.A2.shape:
            raise ValueError("A1 and A2 must have the same size")
        self.phase = np.asarray(self.phase, dtype=bool)

    @property
    def m(self) -> int:
        return self.A1.shape[0]

    def field(self) -> np.ndarray:
        return np.where(self.phase[..., None, None], self.A1, self.A2)

    def congruent(self, G) -> "TwoPhaseSpec":
        G = np.asarray(G, dtype=float)
        return TwoPhaseSpec(G @ self.A1 @ G.T, G @ self.A2 @ G.T, self.phase)


def checkerboard(sizes, block: int = 8) -> np.ndarray:
    I, J = np.meshgrid(np.arange(sizes[0]), np.arange(sizes[1]), indexing="ij")
    return ((I // block + J // block) % 2) == 0


@dataclass
class FDSolution:
    u: np.ndarray
    flux: np.ndarray
    conservation: np.ndarray
    boundary_cells: np.ndarray

    def to_dict(self):
        return {"conservation": [float(x) for x in self.conservation], "n_boundary": int(len(self.boundary_cells))}


def _face_coeff(Ac, An):
    # harmonic mean 2 (Ac^{-1} + An^{-1})^{-1}; congruence-covariant and symmetric
    return 2.0 * np.linalg.inv(np.linalg.inv(Ac) + np.linalg.inv(An))


def fd_solve_dirichlet(domain: Domain, Afield, u_boundary) -> FDSolution:
    """Five-point solve of div(A grad u) = 0 with u prescribed on the boundary cells.

    Parameters
    ----------
    domain : Domain
    Afield : ndarray, shape (m, m) or (n0, n1, m, m)
    u_boundary : ndarray, shape (n_b, m)
        Values on ``domain.boundary_cells``, same order.

    Returns
    -------
    FDSolution
        ``u`` is NaN outside the mask. ``flux[b]`` is the outward flux
        ``sum_faces A_f (u_b - u_nb) l/h`` leaving boundary cell ``b``, i.e. the
        discrete integral of n.J over that cell's share of the boundary; the
        fluxes sum to zero exactly in exact arithmetic.
    """
    mask = domain.mask
    n0, n1 = mask.shape
    A = np.asarray(Afield, dtype=float)
    if A.ndim == 2:
        A = np.broadcast_to(A, (n0, n1) + A.shape)
    m = A.shape[-1]
    ub = np.asarray(u_boundary, dtype=float).reshape(len(domain.boundary_cells), m)
    bcells = domain.boundary_cells
    inner = domain.interior_mask
    assert inner.any(), "domain has no interior cells"
    uid = -np.ones(mask.shape, dtype=np.int64)
    icells = np.argwhere(inner)
    uid[tuple(icells.T)] = np.arange(len(icells))
    bid = -np.ones(mask.shape, dtype=np.int64)
    bid[tuple(bcells.T)] = np.arange(len(bcells))
    h = domain.cell_lengths
    # face weight: face length / centre distance
    wts = {0: h[1] / h[0], 1: h[0] / h[1]}
    n = len(icells) * m
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    blk = np.arange(m)
    for c, (i, j) in enumerate(icells):
        diag = np.zeros((m, m))
        for ax, sg in FACE_TYPES:
            ii, jj = (i + sg, j) if ax == 0 else (i, j + sg)
            Af = wts[ax] * _face_coeff(A[i, j], A[ii, jj])
            diag += Af
            if uid[ii, jj] >= 0:
                r, cc = np.meshgrid(c * m + blk, uid[ii, jj] * m + blk, indexing="ij")
                rows.append(r.ravel()); cols.append(cc.ravel()); vals.append(-Af.ravel())
            else:
                rhs[c * m:(c + 1) * m] += Af @ ub[bid[ii, jj]]
        r, cc = np.meshgrid(c * m + blk, c * m + blk, indexing="ij")
        rows.append(r.ravel()); cols.append(cc.ravel()); vals.append(diag.ravel())
    Amat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    sol = spla.spsolve(Amat.tocsc(), rhs)
    assert np.all(np.isfinite(sol)), "singular finite-difference system"
    u = np.full((n0, n1, m), np.nan)
    u[tuple(icells.T)] = sol.reshape(-1, m)
    u[tuple(bcells.T)] = ub
    flux = np.zeros((len(bcells), m))
    for b, (i, j) in enumerate(bcells):
        for ax, sg in FACE_TYPES:
            ii, jj = (i + sg, j) if ax == 0 else (i, j + sg)
            if mask[ii, jj]:
                flux[b] += wts[ax] * _face_coeff(A[i, j], A[ii, jj]) @ (u[i, j] - u[ii, jj])
    scale = np.abs(flux).sum(axis=0)
    cons = np.abs(flux.sum(axis=0)) / np.where(scale > 0, scale, 1.0)
    return FDSolution(u, flux, cons, bcells)


@dataclass
class MilgromReport:
    ratio: float
    sin_angle: float
    sin_angle_wt_column: float
    singular_values: np.ndarray
    direction: np.ndarray
    predicted: np.ndarray
    sigma: np.ndarray
    conservation: np.ndarray
    mode: int

    def passed(self, ratio_tol: float = 1e-8, angle_tol: float = 1e-8) -> bool:
        return self.ratio < ratio_tol and self.sin_angle < angle_tol

    def to_dict(self):
        return {
            "mode": self.mode,
            "ratio": self.ratio,
            "sin_angle": self.sin_angle,
            "sin_angle_wt_column": self.sin_angle_wt_column,
            "singular_values": [float(s) for s in self.singular_values],
            "direction": [float(x) for x in self.direction],
            "predicted": [float(x) for x in self.predicted],
            "sigma": [float(x) for x in self.sigma],
            "conservation": [float(x) for x in self.conservation],
        }


def _sin_between(a, b) -> float:
    # norm of the part of a orthogonal to b; sqrt(1 - cos^2) bottoms out at sqrt(eps)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return float(min(1.0, np.linalg.norm(a - (a @ b) * b)))


def milgrom_boundary_data(domain: Domain, W, k: int, profile=None) -> np.ndarray:
    """Boundary values u = W^T u~ with u~ nonzero only in component k.

    ``profile`` maps boundary coordinates (n_b, 2) to the scalar u~_k; the
    default is a non-affine polynomial so the interior solve is nontrivial.
    """
    x = domain.boundary_cells * np.asarray(domain.cell_lengths) - domain.centroid
    if profile is None:
        s = np.abs(x).max()
        y = x / s
        vals = y[:, 0] + 0.5 * y[:, 1] + y[:, 0] * y[:, 1] + 0.3 * y[:, 0] ** 2 * y[:, 1]
    else:
        vals = np.asarray(profile(x), dtype=float)
    m = W.shape[0]
    ut = np.zeros((len(x), m))
    ut[:, k] = vals
    return ut @ W  # rows: (W^T ut)^T


def milgrom_flux_check(spec: TwoPhaseSpec, domain: Domain, k: int = 0, profile=None, u_boundary=None,
                       W=None) -> MilgromReport:
    """Rank of the boundary flux matrix for single-component transformed Dirichlet data.

    The flux n.J equals alpha(x) v with v = W^{-1} e_k (equivalently A2 W^T e_k).
    ``sin_angle_wt_column`` measures the angle to the bare column W^T e_k and is
    reported as a diagnostic only.
    """
    if W is None:
        W, sig = congruence_diagonalize(spec.A1, spec.A2)
    else:
        sig = np.diag(W @ spec.A1 @ W.T)
    if not 0 <= k < spec.m:
        raise ValueError(f"mode index {k} out of range")
    ub = milgrom_boundary_data(domain, W, k, profile) if u_boundary is None else u_boundary
    sol = fd_solve_dirichlet(domain, spec.field(), ub)
    s = np.linalg.svd(sol.flux, compute_uv=False)
    _, _, Vt = np.linalg.svd(sol.flux, full_matrices=False)
    v = Vt[0]
    pred = np.linalg.solve(W, np.eye(spec.m)[k])
    wt_col = W.T[:, k]
    ratio = float(s[1] / s[0]) if len(s) > 1 and s[0] > 0 else 0.0
    return MilgromReport(ratio, _sin_between(v, pred), _sin_between(v, wt_col), s, v, pred / np.linalg.norm(pred),
                         np.asarray(sig), sol.conservation, k)
