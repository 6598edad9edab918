"""The fractional linear transform W_M, the L_lambda family, and lamination.

All matrix functions broadcast over leading batch axes so that coefficient
fields can be transformed cell by cell in one call.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import physics
from .errors import SingularMatrixError
from .physics import MChoice
from .tensor_space import Subspace, TensorSpaceSpec, maximal_S, residual, trace_free_symmetric

COND_WARN = 1e12


class ConditioningWarning(UserWarning):
    """A transform inverted a badly conditioned matrix."""


def _solve_checked(A, B, what: str):
    """Solve A X = B batched, raising on singular A and warning when cond(A) > 1e12."""
    try:
        X = np.linalg.solve(A, B)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"{what} is singular") from exc
    if not np.all(np.isfinite(X)):
        raise SingularMatrixError(f"{what} is singular")
    cond = np.linalg.cond(A)
    worst = float(np.max(cond))
    if not np.isfinite(worst) or worst * np.finfo(float).eps > 1e-2:
        raise SingularMatrixError(f"{what} is singular within tolerance (cond={worst:.3e})")
    if worst > COND_WARN:
        warnings.warn(f"{what} has condition number {worst:.3e}", ConditioningWarning, stacklevel=3)
    return X


def w_transform(L, L0, M) -> np.ndarray:
    """[I + (L - L0) M]^{-1} (L - L0)."""
    L = np.asarray(L, dtype=float)
    dL = L - L0
    eye = np.eye(L.shape[-1])
    return _solve_checked(eye + dL @ M, dL, "I + (L - L0) M")


def w_inverse(K, L0, M) -> np.ndarray:
    """L0 + K (I - M K)^{-1}."""
    K = np.asarray(K, dtype=float)
    eye = np.eye(K.shape[-1])
    A = eye - M @ K
    # X = K A^{-1}  <=>  A^T X^T = K^T
    Xt = _solve_checked(np.swapaxes(A, -1, -2), np.swapaxes(K, -1, -2), "I - M K")
    return L0 + np.swapaxes(Xt, -1, -2)


@dataclass(frozen=True, eq=False)
class ManifoldSpec:
    """Manifold W_M^{-1}(K0) with its reference pair (L0, M).

    ``K`` is the full subspace used for polarization membership; it defaults
    to ``K0``. ``S`` defaults to the maximal source space of ``K``.
    """

    K0: Subspace
    L0: np.ndarray
    M: np.ndarray
    tspec: TensorSpaceSpec
    K: Optional[Subspace] = None
    S: Optional[Subspace] = None
    name: str = "custom"

    def __post_init__(self):
        physics.check_reference(self.L0, self.tspec)
        physics.check_M(self.M, self.L0)
        for b in self.K0.basis:
            if not np.allclose(b, b.T, atol=1e-12):
                raise ValueError("K0 basis elements must be symmetric")
        if self.K is None:
            object.__setattr__(self, "K", self.K0)
        if self.S is None:
            object.__setattr__(self, "S", maximal_S(self.K))


def dykhne(sigma0: float = 1.0) -> ManifoldSpec:
    """Constant-determinant 2D conductivity: L0 = sigma0 I, M = I/(2 sigma0)."""
    tspec = TensorSpaceSpec(2, 1)
    L0 = sigma0 * np.eye(2)
    M = np.eye(2) / (2 * sigma0)
    return ManifoldSpec(trace_free_symmetric(2), L0, M, tspec, name="dykhne")


def manifold_membership(L, spec: ManifoldSpec):
    """Residual of W_M(L) against K0 (batched)."""
    return residual(spec.K0, w_transform(L, spec.L0, spec.M))


def l_lambda(L, L0, M, lam: float) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    if lam == 1.0:
        return L.copy()
    if lam == 0.0:
        return np.broadcast_to(L0, L.shape).copy()
    dL = L - L0
    eye = np.eye(L.shape[-1])
    return L0 + lam * _solve_checked(eye + (1 - lam) * dL @ M, dL, "I + (1 - lambda)(L - L0) M")


@dataclass
class CoercivityReport:
    m_condition_gap: float
    m_condition_ok: bool
    alpha0: float
    alpha_floor: float
    min_eig: float
    min_eigs: list = field(repr=False)
    passed: bool
    reason: str = ""

    def to_dict(self):
        return {
            "m_condition_gap": self.m_condition_gap,
            "alpha0": self.alpha0,
            "alpha_floor": self.alpha_floor,
            "min_eig": self.min_eig,
            "verdict": "pass" if self.passed else "fail",
            "reason": self.reason,
        }


def coercivity_certificate(L, L0, M, lambda_grid=None, alpha_floor: Optional[float] = None) -> CoercivityReport:
    """Numerical check that every L_lambda on the grid stays coercive."""
    L, L0, M = (np.asarray(X, dtype=float) for X in (L, L0, M))
    lams = np.linspace(0.0, 1.0, 101) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    alpha0 = float(np.linalg.eigvalsh(0.5 * (L + np.swapaxes(L, -1, -2))).min())
    floor = alpha0 / 10 if alpha_floor is None else float(alpha_floor)
    gap = float(np.linalg.eigvalsh(M - M @ L0 @ M).min())
    if gap < -physics.M_TOL * max(1.0, np.abs(M).max()):
        return CoercivityReport(gap, False, alpha0, floor, float("nan"), [], False, "M L0 M <= M violated")
    mins = []
    for lam in lams:
        Ll = l_lambda(L, L0, M, float(lam))
        mins.append(float(np.linalg.eigvalsh(0.5 * (Ll + np.swapaxes(Ll, -1, -2))).min()))
    lo = min(mins)
    ok = lo >= floor
    return CoercivityReport(gap, True, alpha0, floor, lo, mins, ok, "" if ok else "min eigenvalue below floor")


def laminate(La, Lb, f: float, n, L0, tspec: TensorSpaceSpec | None = None) -> np.ndarray:
    """Rank-one laminate: L* = W_n^{-1}(f W_n(La) + (1 - f) W_n(Lb)) with M = Gamma(n)."""
    if not 0.0 <= f <= 1.0:
        raise ValueError("volume fraction must lie in [0, 1]")
    La, Lb, L0 = (np.asarray(X, dtype=float) for X in (La, Lb, L0))
    if f == 0.0:
        return Lb.copy()
    if f == 1.0:
        return La.copy()
    n = np.asarray(n, dtype=float)
    tspec = tspec or TensorSpaceSpec(len(n), La.shape[0] // len(n))
    Mn = physics.gamma(tspec, n / np.linalg.norm(n), L0)
    Ks = f * w_transform(La, L0, Mn) + (1 - f) * w_transform(Lb, L0, Mn)
    Ls = w_inverse(Ks, L0, Mn)
    return 0.5 * (Ls + Ls.T)


def laminate_trajectory(La, Lb, spec: ManifoldSpec, angles, fractions) -> list:
    """Rows (f, n_angle, L11, L12, L22, det, membership_residual) for 2x2 tensors."""
    rows = []
    for th in angles:
        n = np.array([np.cos(th), np.sin(th)])
        for f in fractions:
            Ls = laminate(La, Lb, float(f), n, spec.L0, spec.tspec)
            rows.append(
                (float(f), float(th), Ls[0, 0], Ls[0, 1], Ls[1, 1], float(np.linalg.det(Ls)),
                 float(manifold_membership(Ls, spec)))
            )
    return rows


def random_on_manifold(spec: ManifoldSpec, rng, amplitude: float = 0.8, n: int | None = None):
    """Draw W_M^{-1}(K) with K a random K0 element of norm below ``amplitude`` times the validity radius."""
    shape = () if n is None else (n,)
    coef = rng.standard_normal(shape + (spec.K0.dim,))
    K = np.tensordot(coef, spec.K0.basis, axes=(-1, 0))
    # largest eigenvalue of M K must stay below one for I - M K to be invertible
    rad = np.abs(np.linalg.eigvals(spec.M @ K)).max(axis=-1)
    scale = amplitude * rng.uniform(0.1, 1.0, size=shape) / np.maximum(rad, 1e-300)
    K = K * np.asarray(scale)[..., None, None]
    L = w_inverse(K, spec.L0, spec.M)
    return 0.5 * (L + np.swapaxes(L, -1, -2))
