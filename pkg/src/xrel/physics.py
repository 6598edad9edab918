"""Fourier symbols of the primary equations: Gamma_1(k), Gamma(k), Psi(k), and M.

For the primary equations Gamma_1(k) acts on a d x m matrix A as
``k (k . A) / |k|^2``, i.e. ``kron(n n^T, I_m)`` with ``n = k/|k|``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidMError
from .tensor_space import TensorSpaceSpec

PINV_CUTOFF = 1e-12
M_TOL = 1e-12


def check_reference(L0, spec: TensorSpaceSpec | None = None) -> np.ndarray:
    """Validate L0 as symmetric positive definite."""
    L0 = np.asarray(L0, dtype=float)
    if spec is not None:
        spec.check_endo(L0)
    if not np.allclose(L0, L0.T, rtol=0, atol=1e-13 * max(1.0, np.abs(L0).max())):
        raise ValueError("L0 must be symmetric")
    if np.linalg.eigvalsh(L0).min() <= 0:
        raise ValueError("L0 must be positive definite")
    return L0


def gamma1(spec: TensorSpaceSpec, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    nk = np.linalg.norm(k)
    if nk == 0.0:
        return np.zeros((spec.q, spec.q))
    n = k / nk
    return np.kron(np.outer(n, n), np.eye(spec.m))


def gamma(spec: TensorSpaceSpec, k, L0, gamma1_fn: Optional[Callable] = None) -> np.ndarray:
    """Gamma(k) = G1 [G1 L0 G1]^+ G1 with the inverse taken on range(G1).

    ``gamma1_fn`` overrides the built-in projection for other physics.
    """
    L0 = np.asarray(L0, dtype=float)
    P = gamma1_fn(k) if gamma1_fn is not None else gamma1(spec, k)
    if not P.any():
        return np.zeros_like(P)
    G = P @ L0 @ P
    lam, V = np.linalg.eigh(0.5 * (G + G.T))
    keep = lam > PINV_CUTOFF * lam.max()
    rank_p = int(np.sum(np.linalg.eigvalsh(P) > 0.5))
    assert keep.sum() == rank_p, "G1 L0 G1 is singular on the range of G1"
    Vk = V[:, keep]
    pinv = (Vk / lam[keep]) @ Vk.T
    out = P @ pinv @ P
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class MChoice:
    """How M is built: ``sphere_average``, ``single_direction`` or ``custom``."""

    kind: str = "sphere_average"
    order: Optional[int] = None
    n0: Optional[tuple] = None
    matrix: Optional[np.ndarray] = None


def check_M(M, L0, tol: float = M_TOL) -> float:
    """Return min eigenvalue of M - M L0 M; raise if M violates M L0 M <= M."""
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, rtol=0, atol=1e-13 * max(1.0, np.abs(M).max())):
        raise InvalidMError("M must be symmetric")
    if np.linalg.eigvalsh(0.5 * (M + M.T)).min() < -tol:
        raise InvalidMError("M must be positive semidefinite")
    gap = np.linalg.eigvalsh(M - M @ L0 @ M).min()
    if gap < -tol * max(1.0, np.abs(M).max()):
        raise InvalidMError(f"M L0 M <= M violated (min eigenvalue {gap:.3e})")
    return float(gap)


def sphere_nodes(d: int, order=None):
    """Unit directions and weights summing to one."""
    if d == 2:
        n = 128 if order is None else int(order)
        th = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(n, 1.0 / n)
    nt, nphi = (32, 64) if order is None else tuple(np.broadcast_to(order, 2))
    x, w = np.polynomial.legendre.leggauss(int(nt))
    phi = 2 * np.pi * np.arange(int(nphi)) / int(nphi)
    st = np.sqrt(1 - x**2)
    dirs = np.stack(
        [np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(x, np.ones_like(phi))], axis=-1
    ).reshape(-1, 3)
    wts = np.outer(w / 2, np.full(int(nphi), 1.0 / int(nphi))).ravel()
    return dirs, wts


def build_M(spec: TensorSpaceSpec, L0, choice: MChoice = MChoice()) -> np.ndarray:
    L0 = check_reference(L0, spec)
    if choice.kind == "sphere_average":
        dirs, wts = sphere_nodes(spec.d, choice.order)
        M = sum(w * gamma(spec, n, L0) for n, w in zip(dirs, wts))
    elif choice.kind == "single_direction":
        if choice.n0 is None:
            raise ValueError("single_direction needs n0")
        M = gamma(spec, choice.n0, L0)
    elif choice.kind == "custom":
        if choice.matrix is None:
            raise ValueError("custom M needs a matrix")
        M = spec.check_endo(np.array(choice.matrix, dtype=float))
    else:
        raise ValueError(f"unknown M kind {choice.kind!r}")
    M = 0.5 * (M + M.T)
    check_M(M, L0)
    return M


def psi(spec: TensorSpaceSpec, k, L0, M, gamma1_fn: Optional[Callable] = None) -> np.ndarray:
    return np.asarray(M, dtype=float) - gamma(spec, k, L0, gamma1_fn)


def sample_directions(d: int, n: int) -> np.ndarray:
    """Deterministic low-discrepancy unit vectors (golden-ratio sequences)."""
    j = np.arange(n)
    if d == 2:
        th = 2 * np.pi * ((j * 0.6180339887498949) % 1.0)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    z = 1 - (2 * j + 1) / n
    r = np.sqrt(1 - z**2)
    ph = 2 * np.pi * ((j * 0.6180339887498949) % 1.0)
    return np.stack([r * np.cos(ph), r * np.sin(ph), z], axis=1)


def psi_samples(spec: TensorSpaceSpec, L0, M, n: int = 100, extra=()) -> list:
    out = [psi(spec, k, L0, M) for k in sample_directions(spec.d, n)]
    return out + [np.asarray(P, dtype=float) for P in extra]
