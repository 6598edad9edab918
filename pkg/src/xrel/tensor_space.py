"""Algebra on the tensor space T of d x m matrices and its endomorphisms L(T).

An element of T is flattened row-major, so the pair ``(i, alpha)`` maps to
index ``i*m + alpha``. Elements of L(T) are q x q matrices acting on those
vectors. Subspaces carry an orthonormal basis for the Frobenius inner product,
which makes ``residual`` a true distance.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeMismatchError, SingularMatrixError

DEFAULT_RANK_TOL = 1e-10

R_PERP = np.array([[0.0, 1.0], [-1.0, 0.0]])


class DegenerateSubspaceWarning(UserWarning):
    """All spanning vectors were numerically zero."""


@dataclass(frozen=True)
class TensorSpaceSpec:
    """Dimensions of T: d spatial axes, m potentials, q = d*m."""

    d: int
    m: int = 1

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")

    @property
    def q(self) -> int:
        return self.d * self.m

    def identity(self) -> np.ndarray:
        return np.eye(self.q)

    def check_endo(self, A) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        if A.shape[-2:] != (self.q, self.q):
            raise ShapeMismatchError(f"expected trailing shape {(self.q, self.q)}, got {A.shape}")
        return A


def inner_product(A, B) -> float:
    """Frobenius pairing sum_ij a_ij b_ij."""
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ShapeMismatchError(f"shapes {A.shape} and {B.shape} differ")
    return float(np.sum(A * B))


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace with an orthonormal basis.

    Parameters
    ----------
    basis : ndarray, shape (dim, *shape)
        Orthonormal basis elements.
    rank_tol : float
        Tolerance used when the basis was built.
    """

    basis: np.ndarray
    rank_tol: float = DEFAULT_RANK_TOL

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def shape(self) -> tuple:
        return self.basis.shape[1:]

    @property
    def ambient_dim(self) -> int:
        return int(np.prod(self.shape))

    @property
    def matrix(self) -> np.ndarray:
        """Basis as rows of a (dim, ambient_dim) matrix."""
        return self.basis.reshape(self.dim, self.ambient_dim)

    @classmethod
    def full(cls, shape) -> "Subspace":
        shape = tuple(shape)
        n = int(np.prod(shape))
        return cls(np.eye(n).reshape((n,) + shape))

    @classmethod
    def empty(cls, shape) -> "Subspace":
        return cls(np.zeros((0,) + tuple(shape)))

    def contains(self, A, tol: float = 1e-12) -> bool:
        return residual(self, A) <= tol * max(1.0, float(np.linalg.norm(A)))

    def __repr__(self):
        return f"Subspace(dim={self.dim}, shape={self.shape})"


def _check_member_shape(S: Subspace, A: np.ndarray):
    if A.shape[A.ndim - len(S.shape):] != S.shape:
        raise ShapeMismatchError(f"element shape {S.shape} does not match {A.shape}")


def project(S: Subspace, A) -> np.ndarray:
    """Orthogonal projection onto S; leading axes of ``A`` are batch axes."""
    A = np.asarray(A, dtype=float)
    _check_member_shape(S, A)
    batch = A.shape[: A.ndim - len(S.shape)]
    flat = A.reshape(batch + (S.ambient_dim,))
    B = S.matrix
    return ((flat @ B.T) @ B).reshape(A.shape)


def residual(S: Subspace, A):
    """Distance ||A - project(S, A)||, batched over leading axes."""
    A = np.asarray(A, dtype=float)
    diff = A - project(S, A)
    axes = tuple(range(A.ndim - len(S.shape), A.ndim))
    r = np.sqrt(np.sum(diff * diff, axis=axes))
    return float(r) if r.ndim == 0 else r


def orthonormalize(mats: Sequence, rank_tol: float = DEFAULT_RANK_TOL) -> Subspace:
    """Modified Gram-Schmidt with pivoting on the largest remaining norm.

    Vectors whose residual norm falls below ``rank_tol`` times the largest
    input norm are dropped. All-zero input yields an empty subspace and a
    :class:`DegenerateSubspaceWarning`.
    """
    mats = [np.asarray(M, dtype=float) for M in mats]
    if not mats:
        raise ValueError("orthonormalize needs at least one matrix")
    shape = mats[0].shape
    for M in mats:
        if M.shape != shape:
            raise ShapeMismatchError(f"mixed shapes {shape} and {M.shape}")
    R = np.array([M.ravel() for M in mats])
    scale = np.linalg.norm(R, axis=1).max()
    if not np.isfinite(scale):
        raise ValueError("non-finite spanning vector")
    if scale == 0.0:
        warnings.warn("all spanning vectors are zero", DegenerateSubspaceWarning, stacklevel=2)
        return Subspace(np.zeros((0,) + shape), rank_tol)
    cutoff = rank_tol * scale
    basis = []
    while R.shape[0]:
        norms = np.linalg.norm(R, axis=1)
        j = int(np.argmax(norms))
        if norms[j] <= cutoff:
            break
        b = R[j] / norms[j]
        # second pass keeps orthogonality at roundoff level
        for p in basis:
            b = b - (p @ b) * p
        b /= np.linalg.norm(b)
        basis.append(b)
        R = np.delete(R, j, axis=0)
        R = R - np.outer(R @ b, b)
    return Subspace(np.array(basis).reshape((len(basis),) + shape), rank_tol)


def span(*mats, rank_tol: float = DEFAULT_RANK_TOL) -> Subspace:
    return orthonormalize(list(mats), rank_tol)


def complement(S: Subspace) -> Subspace:
    """Orthogonal complement in the ambient space of S."""
    n = S.ambient_dim
    if S.dim == 0:
        return Subspace.full(S.shape)
    _, _, Vh = np.linalg.svd(S.matrix, full_matrices=True)
    rest = Vh[S.dim:]
    return Subspace(rest.reshape((n - S.dim,) + S.shape), S.rank_tol)


def triple_product(B1, Psi, B2) -> np.ndarray:
    B1, Psi, B2 = (np.asarray(X, dtype=float) for X in (B1, Psi, B2))
    if not (B1.shape == Psi.shape == B2.shape) or B1.shape[0] != B1.shape[1]:
        raise ShapeMismatchError(f"shapes {B1.shape}, {Psi.shape}, {B2.shape}")
    return B1 @ Psi @ B2


@dataclass
class ClosureReport:
    max_residual: float
    n_products: int
    tol: float
    passed: bool
    worst: tuple

    def to_dict(self):
        return {
            "max_residual": self.max_residual,
            "n_products": self.n_products,
            "tol": self.tol,
            "verdict": "pass" if self.passed else "fail",
            "worst": list(self.worst),
        }


def closure_check(K: Subspace, psi_samples: Sequence, tol: float = 1e-12) -> ClosureReport:
    """Check K Psi K in K over every basis pair and every sample."""
    if len(psi_samples) == 0:
        raise ValueError("psi_samples must be nonempty")
    P = np.asarray(psi_samples, dtype=float)
    if K.dim == 0:
        return ClosureReport(0.0, 0, tol, True, ())
    B = K.basis
    # prods[s, i, j] = B_i Psi_s B_j
    prods = np.einsum("iab,sbc,jcd->sijad", B, P, B)
    res = residual(K, prods)
    idx = np.unravel_index(int(np.argmax(res)), res.shape)
    worst = float(res[idx])
    return ClosureReport(worst, res.size, tol, worst < tol, tuple(int(i) for i in idx))


def maximal_S(K: Subspace, rank_tol: float = DEFAULT_RANK_TOL) -> Subspace:
    """Largest S with B S in K for every B in K.

    The constraint <B_i S, C_j> = 0 over bases of K and its complement is
    linear in S with coefficient matrix B_i^T C_j.
    """
    q = K.shape[0]
    if len(K.shape) != 2 or K.shape[1] != q:
        raise ShapeMismatchError("maximal_S needs a subspace of square matrices")
    Kp = complement(K)
    if K.dim == 0 or Kp.dim == 0:
        return Subspace.full(K.shape)
    rows = np.einsum("iac,jab->ijcb", K.basis, Kp.basis).reshape(-1, q * q)
    _, s, Vh = np.linalg.svd(rows, full_matrices=True)
    rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    null = Vh[rank:]
    return Subspace(null.reshape((null.shape[0], q, q)), rank_tol)


def right_multiply_space(S: Subspace, D, rank_tol: float = DEFAULT_RANK_TOL) -> Subspace:
    """Span of {b D : b in basis(S)}; D must be nonsingular."""
    D = np.asarray(D, dtype=float)
    cond = np.linalg.cond(D)
    if not np.isfinite(cond) or cond * rank_tol > 1.0:
        raise SingularMatrixError(f"D is singular within tolerance (cond={cond:.3e})")
    if S.dim == 0:
        return S
    out = orthonormalize([b @ D for b in S.basis], rank_tol)
    assert out.dim == S.dim, "right multiplication by a nonsingular D lost rank"
    return out


def adjoint_endo(A) -> np.ndarray:
    """Adjoint for the Euclidean pairing on T (the basis is orthonormal)."""
    return np.asarray(A, dtype=float).T.copy()


def trace_free_symmetric(n: int = 2) -> Subspace:
    sym = symmetric(n)
    return orthonormalize([b - np.trace(b) / n * np.eye(n) for b in sym.basis])


def symmetric(n: int) -> Subspace:
    mats = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            mats.append(E)
    return orthonormalize(mats)


# text format --------------------------------------------------------------

def format_matrices(mats: Iterable, header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    for M in mats:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        lines.extend(" ".join(repr(float(x)) for x in row) for row in M)
        lines.append("")
    return "\n".join(lines)


def parse_matrices(text: str) -> list:
    """Read blank-line separated matrix blocks; ``#`` starts a comment."""
    blocks, cur = [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            if cur:
                blocks.append(cur)
                cur = []
            continue
        cur.append([float(t) for t in line.split()])
    if cur:
        blocks.append(cur)
    out = []
    for b in blocks:
        widths = {len(r) for r in b}
        if len(widths) != 1:
            raise ValueError("ragged matrix block")
        out.append(np.array(b))
    return out


def format_subspace(S: Subspace) -> str:
    return format_matrices(S.basis, header=f"subspace dim {S.dim} shape {S.shape}")


def parse_subspace(text: str, rank_tol: float = DEFAULT_RANK_TOL) -> Subspace:
    mats = parse_matrices(text)
    if not mats:
        raise ValueError("no matrices in subspace text")
    return orthonormalize(mats, rank_tol)


def save_subspace(S: Subspace, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_subspace(S))


def load_subspace(path, rank_tol: float = DEFAULT_RANK_TOL) -> Subspace:
    with open(path) as fh:
        return parse_subspace(fh.read(), rank_tol)
