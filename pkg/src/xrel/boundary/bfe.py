"""Boundary field equalities in 2D: flux subspace, potentials of divergence-free fields, surface identities.

Layout. For a polarization run with q source columns the pair (J, Jt), with
Jt = R_perp^T E rotated on the spatial index, is packed into a d x t matrix
``Q`` with t = 2 m q. Column ``(alpha, c, tag)`` holds row ``(i, alpha)`` of
column ``c`` of J (tag 0) or Jt (tag 1). Each column of Q is divergence-free,
so ``Q = R_perp grad w`` for a t-component potential w.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import _kernels
from ..errors import DomainError, PotentialClosureError
from ..solver.grid import Grid
from ..solver.operators import apply_gamma
from ..tensor_space import R_PERP, Subspace, complement, orthonormalize, project, residual, right_multiply_space
from .domain import FACE_TYPES, Domain
from .spectral import nyquist_split, segment_integral, shifted

HIST_EDGES = np.arange(-18, 1)


def rot_rows(m: int) -> np.ndarray:
    """kron(R_perp, I_m): rotation acting on the spatial index of T."""
    return np.kron(R_PERP, np.eye(m))


def stack_Q(J: np.ndarray, Jt: np.ndarray, m: int) -> np.ndarray:
    """Pack (J, Jt) of shape (..., q, r) into Q of shape (..., 2, 2 m r)."""
    lead = J.shape[:-2]
    r = J.shape[-1]
    Z = np.stack([J.reshape(lead + (2, m, r)), Jt.reshape(lead + (2, m, r))], axis=-1)
    return Z.reshape(lead + (2, 2 * m * r))


def unstack_Q(Q: np.ndarray, m: int):
    lead = Q.shape[:-2]
    r = Q.shape[-1] // (2 * m)
    Z = Q.reshape(lead + (2, m, r, 2))
    return Z[..., 0].reshape(lead + (2 * m, r)), Z[..., 1].reshape(lead + (2 * m, r))


def Q_from_fields(E: np.ndarray, J: np.ndarray, m: int) -> np.ndarray:
    Jt = np.einsum("ab,...bc->...ac", rot_rows(m).T, E)
    return stack_Q(J, Jt, m)


def fields_from_polarization(P: np.ndarray, grid: Grid, L0, M):
    """E = -Gamma P (same zero-mode closure as the iteration) and J = P + L0 E."""
    E = -apply_gamma(P, grid, L0, zero_mode=M)
    J = P + np.einsum("ab,...bc->...ac", L0, E)
    return E, J


@dataclass(frozen=True, eq=False)
class FluxSubspace:
    """D = {Q : J - L0 R_perp Jt in K D}, stored as a subspace of d x t matrices."""

    basis: Subspace
    KD: Subspace
    m: int
    q: int

    @property
    def dim(self) -> int:
        return self.basis.dim

    def Z(self, Q: np.ndarray, L0) -> np.ndarray:
        J, Jt = unstack_Q(Q, self.m)
        return J - np.einsum("ab,bc,...cd->...ad", L0, rot_rows(self.m), Jt)

    def normal_image(self, n) -> Subspace:
        """n . D as a subspace of t-vectors."""
        n = np.asarray(n, dtype=float)
        return orthonormalize(list(np.einsum("i,kia->ka", n, self.basis.basis)), self.basis.rank_tol)

    def potential_subspace(self) -> Subspace:
        """C = R_perp^T D, the space that grad w must lie in."""
        return orthonormalize(list(np.einsum("ji,kja->kia", R_PERP, self.basis.basis)))


def flux_subspace(K: Subspace, D, L0, spec) -> FluxSubspace:
    """Build D from K, a basis change D and the reference tensor (d = 2 only)."""
    if spec.d != 2:
        raise DomainError("the flux-subspace construction is implemented for d = 2")
    q, m = spec.q, spec.m
    D = np.eye(q) if D is None else np.asarray(D, dtype=float)
    L0 = np.asarray(L0, dtype=float)
    KD = right_multiply_space(K, D)
    LR = L0 @ rot_rows(m)
    mats = []
    for a in range(q):
        for c in range(q):
            X = np.zeros((q, q))
            X[a, c] = 1.0
            mats.append(stack_Q(LR @ X, X, m))
    for Z in KD.basis:
        mats.append(stack_Q(Z, np.zeros((q, q)), m))
    return FluxSubspace(orthonormalize(mats), KD, m, q)


@dataclass
class BoundaryTrace:
    """Values at boundary quadrature points, listed in loop order.

    ``potential`` holds the E-side data (potentials u or w) and ``flux`` the
    J-side data (n.J or the stacked n.Q); both have one row per point.
    """

    points: np.ndarray
    normals: np.ndarray
    ds: np.ndarray
    potential: Optional[np.ndarray] = None
    flux: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.points)
        for name in ("normals", "ds", "potential", "flux"):
            v = getattr(self, name)
            if v is not None:
                if len(v) != n:
                    raise ValueError(f"trace field {name} has {len(v)} rows, expected {n}")
                if not np.all(np.isfinite(v)):
                    raise ValueError(f"trace field {name} is not finite")

    def rows(self):
        """CSV rows: index, x, y, n1, n2, potential..., flux..."""
        pot = np.zeros((len(self.points), 0)) if self.potential is None else self.potential.reshape(len(self.points), -1)
        flx = np.zeros((len(self.points), 0)) if self.flux is None else self.flux.reshape(len(self.points), -1)
        for k in range(len(self.points)):
            yield [k, *self.points[k], *self.normals[k], *pot[k], *flx[k]]

    def header(self):
        pot = 0 if self.potential is None else int(np.prod(self.potential.shape[1:]))
        flx = 0 if self.flux is None else int(np.prod(self.flux.shape[1:]))
        return ["index", "x", "y", "n1", "n2"] + [f"potential_{j}" for j in range(pot)] + [f"flux_{j}" for j in range(flx)]


@dataclass
class FluxReport:
    max_residual: float
    mean_residual: float
    tol: float
    n_points: int
    residuals: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.max_residual < self.tol

    def histogram_rows(self):
        lg = np.log10(np.maximum(self.residuals, 1e-300))
        counts, _ = np.histogram(np.clip(lg, HIST_EDGES[0], HIST_EDGES[-1] - 1e-9), bins=HIST_EDGES)
        return [(float(a), float(b), int(c)) for a, b, c in zip(HIST_EDGES[:-1], HIST_EDGES[1:], counts)]

    def to_dict(self):
        return {"max_residual": self.max_residual, "mean_residual": self.mean_residual, "tol": self.tol,
                "n_points": self.n_points, "verdict": "pass" if self.passed else "fail"}


def flux_membership(trace: BoundaryTrace, normals, Dsp: FluxSubspace, tol: float = 1e-4) -> FluxReport:
    """Relative residual of each stacked flux n.Q against n.D at its point."""
    normals = np.asarray(normals, dtype=float)
    qv = np.asarray(trace.flux, dtype=float).reshape(len(normals), -1)
    if len(qv) != len(normals):
        raise ValueError("trace and normals are not aligned")
    norms = np.linalg.norm(qv, axis=1)
    floor = 1e-14 * (norms.max() if norms.size else 0.0)
    res = np.zeros(len(qv))
    keys = np.round(normals, 12)
    for key in np.unique(keys, axis=0):
        sel = np.all(keys == key, axis=1)
        img = Dsp.normal_image(key)
        res[sel] = residual(img, qv[sel]) / np.maximum(norms[sel], max(floor, 1e-300))
    res = np.where(norms > 0, res, 0.0)
    return FluxReport(float(res.max()) if res.size else 0.0, float(res.mean()) if res.size else 0.0, tol,
                      len(res), res)


# potentials ---------------------------------------------------------------

@dataclass(eq=False)
class PotentialField:
    """Potential w with grad w = R_perp^T Q on a domain.

    ``values`` holds w at the mask cell centres (NaN elsewhere), built by
    integrating exact spectral edge increments along a spanning tree.
    Off-centre values follow from the centre value plus a spectral path
    integral, so they inherit the tree constant.
    """

    grid: Grid
    domain: Domain
    g: np.ndarray
    values: np.ndarray
    closure_error: float
    divergence_residual: float
    nyquist_fraction: float = 0.0

    @property
    def t(self) -> int:
        return self.g.shape[-1]

    def at(self, offset) -> np.ndarray:
        """w(x + offset) for every cell centre x (full grid; meaningful on the mask)."""
        o = np.asarray(offset, dtype=float)
        path = segment_integral(self.g[..., 0, :], self.grid, 0, o[0])
        path = path + segment_integral(self.g[..., 1, :], self.grid, 1, o[1], start_offset=(o[0], 0.0))
        return self.values + path

    def grad_at(self, offset) -> np.ndarray:
        return shifted(self.g, self.grid, offset)


def _div_residual(Q: np.ndarray, grid: Grid) -> float:
    """||k . Q^|| / || |k| Q^|| over modes with nonzero effective wavevector."""
    Qh = grid.rfft(Q)
    k = grid.wavevectors(half=True)
    nk = np.linalg.norm(k, axis=-1)
    div = np.einsum("...i,...ia->...a", k, Qh)
    den = np.sqrt(np.sum(nk[..., None, None] ** 2 * np.abs(Qh) ** 2))
    return float(np.sqrt(np.sum(np.abs(div) ** 2)) / den) if den > 0 else 0.0


def potential_from_Q_2d(Q: np.ndarray, grid: Grid, domain: Domain, closure_factor: float = 100.0,
                        floor: float = 1e-12, root_value=None) -> PotentialField:
    """Integrate grad w = R_perp^T Q along a breadth-first spanning tree of the mask.

    Modes with a Nyquist component are removed first (their fraction is kept
    in ``nyquist_fraction``); the rest of Q is integrated exactly along edges.
    ``root_value`` fixes the free constant (w at the tree root, default 0).
    The closure error is the largest mismatch over all non-tree edges,
    relative to the largest edge increment. It must stay below
    ``closure_factor * max(divergence residual, floor)``.
    """
    if grid.d != 2:
        raise DomainError("potential_from_Q_2d needs d = 2")
    if tuple(domain.sizes) != tuple(grid.sizes):
        raise DomainError("domain and grid sizes differ")
    Q, nyq = nyquist_split(np.asarray(Q, dtype=float), grid)
    g = np.einsum("ji,...ja->...ia", R_PERP, Q)
    t = g.shape[-1]
    h = grid.cell_lengths
    incr = {}
    for ax, sg in FACE_TYPES:
        incr[(ax, sg)] = segment_integral(g[..., ax, :], grid, ax, sg * h[ax]).reshape(-1, t)
    mask = domain.mask
    root_cell = np.argwhere(mask)[0]
    root = int(root_cell[0] * mask.shape[1] + root_cell[1])
    order, parent, axis, sign = _kernels.bfs_tree(np.ascontiguousarray(mask, dtype=np.uint8), root)
    order, parent, axis, sign = (np.asarray(a, dtype=np.int64) for a in (order, parent, axis, sign))
    inc = np.zeros((len(order), t))
    for ax, sg in FACE_TYPES:
        sel = (axis == ax) & (sign == sg)
        inc[sel] = incr[(ax, sg)][parent[sel]]
    root_value = np.zeros(t) if root_value is None else np.asarray(root_value, dtype=float).reshape(t)
    wflat = _kernels.tree_integrate(order, parent, inc, root_value)
    w = np.full((mask.size, t), np.nan)
    w[order] = wflat[order]
    w = w.reshape(mask.shape + (t,))
    # closure over every edge inside the mask
    errs, scale = [0.0], 0.0
    for ax in (0, 1):
        both = mask & np.roll(mask, -1, axis=ax)
        if not both.any():
            continue
        a = w[both]
        b = np.roll(w, -1, axis=ax)[both]
        I = incr[(ax, 1)].reshape(mask.shape + (t,))[both]
        errs.append(float(np.abs(b - a - I).max()))
        scale = max(scale, float(np.abs(I).max()))
    closure = max(errs) / scale if scale > 0 else 0.0
    divres = _div_residual(Q, grid)
    if closure > closure_factor * max(divres, floor):
        raise PotentialClosureError(
            f"loop closure error {closure:.3e} exceeds {closure_factor} x divergence residual {divres:.3e}")
    return PotentialField(grid, domain, g, w, closure, divres, nyq)


# quadrature ---------------------------------------------------------------

def face_quadrature(domain: Domain, order: int = 4):
    """Gauss nodes on every boundary face.

    Returns a list over the four face types of ``(face_ids, offset_j, weight_j)``
    per node j, with offsets relative to the face's cell centre and weights
    including the face length. Node ``j`` runs along the tangential axis in
    increasing coordinate.
    """
    xi, wi = np.polynomial.legendre.leggauss(order)
    h = domain.cell_lengths
    out = []
    for ax, sg in FACE_TYPES:
        ids = np.nonzero((domain.face_axes == ax) & (domain.face_signs == sg))[0]
        tax = 1 - ax
        nodes = []
        for x, w in zip(xi, wi):
            off = np.zeros(2)
            off[ax] = 0.5 * sg * h[ax]
            off[tax] = 0.5 * x * h[tax]
            nodes.append((off, 0.5 * w * h[tax]))
        out.append(((ax, sg), ids, nodes))
    return out


def cell_quadrature(domain: Domain, order: int = 4):
    """Tensor Gauss nodes inside a cell: list of (offset, weight), weights summing to the cell area."""
    xi, wi = np.polynomial.legendre.leggauss(order)
    h = domain.cell_lengths
    return [(np.array([0.5 * a * h[0], 0.5 * b * h[1]]), 0.25 * wa * wb * h[0] * h[1])
            for a, wa in zip(xi, wi) for b, wb in zip(xi, wi)]


def boundary_samples(domain: Domain, evaluate, order: int = 4):
    """Evaluate ``evaluate(offset) -> full-grid field`` at every face node.

    Returns ``(points, normals, ds, values)`` in loop order, ``order`` nodes
    per face, nodes along each face following the loop direction.
    """
    nf = domain.n_faces
    vals = [None] * nf
    h = np.asarray(domain.cell_lengths)
    pts = np.zeros((nf, order, 2))
    ds = np.zeros((nf, order))
    for (ax, sg), ids, nodes in face_quadrature(domain, order):
        if len(ids) == 0:
            continue
        cells = domain.face_cells[ids]
        per_node = []
        for j, (off, w) in enumerate(nodes):
            F = evaluate(off)
            per_node.append(F[cells[:, 0], cells[:, 1]])
            pts[ids, j] = cells * h + off
            ds[ids, j] = w
        stacked = np.stack(per_node, axis=1)
        for k, f in enumerate(ids):
            vals[f] = stacked[k]
    vals = np.stack(vals)
    # loop direction: tangent = R_perp^T n; reverse nodes where it points to decreasing coordinate
    normals = domain.face_normals
    tang = normals @ R_PERP  # rows: R_perp^T n
    rev = tang.sum(axis=1) < 0
    pts[rev] = pts[rev, ::-1]
    vals[rev] = vals[rev, ::-1]
    ds[rev] = ds[rev, ::-1]
    nrm = np.repeat(normals[:, None, :], order, axis=1)
    return pts.reshape(-1, 2), nrm.reshape(-1, 2), ds.reshape(-1), vals.reshape((nf * order,) + vals.shape[2:])


def volume_integral(domain: Domain, evaluate, order: int = 4) -> np.ndarray:
    """Sum over mask cells of tensor-Gauss quadrature of ``evaluate(offset)``."""
    acc = None
    for off, w in cell_quadrature(domain, order):
        F = evaluate(off)[domain.mask]
        s = w * F.sum(axis=0)
        acc = s if acc is None else acc + s
    return acc


# identities ---------------------------------------------------------------

@dataclass
class SurfaceMomentReport:
    moment: np.ndarray
    residual: float
    scale: float
    closure: float
    tol: float

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else 0.0

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol * self.scale or self.residual <= 1e-12

    def to_dict(self):
        return {"residual": self.residual, "scale": self.scale, "relative": self.relative,
                "normal_closure": self.closure, "tol": self.tol, "verdict": "pass" if self.passed else "fail"}


def surface_moment_check(w_trace, normals, ds, C: Subspace, tol: float = 1e-4) -> SurfaceMomentReport:
    """Quadrature of the boundary integral of n (x) w and its residual against C.

    ``w_trace`` has one row per quadrature point, ``ds`` the weights; the
    points must cover a closed boundary, checked through the sum of n ds.
    """
    w = np.asarray(w_trace, dtype=float)
    w = w.reshape(len(w), -1)
    normals = np.asarray(normals, dtype=float)
    ds = np.asarray(ds, dtype=float)
    total = float(ds.sum())
    closure = float(np.linalg.norm(normals.T @ ds)) / total if total > 0 else 0.0
    if closure > 1e-10:
        raise DomainError(f"boundary is not closed (|sum n ds| / sum ds = {closure:.3e})")
    moment = np.einsum("p,pi,pa->ia", ds, normals, w)
    scale = float(np.sum(ds * np.linalg.norm(w, axis=1)))
    return SurfaceMomentReport(moment, float(residual(C, moment)), scale, closure, tol)


@dataclass
class NullLagrangianReport:
    volume: np.ndarray
    surface: np.ndarray
    residual: float
    scale: float
    tol: float
    pair: Optional[dict] = None

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else 0.0

    @property
    def passed(self) -> bool:
        ok = self.residual <= self.tol * self.scale or self.residual <= 1e-12
        if self.pair is not None:
            ok = ok and (self.pair["residual"] <= self.tol * self.pair["scale"] or self.pair["residual"] <= 1e-12)
        return ok

    def to_dict(self):
        out = {"volume": [float(x) for x in self.volume], "surface": [float(x) for x in self.surface],
               "residual": self.residual, "scale": self.scale, "relative": self.relative, "tol": self.tol,
               "verdict": "pass" if self.passed else "fail"}
        if self.pair is not None:
            out["pair"] = {k: float(v) for k, v in self.pair.items()}
        return out


def check_normal(N, C: Subspace, tol: float = 1e-10) -> np.ndarray:
    N = np.asarray(N, dtype=float)
    if N.shape != C.shape:
        raise ValueError(f"N has shape {N.shape}, expected {C.shape}")
    worst = max((abs(float(np.sum(Cb * N))) for Cb in C.basis), default=0.0)
    if worst > tol * max(1.0, float(np.linalg.norm(N))):
        raise ValueError(f"N is not normal to C (|Tr(C N^T)| = {worst:.3e})")
    return N


def _loop_antiderivative(vals: np.ndarray, ds: np.ndarray, order: int) -> tuple:
    """Running integral of nodal values along the loop, exact for degree < order per face.

    ``vals`` and ``ds`` are in loop order with ``order`` nodes per face.
    Returns the integral at every node and the total around the loop.
    """
    xi, wi = np.polynomial.legendre.leggauss(order)
    V = np.polynomial.legendre.legvander(xi, order - 1)
    Vinv = np.linalg.inv(V)
    f = vals.reshape(-1, order)
    hl = ds.reshape(-1, order).sum(axis=1)  # face length (Gauss weights sum to 2 * h/2)
    coef = f @ Vinv.T
    ci = np.polynomial.legendre.legint(coef.T, lbnd=-1).T  # (faces, order+1)
    at_nodes = np.stack([np.polynomial.legendre.legval(x, ci.T) for x in xi], axis=1)
    at_end = np.polynomial.legendre.legval(1.0, ci.T)
    at_nodes = at_nodes * (0.5 * hl)[:, None]
    at_end = at_end * 0.5 * hl
    start = np.concatenate([[0.0], np.cumsum(at_end)[:-1]])
    return (start[:, None] + at_nodes).ravel(), float(at_end.sum())


def null_lagrangian_check(w: PotentialField, N, C: Subspace, tol: float = 1e-4, N2=None,
                          order: int = 4) -> NullLagrangianReport:
    """Compare the volume integral of [N w] . grad w with the boundary integral of (n . N w) w.

    Residuals are measured against ``|N| |w|_inf int |grad w|`` (the pair
    identity against ``|N| |N2| |w|_inf^2 |Omega|``), which stays meaningful
    when N w happens to vanish identically.

    With ``N2`` given (both normal to C) the pair identity is also evaluated:
    the volume integral of [N2 w] . R_perp N w against the boundary integral of
    (n . N2 w) W1, where W1 is recovered on the boundary by integrating its
    tangential derivative -n . N w around the loop.
    """
    N = check_normal(N, C)
    domain = w.domain

    def vol_integrand(off):
        wv = w.at(off)
        gv = w.grad_at(off)
        Nw = np.einsum("ia,...a->...i", N, wv)
        return np.einsum("...i,...ib->...b", Nw, gv)

    def grad_norm(off):
        return np.linalg.norm(w.grad_at(off), axis=(-2, -1))[..., None]

    vol = volume_integral(domain, vol_integrand, order)
    pts, nrm, ds, wb = boundary_samples(domain, w.at, order)
    wmax = max(float(np.nanmax(np.abs(w.values[domain.mask]))), float(np.abs(wb).max()))
    area = float(domain.mask.sum()) * float(np.prod(domain.cell_lengths))
    # |N| |w|_inf int |grad w|: the size of either side for a generic w
    scale = float(np.linalg.norm(N)) * wmax * float(volume_integral(domain, grad_norm, order)[0])
    nNw = np.einsum("pi,ia,pa->p", nrm, N, wb)
    surf = np.einsum("p,p,pb->b", ds, nNw, wb)
    res = float(np.abs(vol - surf).max())
    pair = None
    if N2 is not None:
        N2 = check_normal(N2, C)
        # grad W1 = R_perp N w, tangential derivative along the loop = -n . N w
        W1, loop = _loop_antiderivative(-nNw, ds, order)

        def pair_integrand(off):
            wv = w.at(off)
            a = np.einsum("ia,...a->...i", N2, wv)
            b = np.einsum("ij,ja,...a->...i", R_PERP, N, wv)
            return np.einsum("...i,...i->...", a, b)[..., None]

        pv = float(volume_integral(domain, pair_integrand, order)[0])
        nN2w = np.einsum("pi,ia,pa->p", nrm, N2, wb)
        ps = float(np.sum(ds * nN2w * W1))
        pscale = float(np.linalg.norm(N) * np.linalg.norm(N2)) * wmax**2 * area
        pair = {"volume": pv, "surface": ps, "residual": abs(pv - ps), "scale": pscale, "loop_mismatch": loop}
    return NullLagrangianReport(vol, surf, res, scale, tol, pair)
