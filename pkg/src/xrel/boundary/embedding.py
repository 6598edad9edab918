"""Body on the manifold embedded in a homogeneous exterior, driven by an exterior point source."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import erfc

from ..greens import DeltaSpec, solve_point_source
from ..solver import CoefficientField, Grid, SolveOptions, membership_report
from ..solver.fields import K0_valued_field, MembershipReport, amplitude_for_contrast, manifold_field_from_K
from ..tensor_space import Subspace, complement, residual, right_multiply_space
from ..transforms import ManifoldSpec, manifold_membership, w_transform
from .bfe import (BoundaryTrace, FluxReport, FluxSubspace, PotentialField, Q_from_fields, boundary_samples,
                  fields_from_polarization, flux_membership, flux_subspace, potential_from_Q_2d, unstack_Q)
from .domain import Domain
from .spectral import nyquist_split, shifted

MANIFOLD_TOL = 1e-10


def taper_profile(grid: Grid, domain: Domain, width: float) -> np.ndarray:
    """Smooth weight, ~1 deep inside the disk-like domain and ~0 at and beyond its edge.

    Distance is measured from the domain centroid against the mean boundary
    radius; the erfc ramp is centred ``2 width`` inside the boundary.
    """
    x = np.stack(grid.coords(), axis=-1) - domain.centroid
    r = np.linalg.norm(x, axis=-1)
    rb = float(np.linalg.norm(domain.face_centers - domain.centroid, axis=1).mean())
    return 0.5 * erfc((r - (rb - 2.0 * width)) / (0.5 * width))


def tapered_manifold_field(spec: ManifoldSpec, grid: Grid, domain: Domain, L1, contrast: float,
                           smoothness: float, seed: int, taper_width: float = 4.0) -> CoefficientField:
    """K(x) = W(L1) + taper(x) H(x) with H smooth random K0 noise.

    The field lies on the manifold everywhere, equals L1 to roundoff outside
    the body and is smooth across its boundary; the amplitude of H is bisected
    so that the contrast stays below ``contrast``.
    """
    K1 = w_transform(np.asarray(L1, dtype=float), spec.L0, spec.M)
    H = K0_valued_field(spec, grid, smoothness, seed) * taper_profile(grid, domain, taper_width)[..., None, None]
    a = amplitude_for_contrast(spec, grid, H, contrast, base=K1)
    return manifold_field_from_K(spec, grid, K1 + a * H)


@dataclass
class EmbeddingReport:
    interior: MembershipReport
    flux: FluxReport
    flux_negative: FluxReport
    target: str
    conservation: np.ndarray
    trace: BoundaryTrace
    diagnostics: dict
    fields: dict = field(repr=False, default_factory=dict)
    flux_space: Optional[FluxSubspace] = field(repr=False, default=None)
    potential: Optional[PotentialField] = field(repr=False, default=None)

    def to_dict(self):
        return {
            "target": self.target,
            "interior": self.interior.to_dict(),
            "flux": self.flux.to_dict(),
            "flux_negative_control": self.flux_negative.to_dict(),
            "conservation": [float(c) for c in self.conservation],
            "solver": self.diagnostics,
        }


def _classify_source(S0, spec: ManifoldSpec, D):
    SD = right_multiply_space(spec.S, D)
    KD = right_multiply_space(spec.K, D)
    s = float(np.linalg.norm(S0))
    if residual(SD, S0) <= 1e-10 * s:
        return "K.D", KD
    if residual(complement(KD), S0) <= 1e-10 * s:
        return "(S.D)perp", complement(SD)
    raise ValueError("S0 lies neither in S.D nor in (K.D)perp")


def embedding_experiment(domain: Domain, spec: ManifoldSpec, interior: CoefficientField, L1, x0, S0,
                         delta: DeltaSpec, opts: SolveOptions = SolveOptions(), D=None, quad_order: int = 4,
                         interior_tol: float = 1e-5, flux_tol: float = 1e-4, seed: int = 0) -> EmbeddingReport:
    """Full-grid solve with L = interior on the body and L1 outside, source at ``x0`` (index units).

    A source in S.D targets K.D on the body; a source in (K.D)^perp with a
    symmetric field targets (S.D)^perp.
    """
    grid = interior.grid
    q = grid.spec.q
    D = np.eye(q) if D is None else np.asarray(D, dtype=float)
    L1 = np.asarray(L1, dtype=float)
    if float(manifold_membership(L1, spec)) > MANIFOLD_TOL * max(1.0, np.linalg.norm(L1)):
        raise ValueError("L1 is not on the manifold")
    mask = domain.mask
    inner_res = manifold_membership(interior.data[mask], spec)
    if float(np.max(inner_res)) > 1e-8:
        raise ValueError("interior field leaves the manifold on the body")
    h = np.asarray(grid.cell_lengths)
    p0 = np.asarray(x0, dtype=float) * h
    cells = np.argwhere(mask) * h
    L = np.asarray(grid.lengths)
    clearance = float(np.linalg.norm((cells - p0 + 0.5 * L) % L - 0.5 * L, axis=1).min())
    if clearance < 10 * delta.width * (1 - 1e-12):
        raise ValueError(f"source clearance {clearance:.3f} is below 10 delta widths")
    S0 = np.asarray(S0, dtype=float)
    target_name, target = _classify_source(S0, spec, D)
    if target_name != "K.D" and np.abs(interior.data - np.swapaxes(interior.data, -1, -2)).max() > 1e-12:
        raise ValueError("the adjoint statement needs a symmetric field")
    data = np.where(mask[..., None, None], interior.data, L1)
    Lf = CoefficientField(grid, data)
    P, diag = solve_point_source(Lf, spec.L0, spec.M, x0, S0, delta, opts)
    rep = membership_report(P, target, interior_tol, exclusion_mask=~mask)
    E, J = fields_from_polarization(P, grid, spec.L0, spec.M)
    Q, nyq = nyquist_split(Q_from_fields(E, J, grid.spec.m), grid)
    Dsp = flux_subspace(spec.K, D, spec.L0, grid.spec)
    pts, nrm, ds, Qb = boundary_samples(domain, lambda off: shifted(Q, grid, off), quad_order)
    qv = np.einsum("pi,pia->pa", nrm, Qb)
    trace_q = BoundaryTrace(pts, nrm, ds, flux=qv)
    frep = flux_membership(trace_q, nrm, Dsp, flux_tol)
    rng = np.random.Generator(np.random.Philox(seed))
    neg = flux_membership(BoundaryTrace(pts, nrm, ds, flux=rng.standard_normal(qv.shape)), nrm, Dsp, flux_tol)
    # archival traces: u = -(tag-1 part of w), and n . J
    m = grid.spec.m
    w = potential_from_Q_2d(Q, grid, domain)
    _, _, _, wb = boundary_samples(domain, w.at, quad_order)
    u = -wb.reshape(len(pts), m, q, 2)[..., 1].reshape(len(pts), m * q)
    Jb, _ = unstack_Q(Qb, m)
    nJ = np.einsum("pi,piac->pac", nrm, Jb.reshape(len(pts), 2, m, q)).reshape(len(pts), m * q)
    flux_scale = np.sum(ds[:, None] * np.abs(nJ), axis=0)
    cons = np.abs(ds @ nJ) / np.where(flux_scale > 0, flux_scale, 1.0)
    trace = BoundaryTrace(pts, nrm, ds, potential=u, flux=nJ)
    d = diag.to_dict()
    d["clearance"] = clearance
    d["potential_closure"] = w.closure_error
    d["divergence_residual"] = w.divergence_residual
    d["nyquist_fraction"] = nyq
    return EmbeddingReport(rep, frep, neg, target_name, cons, trace, d,
                           {"P": P, "E": E, "J": J, "Q": Q, "L": data}, Dsp, w)
