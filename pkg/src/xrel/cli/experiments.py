"""Experiment runners behind the subcommands.

Each runner takes a resolved config and returns an ``Outcome``: verdicts tied
to acceptance criteria, report sections, CSV tables and field dumps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .. import physics
from ..boundary import (TwoPhaseSpec, boundary_samples, checkerboard, congruence_diagonalize, disk_domain,
                        embedding_experiment, fd_solve_dirichlet, milgrom_boundary_data, milgrom_flux_check,
                        null_lagrangian_check, potential_from_Q_2d, surface_moment_check, tapered_manifold_field)
from ..errors import ConfigError
from ..greens import (DeltaSpec, adjoint_symmetry_check, assemble_T, compact_random_source, kernel_membership,
                      reciprocity_check, solve_point_source)
from ..solver import (CoefficientField, Grid, SolveOptions, apply_gamma, fluctuation, iterate_polarization,
                      j_type_residual, make_manifold_field, make_source_field, manifold_field_from_K,
                      membership_report, polarization_partial_sums, rng_from_seed, solve_E_form, upsample)
from ..solver.fields import K0_valued_field, amplitude_for_contrast
from ..solver.operators import apply_K
from ..tensor_space import (R_PERP, Subspace, TensorSpaceSpec, closure_check, complement, load_subspace,
                            maximal_S, orthonormalize, residual, right_multiply_space, triple_product)
from ..transforms import (ManifoldSpec, coercivity_certificate, dykhne, laminate, laminate_trajectory,
                          random_on_manifold)


@dataclass
class Outcome:
    verdicts: list = field(default_factory=list)
    sections: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)

    def verdict(self, criterion: int, name: str, passed: bool, value, threshold, relation: str = "<"):
        self.verdicts.append({"criterion": int(criterion), "name": name, "passed": bool(passed),
                              "value": value, "threshold": threshold, "relation": relation})

    def table(self, name: str, header, rows):
        self.tables[name] = (list(header), [tuple(r) for r in rows])

    def dump(self, name: str, data, d: int, m: int):
        self.fields[name] = (np.asarray(data, dtype=float), d, m)


# config -> objects ---------------------------------------------------------

def _subspace(ref, shape, base):
    if isinstance(ref, str):
        p = Path(ref)
        if not p.is_absolute() and base is not None:
            p = Path(base) / p
        if not p.is_file():
            raise ConfigError(f"subspace file not found: {ref}")
        S = load_subspace(p)
    else:
        S = orthonormalize([np.asarray(b, dtype=float) for b in ref])
    if S.shape != shape:
        raise ConfigError(f"subspace elements have shape {S.shape}, expected {shape}")
    return S


def build_manifold(cfg: dict, base=None) -> ManifoldSpec:
    man = cfg["manifold"]
    d, m = cfg["spec"]["d"], cfg["spec"]["m"]
    if man["builtin"] == "dykhne":
        if (d, m) != (2, 1):
            raise ConfigError("the built-in dykhne manifold needs spec d = 2, m = 1")
        return dykhne(float(man["sigma0"]))
    tspec = TensorSpaceSpec(d, m)
    q = tspec.q
    L0 = np.asarray(man["L0"], dtype=float)
    if L0.shape != (q, q):
        raise ConfigError(f"L0 must be {q} x {q}")
    Mc = man["M"]
    choice = physics.MChoice(Mc["kind"], Mc["order"], None if Mc["n0"] is None else tuple(Mc["n0"]),
                             None if Mc["matrix"] is None else np.asarray(Mc["matrix"], dtype=float))
    M = physics.build_M(tspec, L0, choice)
    K0 = _subspace(man["K0"], (q, q), base)
    K = None if man["K"] is None else _subspace(man["K"], (q, q), base)
    return ManifoldSpec(K0, L0, M, tspec, K=K)


def build_grid(cfg: dict, tspec: TensorSpaceSpec) -> Grid:
    sizes = tuple(cfg["grid"]["sizes"])
    lengths = cfg["grid"]["lengths"]
    if len(lengths) != len(sizes):
        raise ConfigError("grid lengths and sizes differ in length")
    return Grid(tspec, sizes, tuple(float(L) / n for L, n in zip(lengths, sizes)))


def build_options(cfg: dict, **over) -> SolveOptions:
    s = dict(cfg["solver"])
    s["lambda_schedule"] = tuple(s["lambda_schedule"])
    s.update(over)
    return SolveOptions(**s)


def _hist_rows(rep):
    return rep.histogram_rows()


HIST_HEADER = ("log10_lo", "log10_hi", "count")


# check-algebra -------------------------------------------------------------

def _source_space_oracle(K: Subspace) -> Subspace:
    """Null space of S -> [<B_i S, C_j>] written with Kronecker products."""
    q = K.shape[0]
    Kp = complement(K)
    eye = np.eye(q)
    rows = []
    for B in K.basis:
        op = np.kron(B, eye)  # row-major vec(B S) = (B kron I) vec(S)
        for C in Kp.basis:
            rows.append(C.reshape(-1) @ op)
    null = scipy.linalg.null_space(np.array(rows)) if rows else np.eye(q * q)
    return orthonormalize([v.reshape(q, q) for v in null.T])


def _same_space(A: Subspace, B: Subspace) -> float:
    if A.dim != B.dim:
        return float("inf")
    if A.dim == 0:
        return 0.0
    return max(float(np.max(residual(B, A.basis))), float(np.max(residual(A, B.basis))))


def run_check_algebra(cfg, spec: ManifoldSpec, grid=None) -> Outcome:
    e = cfg["experiment"]
    out = Outcome()
    tspec = spec.tspec
    dirs = physics.sample_directions(tspec.d, e["n_directions"])
    samples = [physics.psi(tspec, k, spec.L0, spec.M) for k in dirs]
    cr = closure_check(spec.K, samples, e["closure_tol"])
    out.sections["closure"] = cr.to_dict()
    out.verdict(1, "closure_max_residual", cr.passed, cr.max_residual, e["closure_tol"])
    per = [closure_check(spec.K, [P], e["closure_tol"]).max_residual for P in samples]
    out.table("closure_directions", ["index"] + [f"k{i}" for i in range(tspec.d)] + ["max_residual"],
              [(i, *map(float, k), r) for i, (k, r) in enumerate(zip(dirs, per))])
    if tspec.q == 2:
        a, b, c, dd, ee = (float(x) for x in e["prod3"])
        B1 = a * np.diag([1.0, -1.0])
        Psi = np.array([[b, c], [c, -b]])
        B2 = np.array([[dd, ee], [ee, -dd]])
        got = triple_product(B1, Psi, B2)
        u, v = b * dd + c * ee, b * ee - c * dd
        expect = a * np.array([[u, v], [v, -u]])
        out.sections["prod3"] = {"inputs": [a, b, c, dd, ee], "product": got.tolist(), "expected": expect.tolist()}
        out.verdict(1, "prod3_exact", bool(np.array_equal(got, expect)), float(np.abs(got - expect).max()), 0.0, "==")
    S = maximal_S(spec.K)
    So = _source_space_oracle(spec.K)
    agree = _same_space(S, So)
    out.sections["maximal_S"] = {"dim": S.dim, "oracle_dim": So.dim, "oracle_distance": agree,
                                 "basis": S.basis.tolist()}
    out.verdict(2, "maximal_S_matches_oracle", agree < e["source_tol"], agree, e["source_tol"])
    if cfg["manifold"]["builtin"] == "dykhne":
        rI = float(residual(S, np.eye(2)) / np.sqrt(2))
        rR = float(residual(S, R_PERP) / np.sqrt(2))
        out.sections["maximal_S"].update({"residual_I": rI, "residual_R_perp": rR})
        out.verdict(2, "maximal_S_dim", S.dim == 2, S.dim, 2, "==")
        out.verdict(2, "maximal_S_contains_I_Rperp", max(rI, rR) < e["source_tol"], max(rI, rR), e["source_tol"])
    co = e["coercivity"]
    rng = rng_from_seed(cfg["seed"])
    Ls = random_on_manifold(spec, rng, co["amplitude"], co["n_samples"])
    lams = np.linspace(0.0, 1.0, co["n_lambda"])
    rows, worst = [], np.inf
    for i, L in enumerate(Ls):
        alpha0 = float(np.linalg.eigvalsh(0.5 * (L + L.T)).min())
        rep = coercivity_certificate(L, spec.L0, spec.M, lams, co["floor_factor"] * alpha0)
        ratio = rep.min_eig / alpha0
        worst = min(worst, ratio if rep.m_condition_ok else -np.inf)
        rows.append((i, alpha0, rep.min_eig, ratio))
    out.table("coercivity", ["sample", "alpha0", "min_eig", "min_eig_over_alpha0"], rows)
    out.sections["coercivity"] = {"n_samples": len(rows), "n_lambda": len(lams), "worst_ratio": worst,
                                  "floor_factor": co["floor_factor"]}
    out.verdict(4, "coercivity_floor", worst > co["floor_factor"], worst, co["floor_factor"], ">")
    return out


# laminate -------------------------------------------------------------------

def classical_laminate_2d(La, Lb, f: float, n) -> np.ndarray:
    """Textbook layered-conductor formula in the frame where the normal is e1."""
    n = np.asarray(n, dtype=float) / np.linalg.norm(n)
    R = np.array([[n[0], n[1]], [-n[1], n[0]]])
    A, B = R @ La @ R.T, R @ Lb @ R.T
    frac = (f, 1 - f)
    avg = lambda g: sum(w * g(X) for w, X in zip(frac, (A, B)))
    inv11 = avg(lambda X: 1 / X[0, 0])
    r12 = avg(lambda X: X[0, 1] / X[0, 0])
    s11 = 1 / inv11
    s12 = r12 * s11
    s22 = avg(lambda X: X[1, 1] - X[0, 1] ** 2 / X[0, 0]) + r12 ** 2 * s11
    Ls = np.array([[s11, s12], [s12, s22]])
    return R.T @ Ls @ R


def _random_laminates(spec, rng, n, amplitude):
    La = random_on_manifold(spec, rng, amplitude, n)
    Lb = random_on_manifold(spec, rng, amplitude, n)
    f = rng.uniform(0.05, 0.95, n)
    th = rng.uniform(0, np.pi, n)
    return La, Lb, f, np.stack([np.cos(th), np.sin(th)], axis=1)


def run_laminate(cfg, spec: ManifoldSpec, grid=None) -> Outcome:
    if cfg["manifold"]["builtin"] != "dykhne":
        raise ConfigError("laminate runs on the built-in dykhne manifold")
    e = cfg["experiment"]
    out = Outcome()
    s0 = float(cfg["manifold"]["sigma0"])
    rng = rng_from_seed(cfg["seed"])
    La, Lb, f, nn = _random_laminates(spec, rng, e["n_random"], e["amplitude"])
    rows, det_res, cls_res = [], [], []
    for i in range(e["n_random"]):
        Ls = laminate(La[i], Lb[i], float(f[i]), nn[i], spec.L0, spec.tspec)
        Lc = classical_laminate_2d(La[i], Lb[i], float(f[i]), nn[i])
        det_res.append(abs(float(np.linalg.det(Ls)) - s0 ** 2))
        cls_res.append(float(np.abs(Ls - Lc).max()))
        rows.append((i, float(f[i]), float(nn[i, 0]), float(nn[i, 1]), Ls[0, 0], Ls[0, 1], Ls[1, 1], det_res[-1],
                     cls_res[-1]))
    out.table("random_laminates", ["sample", "f", "n0", "n1", "L11", "L12", "L22", "det_residual",
                                   "classical_difference"], rows)
    out.sections["random"] = {"n": len(rows), "max_det_residual": max(det_res),
                              "max_classical_difference": max(cls_res)}
    out.verdict(3, "det_preserved", max(det_res) < e["det_tol"], max(det_res), e["det_tol"])
    c = e["classical"]
    La1, Lb1 = np.asarray(c["La"], dtype=float), np.asarray(c["Lb"], dtype=float)
    Ls = laminate(La1, Lb1, float(c["f"]), c["normal"], spec.L0, spec.tspec)
    oracle = classical_laminate_2d(La1, Lb1, float(c["f"]), c["normal"])
    dev = float(np.abs(Ls - oracle).max())
    dev_expected = float(np.abs(Ls - np.asarray(c["expected"], dtype=float)).max())
    out.sections["classical"] = {"result": Ls.tolist(), "oracle": oracle.tolist(), "difference": dev,
                                 "difference_to_expected": dev_expected}
    out.verdict(3, "classical_case", max(dev, dev_expected) < e["classical_tol"], max(dev, dev_expected),
                e["classical_tol"])
    t = e["trajectory"]
    fr = np.linspace(0.0, 1.0, t["n_fractions"])
    traj = laminate_trajectory(La1, Lb1, spec, t["angles"], fr)
    traj.sort(key=lambda r: (r[0], r[1]))
    out.table("trajectory", ["f", "angle", "L11", "L12", "L22", "det", "membership_residual"], traj)
    sweep = []
    for s in e["sigma0_sweep"]:
        sp = dykhne(float(s))
        A, B, ff, n2 = _random_laminates(sp, rng, e["n_random"], e["amplitude"])
        r = max(abs(float(np.linalg.det(laminate(A[i], B[i], float(ff[i]), n2[i], sp.L0, sp.tspec))) - s * s) / (s * s)
                for i in range(e["n_random"]))
        sweep.append((float(s), r))
    out.table("sigma0_sweep", ["sigma0", "max_relative_det_residual"], sweep)
    if sweep:
        worst = max(r for _, r in sweep)
        out.sections["sigma0_sweep"] = {"values": [s for s, _ in sweep], "max_relative_det_residual": worst}
        out.verdict(3, "det_preserved_sigma0_sweep", worst < e["det_tol"], worst, e["det_tol"])
    return out


# solve --------------------------------------------------------------------

def _random_D(rng, q: int, max_cond: float = 10.0) -> np.ndarray:
    while True:
        D = np.eye(q) + 0.5 * rng.standard_normal((q, q))
        if np.linalg.cond(D) < max_cond:
            return D


def _invariants(P, S, Lf: CoefficientField, spec: ManifoldSpec, grid: Grid, opts: SolveOptions, max_iters: int):
    """Cross-check P against an independent E-form solve with H = -(L - L0) S."""
    L0, M = spec.L0, spec.M
    H = -apply_K(S, Lf.data - L0)
    E, J, dg = solve_E_form(H, Lf, L0, SolveOptions(tol=opts.tol, max_iters=max_iters), M=M)
    GP = apply_gamma(P, grid, L0, zero_mode=M)
    nE = float(np.linalg.norm(E))
    gamma_res = float(np.linalg.norm(GP + E)) / nE
    Pl = J - np.einsum("ab,...bc->...ac", L0, E)
    pol_res = float(np.linalg.norm(Pl - P) / np.linalg.norm(P))
    Ef, Jf = fluctuation(E, grid), fluctuation(J, grid)
    orth = abs(float(np.sum(Ef * Jf))) / float(np.linalg.norm(Ef) * np.linalg.norm(Jf))
    div = j_type_residual(J, grid)
    return {"gamma_P_plus_E": gamma_res, "polarization_cross_check": pol_res, "J_E_orthogonality": orth,
            "divergence_residual": div, "e_form_iterations": dg.iterations}, E, J


def run_solve(cfg, spec: ManifoldSpec, grid: Grid) -> Outcome:
    e = cfg["experiment"]
    out = Outcome()
    seed = cfg["seed"]
    opts = build_options(cfg)
    Lf = make_manifold_field(spec, grid, e["contrast"], e["smoothness"], seed)
    S = make_source_field(spec.S, None, grid, e["source_smoothness"], seed + 1)
    P, dg = iterate_polarization(S, Lf, spec.L0, spec.M, opts)
    rep = membership_report(P, spec.K, e["membership_tol"])
    out.sections["field"] = {"contrast": Lf.contrast, "source_space_dim": spec.S.dim}
    out.sections["membership"] = rep.to_dict(dg.iterations)
    out.sections["solver"] = {k: v for k, v in dg.to_dict().items() if k != "residual_history"}
    out.verdict(5, "membership_in_K", rep.passed, rep.max_residual, e["membership_tol"])
    inv, E, J = _invariants(P, S, Lf, spec, grid, opts, e["e_form_max_iters"])
    lim = e["invariant_factor"] * opts.tol
    out.sections["invariants"] = dict(inv, threshold=lim)
    out.verdict(5, "gamma_P_equals_minus_E", inv["gamma_P_plus_E"] < lim, inv["gamma_P_plus_E"], lim)
    out.verdict(5, "J_E_orthogonal", inv["J_E_orthogonality"] < lim, inv["J_E_orthogonality"], lim)
    out.verdict(5, "J_divergence_free", inv["divergence_residual"] < lim, inv["divergence_residual"], lim)
    out.table("membership_histogram", HIST_HEADER, _hist_rows(rep))
    out.table("residual_history", ["iteration", "residual"], list(enumerate(dg.residual_history)))
    d, m = grid.spec.d, grid.spec.m
    out.dump("L", Lf.data, d, m)
    out.dump("S", S, d, m)
    out.dump("P", P, d, m)
    out.dump("E", E, d, m)
    out.dump("J", J, d, m)
    # basis changes
    rng = rng_from_seed(seed + 2)
    rows, worst = [], 0.0
    for i in range(e["n_basis_changes"]):
        D = _random_D(rng, grid.spec.q)
        SD = make_source_field(spec.S, D, grid, e["source_smoothness"], seed + 10 + i)
        PD, dD = iterate_polarization(SD, Lf, spec.L0, spec.M, opts)
        rD = membership_report(PD, right_multiply_space(spec.K, D), e["membership_tol"])
        worst = max(worst, rD.max_residual)
        rows.append((i, float(np.linalg.cond(D)), rD.max_residual, rD.mean_residual, dD.iterations))
    out.table("basis_changes", ["index", "cond_D", "max_residual", "mean_residual", "iterations"], rows)
    if rows:
        out.sections["basis_changes"] = {"n": len(rows), "max_residual": worst}
        out.verdict(6, "membership_in_K_D", worst < e["membership_tol"], worst, e["membership_tol"])
    # series against the fixed point at the same coupling
    se = e["series"]
    lam = float(se["lambda"])
    sums = polarization_partial_sums(S, Lf, spec.L0, spec.M, lam, se["order"])
    Pl, _ = iterate_polarization(S, Lf, spec.L0, spec.M, build_options(cfg, lambda_schedule=(lam,)))
    nP = float(np.linalg.norm(Pl))
    srows = []
    for j, Pj in enumerate(sums):
        srows.append((j, float(np.linalg.norm(Pj - Pl)) / nP, membership_report(Pj, spec.K).max_residual))
    out.table("series", ["order", "relative_difference", "member_residual"], srows)
    diff, memb = srows[-1][1], max(r[2] for r in srows)
    out.sections["series"] = {"lambda": lam, "order": se["order"], "relative_difference": diff,
                              "max_member_residual": memb}
    out.verdict(7, "series_matches_fixed_point", diff < se["tol"], diff, se["tol"])
    out.verdict(7, "partial_sums_in_K", memb < se["member_tol"], memb, se["member_tol"])
    return out


# greens -------------------------------------------------------------------

def _greens_field(spec, grid, e, seed):
    H = K0_valued_field(spec, grid, e["smoothness"], seed)
    a = amplitude_for_contrast(spec, grid, H, e["contrast"])
    return H, a, manifold_field_from_K(spec, grid, a * H)


def run_greens(cfg, spec: ManifoldSpec, grid: Grid) -> Outcome:
    e = cfg["experiment"]
    out = Outcome()
    opts = build_options(cfg)
    seed = cfg["seed"]
    S0 = np.asarray(e["S0"], dtype=float)
    H, a, Lf = _greens_field(spec, grid, e, seed)
    dl = DeltaSpec(tuple(e["center"]), float(e["width"]))
    P, dg = solve_point_source(Lf, spec.L0, spec.M, None, S0, dl, opts)
    T = assemble_T(P, S0, dl, grid, e["exclusion_factor"])
    rep = kernel_membership(T, spec.K, e["kernel_tol"])
    out.sections["field"] = {"contrast": Lf.contrast}
    out.sections["kernel"] = rep.to_dict(dg.iterations)
    out.verdict(8, "kernel_membership", rep.passed, rep.max_residual, e["kernel_tol"])
    out.table("kernel_histogram", HIST_HEADER, _hist_rows(rep))
    d, m = grid.spec.d, grid.spec.m
    out.dump("L", Lf.data, d, m)
    out.dump("T", T.data, d, m)
    refine = [(grid.sizes[0], rep.max_residual, rep.mean_residual)]
    if e["refine"]:
        fine = grid.refined(2)
        Lf2 = manifold_field_from_K(spec, fine, a * upsample(H, grid, fine))
        dl2 = DeltaSpec(tuple(2.0 * c for c in e["center"]), float(e["width"]))
        P2, _ = solve_point_source(Lf2, spec.L0, spec.M, None, S0, dl2, opts)
        rep2 = kernel_membership(assemble_T(P2, S0, dl2, fine, e["exclusion_factor"]), spec.K, e["kernel_tol"])
        refine.append((fine.sizes[0], rep2.max_residual, rep2.mean_residual))
        out.sections["refinement"] = {"coarse": rep.max_residual, "fine": rep2.max_residual}
        out.verdict(8, "refinement_decreases", rep2.max_residual < rep.max_residual, rep2.max_residual,
                    rep.max_residual)
    out.table("refinement", ["n", "max_residual", "mean_residual"], refine)
    ad = e["adjoint"]
    ar = adjoint_symmetry_check(Lf, spec.L0, spec.M, ad["x0"], ad["x1"], dl, opts)
    out.sections["adjoint"] = ar.to_dict()
    out.verdict(9, "adjoint_symmetry", ar.residual < ad["tol"], ar.residual, ad["tol"])
    rc = e["reciprocity"]
    h1 = compact_random_source(grid, ad["x0"], rc["radius"], seed + 2)
    h2 = compact_random_source(grid, ad["x1"], rc["radius"], seed + 3)
    rr = reciprocity_check(Lf, spec.L0, spec.M, h1, h2, opts)
    lim = rc["factor"] * opts.tol
    out.sections["reciprocity"] = dict(rr, threshold=lim)
    out.verdict(9, "reciprocity", rr["residual"] < lim, rr["residual"], lim)
    return out


# embed / bfe-check ----------------------------------------------------------

def _embedding(cfg, spec: ManifoldSpec, grid: Grid, flux_tol=1e-4, interior_tol=1e-5):
    e = cfg["experiment"]
    if grid.d != 2:
        raise ConfigError(f"{e['kind']} needs a 2D grid")
    N = min(grid.sizes)
    h = np.asarray(grid.cell_lengths)
    dom = disk_domain(grid.sizes, radius=e["radius_fraction"] * N * float(h.min()), cell_lengths=grid.cell_lengths)
    L1 = np.asarray(e["L1"], dtype=float)
    Lf = tapered_manifold_field(spec, grid, dom, L1, e["contrast"], e["smoothness"], cfg["seed"], e["taper_width"])
    R = e["radius_fraction"] * N
    c = dom.centroid / h
    x0 = tuple(float(v) for v in (c + R * np.asarray(e["source_offset"], dtype=float)) % np.asarray(grid.sizes))
    S0 = np.asarray(e["S0"], dtype=float)
    rep = embedding_experiment(dom, spec, Lf, L1, x0, S0, DeltaSpec(x0, float(e["width"])), build_options(cfg),
                               quad_order=e["quad_order"], interior_tol=interior_tol, flux_tol=flux_tol,
                               seed=cfg["seed"] + 1)
    return dom, Lf, x0, rep


def run_embed(cfg, spec: ManifoldSpec, grid: Grid) -> Outcome:
    e = cfg["experiment"]
    out = Outcome()
    dom, Lf, x0, rep = _embedding(cfg, spec, grid, e["flux_tol"], e["interior_tol"])
    out.sections.update(rep.to_dict())
    out.sections["source"] = {"x0": list(x0), "n_boundary_points": int(len(rep.trace.ds))}
    out.verdict(11, "interior_membership", rep.interior.passed, rep.interior.max_residual, e["interior_tol"])
    out.verdict(11, "flux_membership", rep.flux.passed, rep.flux.max_residual, e["flux_tol"])
    neg, pos = rep.flux_negative.max_residual, rep.flux.max_residual
    margin = e["negative_margin"]
    ok = neg > e["flux_tol"] and neg >= margin * pos
    out.verdict(11, "negative_control_separation", ok, neg, max(e["flux_tol"], margin * pos), ">")
    out.table("boundary_trace", rep.trace.header(), rep.trace.rows())
    out.table("interior_histogram", HIST_HEADER, _hist_rows(rep.interior))
    out.table("flux_histogram", HIST_HEADER, rep.flux.histogram_rows())
    out.table("flux_negative_histogram", HIST_HEADER, rep.flux_negative.histogram_rows())
    d, m = grid.spec.d, grid.spec.m
    out.dump("L", rep.fields["L"], d, m)
    out.dump("P", rep.fields["P"], d, m)
    return out


def run_bfe_check(cfg, spec: ManifoldSpec, grid: Grid) -> Outcome:
    e = cfg["experiment"]
    out = Outcome()
    dom, Lf, x0, rep = _embedding(cfg, spec, grid)
    Dsp = rep.flux_space
    C = Dsp.potential_subspace()
    Ns = complement(C).basis
    t = rep.fields["Q"].shape[-1]
    rng = rng_from_seed(cfg["seed"] + 2)
    root = e["root_scale"] * rng.standard_normal(t)
    w = potential_from_Q_2d(rep.fields["Q"], grid, dom, root_value=root)
    order = e["quad_order"]
    pts, nrm, ds, wb = boundary_samples(dom, w.at, order)
    sm = surface_moment_check(wb, nrm, ds, C, e["tol"])
    out.sections["potential"] = {"closure_error": w.closure_error, "divergence_residual": w.divergence_residual,
                                 "nyquist_fraction": w.nyquist_fraction, "root_value": root.tolist(),
                                 "C_dim": C.dim, "n_normals": len(Ns)}
    out.sections["surface_moment"] = sm.to_dict()
    out.verdict(12, "surface_moment_in_C", sm.passed, sm.relative, e["tol"])
    rows = []
    worst, worst_pair = 0.0, 0.0
    for i, N in enumerate(Ns):
        N2 = Ns[(i + 1) % len(Ns)] if len(Ns) > 1 else None
        nl = null_lagrangian_check(w, N, C, e["tol"], N2=N2, order=order)
        worst = max(worst, nl.relative)
        pr = nl.pair["residual"] / nl.pair["scale"] if nl.pair else 0.0
        worst_pair = max(worst_pair, pr)
        rows.append((i, float(nl.volume[0]), float(nl.surface[0]), nl.residual, nl.scale, pr))
        out.sections[f"null_lagrangian_{i}"] = nl.to_dict()
    out.table("null_lagrangian", ["normal", "volume_0", "surface_0", "residual", "scale", "pair_relative"], rows)
    out.verdict(12, "null_lagrangian_volume_surface", worst < e["tol"], worst, e["tol"])
    if len(Ns) > 1:
        out.verdict(12, "null_lagrangian_pair", worst_pair < e["tol"], worst_pair, e["tol"])
    # constant potential: both sides vanish identically
    cval = np.asarray(e["constant_value"], dtype=float)
    if cval.size != t:
        raise ConfigError(f"constant_value needs {t} entries")
    wc = potential_from_Q_2d(np.zeros_like(rep.fields["Q"]), grid, dom, root_value=cval)
    _, _, _, wcb = boundary_samples(dom, wc.at, order)
    smc = surface_moment_check(wcb, nrm, ds, C, e["tol"])
    triv = float(np.abs(smc.moment).max())
    for N in Ns:
        nlc = null_lagrangian_check(wc, N, C, e["tol"], order=order)
        triv = max(triv, float(np.abs(nlc.volume).max()), float(np.abs(nlc.surface).max()))
    out.sections["constant_case"] = {"max_abs": triv, "value": cval.tolist()}
    out.verdict(12, "constant_w_exact", triv < e["trivial_tol"], triv, e["trivial_tol"])
    out.table("boundary_potential", ["x0", "x1", "n0", "n1", "ds"] + [f"w{j}" for j in range(t)],
              [(*p, *n, s, *v) for p, n, s, v in zip(pts, nrm, ds, wb)])
    d, m = grid.spec.d, grid.spec.m
    out.dump("L", rep.fields["L"], d, m)
    out.dump("w", np.where(dom.mask[..., None], w.values, 0.0), d, m)
    return out


# milgrom ------------------------------------------------------------------

def _random_spd(rng, m: int, cond: float) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    ev = np.exp(rng.uniform(0.0, np.log(cond), m))
    return (Q * ev) @ Q.T


def run_milgrom(cfg, spec=None, grid=None) -> Outcome:
    e = cfg["experiment"]
    out = Outcome()
    sizes = tuple(cfg["grid"]["sizes"])
    if len(sizes) != 2:
        raise ConfigError("milgrom needs a 2D grid")
    h = tuple(float(L) / n for L, n in zip(cfg["grid"]["lengths"], sizes))
    m = e["m"]
    if not 0 <= e["mode"] < m:
        raise ConfigError(f"mode must lie in [0, {m - 1}]")
    rng = rng_from_seed(cfg["seed"])
    A1, A2 = _random_spd(rng, m, e["spd_condition"]), _random_spd(rng, m, e["spd_condition"])
    tp = TwoPhaseSpec(A1, A2, checkerboard(sizes, e["block"]))
    dom = disk_domain(sizes, radius=e["radius_fraction"] * min(sizes) * min(h), cell_lengths=h)
    rep = milgrom_flux_check(tp, dom, e["mode"])
    out.sections["phases"] = {"A1": A1.tolist(), "A2": A2.tolist(), "n_boundary": int(len(dom.boundary_cells))}
    out.sections["flux"] = rep.to_dict()
    out.verdict(10, "flux_rank_one", rep.ratio < e["ratio_tol"], rep.ratio, e["ratio_tol"])
    out.verdict(10, "flux_direction", rep.sin_angle < e["angle_tol"], rep.sin_angle, e["angle_tol"])
    W, _ = congruence_diagonalize(A1, A2)
    ub = milgrom_boundary_data(dom, W, e["mode"])
    sol = fd_solve_dirichlet(dom, tp.field(), ub)
    out.table("boundary_flux", ["i", "j", "n0", "n1"] + [f"u{a}" for a in range(m)] + [f"flux{a}" for a in range(m)],
              [(int(c[0]), int(c[1]), *map(float, n), *map(float, u), *map(float, q))
               for c, n, u, q in zip(dom.boundary_cells, dom.boundary_normals, ub, sol.flux)])
    out.dump("u", np.nan_to_num(sol.u, nan=0.0), 2, m)
    if e["congruence_check"]:
        G = _random_D(rng, m)
        tg = tp.congruent(G)
        Wg = W @ np.linalg.inv(G)
        rg = milgrom_flux_check(tg, dom, e["mode"], W=Wg)
        out.sections["congruent"] = rg.to_dict()
        out.verdict(10, "congruent_flux_rank_one", rg.ratio < e["ratio_tol"], rg.ratio, e["ratio_tol"])
    return out


RUNNERS = {
    "check-algebra": run_check_algebra,
    "laminate": run_laminate,
    "solve": run_solve,
    "greens": run_greens,
    "embed": run_embed,
    "milgrom": run_milgrom,
    "bfe-check": run_bfe_check,
}
