import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xrel import physics
from xrel.errors import ConvergenceError
from xrel.solver import (CoefficientField, Grid, SolveOptions, apply_gamma, apply_gamma1, apply_K, apply_psi,
                         e_type_residual, fluctuation, gamma_symbols, iterate_polarization, j_type_residual,
                         make_manifold_field, make_source_field, membership_report, polarization_partial_sums,
                         read_field, rng_from_seed, smooth_random_fields, solve_E_form, upsample, write_field,
                         zero_mode_part)
from xrel.solver.iterate import ContrastWarning
from xrel.tensor_space import TensorSpaceSpec, right_multiply_space
from xrel.transforms import manifold_membership


def rand_field(grid, shape, seed=0):
    return rng_from_seed(seed).standard_normal(grid.sizes + shape)


def test_grid_validation(dyk):
    with pytest.raises(ValueError):
        Grid(dyk.tspec, (64,))
    with pytest.raises(ValueError):
        Grid(dyk.tspec, (4, 64))
    with pytest.raises(ValueError):
        Grid(dyk.tspec, (16, 16), (1.0, -1.0))
    g = Grid(dyk.tspec, (16, 8), (0.5, 2.0))
    assert g.lengths == (8.0, 16.0)
    assert g.refined().cell_lengths == (0.25, 1.0)


def test_symbols_match_pointwise(dyk, grid32):
    G = gamma_symbols(grid32, dyk.L0)
    k = grid32.wavevectors(half=True)
    for idx in [(1, 0), (3, 5), (7, 2), (0, 9)]:
        assert np.allclose(G[idx], physics.gamma(dyk.tspec, k[idx], dyk.L0), atol=1e-14)
    assert np.abs(G[0, 0]).max() == 0.0


def test_gamma_is_projection_onto_e_type(dyk, grid32):
    F = rand_field(grid32, (2,), 1)
    GF = apply_gamma1(F, grid32)
    assert np.abs(apply_gamma1(GF, grid32) - GF).max() < 1e-12
    assert e_type_residual(GF, grid32) < 1e-12
    # the complement is divergence-free
    assert j_type_residual(fluctuation(F, grid32) - GF, grid32) < 1e-12


def test_gamma_anisotropic_reference():
    spec = TensorSpaceSpec(2, 1)
    g = Grid(spec, (24, 16))
    L0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    F = rand_field(g, (2,), 2)
    E = apply_gamma(F, g, L0)
    # F - L0 E is divergence-free and E is a gradient
    assert e_type_residual(E, g) < 1e-12
    assert j_type_residual(F - np.einsum("ab,...b->...a", L0, E), g) < 1e-12


def test_psi_constant_field(dyk, grid32):
    F = np.broadcast_to(np.array([1.0, -2.0]), grid32.sizes + (2,))
    assert np.allclose(apply_psi(F, grid32, dyk.L0, dyk.M, mean_mode="keep"), dyk.M @ np.array([1.0, -2.0]))
    assert np.abs(apply_psi(F, grid32, dyk.L0, dyk.M)).max() < 1e-14
    with pytest.raises(ValueError):
        apply_psi(F, grid32, dyk.L0, dyk.M, mean_mode="bad")


def test_zero_mode_split(grid32):
    F = rand_field(grid32, (2, 2), 3) + 5.0
    assert np.allclose(zero_mode_part(F, grid32) + fluctuation(F, grid32), F)
    assert np.abs(fluctuation(F, grid32).mean(axis=(0, 1))).max() < 1e-13


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_psi_linear(seed, a, b):
    spec = TensorSpaceSpec(2, 1)
    g = Grid(spec, (16, 16))
    L0, M = np.eye(2), np.eye(2) / 2
    F, G = rand_field(g, (2, 2), seed), rand_field(g, (2, 2), seed + 1)
    lhs = apply_psi(a * F + b * G, g, L0, M)
    rhs = a * apply_psi(F, g, L0, M) + b * apply_psi(G, g, L0, M)
    assert np.abs(lhs - rhs).max() < 1e-11 * (1 + abs(a) + abs(b))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_gamma_symmetric_operator(seed):
    # <Gamma F, G> = <F, Gamma G> for symmetric L0
    spec = TensorSpaceSpec(2, 1)
    g = Grid(spec, (16, 12))
    F, G = rand_field(g, (2,), seed), rand_field(g, (2,), seed + 7)
    L0 = np.array([[1.5, 0.2], [0.2, 0.8]])
    a = np.sum(apply_gamma(F, g, L0) * G)
    b = np.sum(F * apply_gamma(G, g, L0))
    assert abs(a - b) < 1e-10 * np.linalg.norm(F) * np.linalg.norm(G)


def test_smooth_fields_deterministic(grid32):
    a = smooth_random_fields(grid32, 3, 3.0, rng_from_seed(5))
    b = smooth_random_fields(grid32, 3, 3.0, rng_from_seed(5))
    assert np.array_equal(a, b)
    assert np.abs(a).max() == pytest.approx(1.0)
    assert np.abs(a.mean(axis=(0, 1))).max() < 1e-14


def test_upsample_band_limited(dyk, grid32):
    F = smooth_random_fields(grid32, 2, 4.0, rng_from_seed(2))
    fine = grid32.refined(2)
    Fu = upsample(F, grid32, fine)
    assert np.abs(Fu[::2, ::2] - F).max() < 1e-10
    assert np.isrealobj(Fu)


def test_manifold_field(dyk, field32):
    assert field32.contrast <= 8.0 + 1e-9
    assert field32.contrast > 7.0
    assert float(np.max(manifold_membership(field32.data, dyk))) < 1e-12


def test_coefficient_field_rejects_nonpositive(dyk, grid32):
    data = np.broadcast_to(-np.eye(2), grid32.sizes + (2, 2))
    with pytest.raises(ValueError):
        CoefficientField(grid32, data)


def test_source_field_in_SD(dyk, grid32):
    D = np.array([[1.0, 0.4], [-0.2, 1.3]])
    S = make_source_field(dyk.S, D, grid32, 3.0, 4)
    rep = membership_report(S, right_multiply_space(dyk.S, D))
    assert rep.max_residual < 1e-13


def test_polarization_membership_small(dyk, grid32, field32, fast_opts):
    S = make_source_field(dyk.S, None, grid32, 3.0, 1)
    P, diag = iterate_polarization(S, field32, dyk.L0, dyk.M, fast_opts)
    assert diag.final_residual <= fast_opts.tol
    assert [s["lambda"] for s in diag.stages] == [0.25, 0.5, 0.75, 1.0]
    assert membership_report(P, dyk.K).max_residual < 1e-10


def test_polarization_zero_source(dyk, grid32, field32):
    P, diag = iterate_polarization(np.zeros(grid32.sizes + (2, 2)), field32, dyk.L0, dyk.M)
    assert not P.any() and diag.iterations == 0


def test_polarization_nonconvergence(dyk, grid32, field32):
    S = make_source_field(dyk.S, None, grid32, 3.0, 1)
    with pytest.raises(ConvergenceError) as exc:
        iterate_polarization(S, field32, dyk.L0, dyk.M, SolveOptions(tol=1e-14, max_iters=3))
    assert exc.value.best is not None and len(exc.value.history) == 4


def test_contrast_guard(dyk, grid32):
    Lf = make_manifold_field(dyk, grid32, 30.0, 3.0, seed=2)
    S = make_source_field(dyk.S, None, grid32, 3.0, 1)
    with pytest.warns(ContrastWarning):
        iterate_polarization(S, Lf, dyk.L0, dyk.M, SolveOptions(tol=1e-6, max_iters=2000))


@pytest.mark.parametrize("kw", [dict(tol=0.0), dict(lambda_schedule=()), dict(lambda_schedule=(0.5, 1.5)),
                                dict(damping=0.0), dict(fallback_damping=2.0)])
def test_solve_options_validation(kw):
    with pytest.raises(ValueError):
        SolveOptions(**kw)


def test_e_form_cross_check(dyk, grid32, field32, fast_opts):
    S = make_source_field(dyk.S, None, grid32, 3.0, 1)
    P, _ = iterate_polarization(S, field32, dyk.L0, dyk.M, fast_opts)
    H = -apply_K(S, field32.data - dyk.L0)
    E, J, diag = solve_E_form(H, field32, dyk.L0, SolveOptions(tol=1e-11, max_iters=5000), M=dyk.M)
    Pl = J - np.einsum("ab,...bc->...ac", dyk.L0, E)
    assert np.linalg.norm(Pl - P) / np.linalg.norm(P) < 1e-8
    assert np.linalg.norm(apply_gamma(P, grid32, dyk.L0, zero_mode=dyk.M) + E) / np.linalg.norm(E) < 1e-8
    assert j_type_residual(J, grid32) < 1e-8
    Ef, Jf = fluctuation(E, grid32), fluctuation(J, grid32)
    assert abs(np.sum(Ef * Jf)) / (np.linalg.norm(Ef) * np.linalg.norm(Jf)) < 1e-8


def test_partial_sums_converge(dyk, grid32, field32, fast_opts):
    S = make_source_field(dyk.S, None, grid32, 3.0, 1)
    sums = polarization_partial_sums(S, field32, dyk.L0, dyk.M, 0.1, 6)
    P, _ = iterate_polarization(S, field32, dyk.L0, dyk.M, SolveOptions(tol=1e-12, lambda_schedule=(0.1,)))
    errs = [np.linalg.norm(Pj - P) / np.linalg.norm(P) for Pj in sums]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-6
    assert max(membership_report(Pj, dyk.K).max_residual for Pj in sums) < 1e-12


def test_membership_histogram(dyk, grid32):
    F = rand_field(grid32, (2, 2), 9)
    rep = membership_report(F, dyk.K, exclusion_mask=np.zeros(grid32.sizes, bool))
    assert sum(rep.histogram_counts) == grid32.ncells
    edges = [r[0] for r in rep.histogram_rows()]
    assert edges == sorted(edges)
    assert not rep.passed


def test_field_io_roundtrip(tmp_path, grid32):
    F = rand_field(grid32, (2, 2), 11)
    write_field(tmp_path / "f.bin", F, 2, 1)
    d, m, sizes, back = read_field(tmp_path / "f.bin")
    assert (d, m, sizes) == (2, 1, (32, 32))
    assert np.array_equal(back, F)
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        read_field(tmp_path / "bad.bin")
