"""Periodic-grid realization of Gamma, Psi, K and the polarization iteration."""
from .fields import (MembershipReport, make_manifold_field, make_source_field, manifold_field_from_K,
                     membership_report, rng_from_seed, smooth_random_fields, upsample)
from .grid import Grid, get_workers, set_workers
from .io import read_field, write_field
from .iterate import (CoefficientField, SolveDiagnostics, SolveOptions, iterate_polarization,
                      polarization_partial_sums, solve_E_form)
from .operators import (K_field, apply_gamma, apply_gamma1, apply_K, apply_psi, closed_gamma_symbols,
                        e_type_residual, fluctuation, gamma_symbols, j_type_residual, zero_mode_part)

__all__ = [
    "Grid", "set_workers", "get_workers", "CoefficientField", "SolveOptions", "SolveDiagnostics",
    "iterate_polarization", "polarization_partial_sums", "solve_E_form", "apply_gamma", "apply_gamma1",
    "apply_psi", "apply_K", "K_field", "gamma_symbols", "closed_gamma_symbols", "fluctuation", "zero_mode_part", "e_type_residual", "j_type_residual",
    "make_manifold_field", "make_source_field", "manifold_field_from_K", "membership_report",
    "MembershipReport", "rng_from_seed", "smooth_random_fields", "upsample", "read_field", "write_field",
]
