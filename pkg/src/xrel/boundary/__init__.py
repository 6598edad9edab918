"""Boundary field equalities: bounded FD solves, embedded bodies, flux subspaces and surface identities."""
from .bfe import (BoundaryTrace, FluxReport, FluxSubspace, NullLagrangianReport, PotentialField, SurfaceMomentReport,
                  Q_from_fields, boundary_samples, check_normal, fields_from_polarization, flux_membership,
                  flux_subspace, null_lagrangian_check, potential_from_Q_2d, stack_Q, surface_moment_check,
                  unstack_Q, volume_integral)
from .domain import Domain, box_domain, disk_domain
from .embedding import EmbeddingReport, embedding_experiment, taper_profile, tapered_manifold_field
from .fd import (FDSolution, MilgromReport, TwoPhaseSpec, checkerboard, congruence_diagonalize, fd_solve_dirichlet,
                 milgrom_boundary_data, milgrom_flux_check)

__all__ = [
    "Domain", "disk_domain", "box_domain", "TwoPhaseSpec", "FDSolution", "MilgromReport", "checkerboard",
    "congruence_diagonalize", "fd_solve_dirichlet", "milgrom_boundary_data", "milgrom_flux_check",
    "BoundaryTrace", "FluxReport", "FluxSubspace", "PotentialField", "SurfaceMomentReport", "NullLagrangianReport",
    "flux_subspace", "flux_membership", "potential_from_Q_2d", "surface_moment_check", "null_lagrangian_check",
    "check_normal", "stack_Q", "unstack_Q", "Q_from_fields", "fields_from_polarization", "boundary_samples",
    "volume_integral", "EmbeddingReport", "embedding_experiment", "taper_profile", "tapered_manifold_field",
]
