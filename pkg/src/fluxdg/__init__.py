"""Flux-jump penalized discontinuous Galerkin solver for -div(K grad u) + u = f on rectangles."""

from .analysis import lemma_check, measure_constants, measure_space, theory_constants
from .assembly import PenaltyParams, assemble_direct, assemble_reduced, assemble_rhs, assemble_system
from .coefficient import CoefficientField, make_coefficient
from .mesh import InvalidInputError, Mesh, build_rect_mesh
from .norms import NormContext, build_gram, dual_norm_flux, local_lifting, star_norm_sq, triple_norm
from .solver import solve_linear, solve_matrix
from .space import BrokenSpace, DGFunction, build_space, project_l2

__version__ = "0.1.0"

__all__ = [
    "BrokenSpace", "CoefficientField", "DGFunction", "InvalidInputError", "Mesh", "NormContext", "PenaltyParams",
    "assemble_direct", "assemble_reduced", "assemble_rhs", "assemble_system", "build_gram", "build_rect_mesh",
    "build_space", "dual_norm_flux", "lemma_check", "local_lifting", "make_coefficient", "measure_constants",
    "measure_space", "project_l2", "solve_linear", "solve_matrix", "star_norm_sq", "theory_constants",
    "triple_norm",
]
