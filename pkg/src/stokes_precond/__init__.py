"""Finite element tools for the singularly perturbed Stokes problem

    (I - eps^2 Laplace) u - grad p = f,   div u = g,

on uniform triangulations: Taylor-Hood and Mini discretizations, the
block diagonal preconditioner ``diag((I - eps^2 Laplace)^{-1},
(-Laplace)^{-1} + eps^2 I)``, its condition numbers, discrete inf-sup
constants in eps-dependent norms, and Fortin operators with exact checks
of their local stability matrices.
"""
from .mesh import DOMAINS, MeshError, TriMesh, build_mesh, classify, macroelements, shape_metrics
from .spaces import FeSpace, build_space
from .assembly import SaddleSystem, assemble, build_saddle
from .linalg import BlockPrecond, condition_number, eig_extremes_sym, factorize_spd
from .infsup import EpsNormContext, discrete_infsup, intersection_norm, sum_norm
from .fortin import FortinOperator, fortin_operator, lemma_suite

__version__ = "0.1.0"

__all__ = [
    "DOMAINS", "MeshError", "TriMesh", "build_mesh", "classify", "macroelements",
    "shape_metrics", "FeSpace", "build_space", "SaddleSystem", "assemble", "build_saddle",
    "BlockPrecond", "condition_number", "eig_extremes_sym", "factorize_spd",
    "EpsNormContext", "discrete_infsup", "intersection_norm", "sum_norm",
    "FortinOperator", "fortin_operator", "lemma_suite",
]
