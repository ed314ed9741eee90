"""bolzakit: solve and certify Bolza problems with velocity constraints."""

from .convex import Ball, Box, Polyhedron, Product, Reals, Singleton
from .funspace import CellPath, Grid, Trajectory, ac_norm, one_one_norm, sup_norm
from .optimality import CertificateReport, Tolerances, certify
from .problem import ProblemSpec
from .solver import SolveResult, SolverConfig, restore_feasibility, solve

__all__ = [
    "Ball",
    "Box",
    "CellPath",
    "CertificateReport",
    "Grid",
    "Polyhedron",
    "Product",
    "ProblemSpec",
    "Reals",
    "Singleton",
    "SolveResult",
    "SolverConfig",
    "Tolerances",
    "Trajectory",
    "ac_norm",
    "certify",
    "one_one_norm",
    "restore_feasibility",
    "solve",
    "sup_norm",
]
