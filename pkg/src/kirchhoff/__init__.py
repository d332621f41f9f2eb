"""Nonlocal Kirchhoff-type elliptic problems in 1D and 2D.

-div(m(u, |grad u|_2^2) grad u) = f(x, u) with u = 0 on the boundary is solved
by changing variable v = M_r(u), solving the local problem for v at frozen r,
and locating a fixed point of S(r) = int |grad u_r|^2.
"""

from . import expr
from .config import RunConfig, load_config, parse_config
from .errors import (
    ConfigError,
    ConvergenceError,
    KirchhoffError,
    ModelError,
    PreconditionError,
    SolverError,
)
from .kernels import BACKEND
from .linalg import SparseOperator, assemble_laplacian, assemble_schrodinger, cg_solve, smallest_eigenvalue
from .localsolve import (
    SolveReport,
    solve_linear,
    solve_semilinear_contraction,
    solve_semilinear_monotone,
    solve_semilinear_picard,
)
from .mesh import Field, Mesh, gradient_energy, l2_norm, linf_norm
from .model import CoefficientModel, Nonlinearity, PrimitiveMap, check_hypotheses, verify_lemma
from .nonlocal_solver import (
    Problem,
    check_contraction,
    check_f5,
    continuity_probe_S,
    evaluate_S,
    find_fixed_point,
    trace_S,
)

__version__ = "0.1.0"

__all__ = [
    "expr",
    "RunConfig",
    "load_config",
    "parse_config",
    "KirchhoffError",
    "ConfigError",
    "ModelError",
    "SolverError",
    "ConvergenceError",
    "PreconditionError",
    "BACKEND",
    "Mesh",
    "Field",
    "gradient_energy",
    "l2_norm",
    "linf_norm",
    "SparseOperator",
    "assemble_laplacian",
    "assemble_schrodinger",
    "cg_solve",
    "smallest_eigenvalue",
    "SolveReport",
    "solve_linear",
    "solve_semilinear_contraction",
    "solve_semilinear_picard",
    "solve_semilinear_monotone",
    "CoefficientModel",
    "Nonlinearity",
    "PrimitiveMap",
    "check_hypotheses",
    "verify_lemma",
    "Problem",
    "evaluate_S",
    "find_fixed_point",
    "trace_S",
    "check_f5",
    "check_contraction",
    "continuity_probe_S",
]
