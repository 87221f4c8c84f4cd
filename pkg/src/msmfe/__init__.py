"""Multipoint stress mixed finite element methods for 3D linear elasticity.

Cell-centered solvers on structured cuboid grids: stress in an enhanced
Raviart-Thomas space, weak stress symmetry via rotation multipliers, vertex
quadrature decoupling the stress unknowns by mesh vertex, and local
eliminations down to SPD systems in displacements (and, for the constant
rotation variant, rotations).
"""

from .assembly import METHODS, AssembledSystem, DofMap, assemble_system
from .harness import (
    COLUMNS,
    CaseResult,
    ManufacturedCase,
    StudyRow,
    conservation_residual,
    convergence_study,
    error_norms,
    example_one,
    example_three,
    example_two,
    format_study,
    make_case,
    solve_case,
    weak_symmetry_residual,
)
from .linsolve import (
    ConvergenceError,
    NegativeCurvatureError,
    SolverReport,
    SparseSpdMatrix,
    batched_spd_inverse,
    cg_solve,
    saddle_oracle_solve,
)
from .material import ComplianceField, apply_compliance, apply_stiffness, lame_from_E_nu
from .mesh import DomainBox, StructuredMesh, build_mesh, unit_box
from .reduction import (
    ReducedSystem,
    SolutionFields,
    eliminate_rotation,
    eliminate_stress,
    recover_fields,
)
from .ref_elements import Ert0Basis, ThetaBasis

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "COLUMNS",
    "AssembledSystem",
    "DofMap",
    "assemble_system",
    "CaseResult",
    "ManufacturedCase",
    "StudyRow",
    "conservation_residual",
    "convergence_study",
    "error_norms",
    "example_one",
    "example_two",
    "example_three",
    "format_study",
    "make_case",
    "solve_case",
    "weak_symmetry_residual",
    "ConvergenceError",
    "NegativeCurvatureError",
    "SolverReport",
    "SparseSpdMatrix",
    "batched_spd_inverse",
    "cg_solve",
    "saddle_oracle_solve",
    "ComplianceField",
    "apply_compliance",
    "apply_stiffness",
    "lame_from_E_nu",
    "DomainBox",
    "StructuredMesh",
    "build_mesh",
    "unit_box",
    "ReducedSystem",
    "SolutionFields",
    "eliminate_rotation",
    "eliminate_stress",
    "recover_fields",
    "Ert0Basis",
    "ThetaBasis",
    "__version__",
]
