"""Gradient-robust, well-balanced solver for steady compressible Stokes flow.

A 2D Bernardi-Raugel finite element discretization of the momentum balance
coupled to an upwind finite volume discretization of the continuity
equation.  The right-hand side tests against divergence-conforming
reconstructions of the velocity test functions, which balances arbitrary
gradient forces by the discrete pressure and keeps hydrostatic states
exact; the classical variant (no reconstruction) is included for
comparison.
"""

from .analysis import ConvergenceTable, ErrorReport, dyadic_rate, emit_table, error_norms
from .assembly import (
    PhiSLogS,
    PhiSquared,
    UpwindMatrix,
    assemble_a1,
    assemble_a2,
    assemble_b,
    assemble_face_flux_operator,
    assemble_force_functional,
    assemble_gravity_matrix,
    assemble_p0_mass,
    assemble_rhs,
    assemble_upwind,
    convexity_jump_diagnostic,
)
from .fespace import BoundaryValueError, BRSpace, P0Space, interpolate_velocity, pi0_project
from .mesh import (
    Mesh,
    MeshFormatError,
    MeshTopologyError,
    face_flux_frame,
    jittered_unit_square,
    load_mesh,
    save_mesh,
    structured_unit_square,
    uniform_refine,
    unstructured_sample,
)
from .problems import (
    FAMILIES,
    EquationOfState,
    ManufacturedProblem,
    convergence_family,
    eos_pressure,
    limit_family,
    wellbalanced_family,
)
from .reconstruction import (
    ReconstructedField,
    ReconstructionKind,
    divergence_identity_check,
    gradient_orthogonality_check,
    reconstruct,
)
from .solver import (
    DiscreteOperators,
    RunConfig,
    SolverError,
    State,
    density_step,
    discrete_divfree_projection,
    fixed_point_solve,
    momentum_step,
    solve_incompressible_stokes,
    wellbalanced_init,
)

__version__ = "0.1.0"
