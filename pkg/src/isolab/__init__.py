"""Isomonodromic deformations of Fuchsian systems.

Monodromy by analytic continuation, Schlesinger flow with tau-function
tracking, reducibility tests, Jordan-Pochhammer systems and their
hypergeometric integral solutions.
"""

from .errors import (
    BlowUpError,
    DiagonalApproachError,
    DivergentCycleError,
    EigenFailure,
    IsolabError,
    PoleProximityError,
    ShapeError,
    SingularMatrixError,
    StepUnderflow,
    TriangularizationError,
)
from .fuchsian import ExponentTable, FuchsianSystem, exponents, load_system, save_system, validate
from .hyperint import MasterFunctionSpec, TwistedSegment, jp_integral, master_function, verify_jp_solution
from .jordan_pochhammer import (
    JPForm,
    Triangular3Data,
    dual_pairing_check,
    jmatrix,
    jp_integrate,
    omega_apply,
    p3_solve,
    p3_theta,
    variation_of_parameters,
)
from .monodromy import MonodromySet, compute_monodromy, invariant_flag, standard_loops
from .numerics import ZPath, eig, normalized_log
from .reducibility import (
    BlockStructure,
    is_b_representation,
    theorem1_check,
    triangularize_residues,
    verify_propositions_2_3,
)
from .schlesinger import (
    DeformationState,
    DeformationTrace,
    deform,
    isomonodromy_check,
    schlesinger_rhs,
    tau_log_increment,
    triangular_tau_closed_form,
)

__version__ = "0.1.0"

__all__ = [
    "BlowUpError",
    "DiagonalApproachError",
    "DivergentCycleError",
    "EigenFailure",
    "IsolabError",
    "PoleProximityError",
    "ShapeError",
    "SingularMatrixError",
    "StepUnderflow",
    "TriangularizationError",
    "ExponentTable",
    "FuchsianSystem",
    "exponents",
    "load_system",
    "save_system",
    "validate",
    "MasterFunctionSpec",
    "TwistedSegment",
    "jp_integral",
    "master_function",
    "verify_jp_solution",
    "JPForm",
    "Triangular3Data",
    "dual_pairing_check",
    "jmatrix",
    "jp_integrate",
    "omega_apply",
    "p3_solve",
    "p3_theta",
    "variation_of_parameters",
    "MonodromySet",
    "compute_monodromy",
    "invariant_flag",
    "standard_loops",
    "ZPath",
    "eig",
    "normalized_log",
    "BlockStructure",
    "is_b_representation",
    "theorem1_check",
    "triangularize_residues",
    "verify_propositions_2_3",
    "DeformationState",
    "DeformationTrace",
    "deform",
    "isomonodromy_check",
    "schlesinger_rhs",
    "tau_log_increment",
    "triangular_tau_closed_form",
]
