"""Kahan's discretization of quadratic vector fields and the modified
integrals and measures it preserves."""

from .errors import ConfigError, DimensionError, KahanError, DivisionByZero, NoConvergence, SingularStep
from .integrals import (
    AffineScalar,
    Case1,
    Case2,
    Case3Frozen,
    Case3Midpoint,
    FreezeTail,
    KahanTail,
    ModifiedIntegralSpec,
    Quadratic2Form,
    bc_step,
    case2_modified_integral,
    check_identity,
    d1,
    d2,
    eval_integral,
    modified_integral,
    planar_field,
    solve_bc_pair,
    verify_planar_structure,
)
from .nambu import (
    DensitySpec,
    NambuSpec,
    build_nambu_field,
    check_measure,
    density,
    flow_density_check,
    modified_H,
    modified_K,
)
from .qvf import (
    AffineMap,
    QuadraticVectorField,
    StepDiagnostics,
    affine_conjugate,
    eval_field,
    field_jacobian,
    kahan_inverse_step,
    kahan_step,
    map_jacobian,
)

__version__ = "0.1.0"

__all__ = [
    "affine_conjugate",
    "AffineMap",
    "AffineScalar",
    "bc_step",
    "build_nambu_field",
    "Case1",
    "Case2",
    "case2_modified_integral",
    "Case3Frozen",
    "Case3Midpoint",
    "check_identity",
    "check_measure",
    "ConfigError",
    "d1",
    "d2",
    "density",
    "DensitySpec",
    "DimensionError",
    "DivisionByZero",
    "eval_field",
    "eval_integral",
    "field_jacobian",
    "flow_density_check",
    "FreezeTail",
    "kahan_inverse_step",
    "kahan_step",
    "KahanError",
    "KahanTail",
    "map_jacobian",
    "modified_H",
    "modified_integral",
    "modified_K",
    "ModifiedIntegralSpec",
    "NambuSpec",
    "NoConvergence",
    "planar_field",
    "Quadratic2Form",
    "QuadraticVectorField",
    "SingularStep",
    "solve_bc_pair",
    "StepDiagnostics",
    "verify_planar_structure",
]
