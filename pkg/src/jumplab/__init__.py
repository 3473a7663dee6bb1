"""jumplab: exit laws and decay rates of small-diffusion processes with jumps.

A diffusion with generator scaled by a small delta runs in a bounded domain,
jumps to a fresh draw from a redistribution density at the rings of an
exponential clock with spatially varying intensity, and stops at the
boundary.  This package simulates the process, discretizes the associated
nonlocal elliptic operator, and evaluates the closed-form small-delta limits
of the exit law and of the principal decay rate, so the three routes can be
cross-checked at desk scale.
"""

from .errors import (ConfigError, DerivativeOrderError, GeometryError,
                     JumplabError, SamplingError, SolverError, ValidationError)
from .geometry import BoundaryQuadrature, Domain, InteriorQuadrature
from .fields import (CallableField, CoefficientSet, DistPowerField, MatrixField,
                     PolyField, TrigWave, VectorField, apply_adjoint,
                     apply_adjoint_power, apply_generator, const,
                     diffusion_root, nondivergence_drift, validate_coefficients)
from .presets import PRESET_NAMES, ProblemSpec, preset

__all__ = [
    "BoundaryQuadrature", "CallableField", "CoefficientSet", "ConfigError",
    "DerivativeOrderError", "DistPowerField", "Domain", "GeometryError",
    "InteriorQuadrature", "JumplabError", "MatrixField", "PRESET_NAMES",
    "PolyField", "ProblemSpec", "SamplingError", "SolverError", "TrigWave",
    "ValidationError", "VectorField", "apply_adjoint", "apply_adjoint_power",
    "apply_generator", "const", "diffusion_root", "nondivergence_drift",
    "preset", "validate_coefficients",
]

__version__ = "0.1.0"
