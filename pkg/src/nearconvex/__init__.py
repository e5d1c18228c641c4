"""Derivative-free minimisation of approximately convex functions.

Simulated annealing over Hit-and-Run samples, with a one-dimensional
rejection sampler for approximately log-concave chord densities, a
grid-snapped stochastic oracle, staged optimisation for shrinking
non-convexity, and brute-force quadrature oracles for verification.
"""
__version__ = "0.1.0"

from .annealing import AnnealingPlan, AnnealResult, PlanOptions, anneal, make_plan  # noqa: E402
from .errors import (AnnealingError, ConfigurationError, DegenerateError, GeometryError,  # noqa: E402
                     InvalidInputError, NearConvexError, PrecisionError, PreconditionError,
                     RoundingError, SamplerError, SolverError)
from .geometry import Ball, Box, ConvexBody, MembershipBody, Polytope, RoundingMap, find_chord  # noqa: E402
from .hitrun import WalkParams, WalkResult, walk  # noqa: E402
from .objectives import Objective, ObjectiveOracle  # noqa: E402
from .oned import ChordFunction, SamplerParams, sample_chord  # noqa: E402
from .staged import DecayModel, critical_radius, staged_optimize  # noqa: E402
from .stochastic import StochasticOracleConfig, stochastic_params, wrap_as_approx_convex  # noqa: E402

__all__ = [
    "AnnealingError", "AnnealingPlan", "AnnealResult", "Ball", "Box", "ChordFunction", "ConfigurationError",
    "ConvexBody", "DecayModel", "DegenerateError", "GeometryError", "InvalidInputError", "MembershipBody",
    "NearConvexError", "Objective", "ObjectiveOracle", "PlanOptions", "Polytope", "PrecisionError",
    "PreconditionError", "RoundingError", "RoundingMap", "SamplerError", "SamplerParams", "SolverError",
    "StochasticOracleConfig", "WalkParams", "WalkResult", "anneal", "critical_radius", "find_chord",
    "make_plan", "sample_chord", "staged_optimize", "stochastic_params", "walk", "wrap_as_approx_convex",
]
