"""Radial p-Poisson problems on the unit ball: solver, level-set measures,
iteration bounds and integrability thresholds."""

__version__ = "0.1.0"

from .exponents import ContextError, ExponentContext, Regime, validate_context
from .profiles import PowerLawAffine, Sampled
from .quadrature import QuadratureConfig
from .radial import p_laplacian_residual, solve_radial

__all__ = [
    "ContextError",
    "ExponentContext",
    "PowerLawAffine",
    "QuadratureConfig",
    "Regime",
    "Sampled",
    "p_laplacian_residual",
    "solve_radial",
    "validate_context",
]
