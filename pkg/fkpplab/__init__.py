"""
fkpplab: numerical laboratory for the generalized Fisher-KPP equation

    u_t = u_xx - u^q + u^p,    p > q > 0, p > 1.

Explicit and integrated stationary solutions, the time-only ODE, an IMEX
evolution solver, and the sub/supersolutions around the stationary profile
that separate decay from blow-up.
"""

__version__ = "0.1.0"

from .errors import FkppLabError
from .exact import (
    asymptotic_constants,
    bracket_check,
    integrate_time_ode,
    stationary_profile,
    verify_profile_asymptotics,
)
from .model import Grid1D, ModelParams, Profile, rescale, validate_params
from .pde import SolverConfig, Verdict, evolve
from .separatrix import Direction, build_candidate, classify, kappa_bisection, residual_sign_check

__all__ = [
    "__version__",
    "FkppLabError",
    "Grid1D",
    "ModelParams",
    "Profile",
    "SolverConfig",
    "Verdict",
    "Direction",
    "asymptotic_constants",
    "bracket_check",
    "build_candidate",
    "classify",
    "evolve",
    "integrate_time_ode",
    "kappa_bisection",
    "rescale",
    "residual_sign_check",
    "stationary_profile",
    "validate_params",
    "verify_profile_asymptotics",
]
