"""
Model parameters, coefficient rescaling, grids and sampled profiles.

The generalized Fisher-KPP equation

    u_t = K u_xx - B u^q + A u^p,    p > q > 0, p > 1,

reduces to u_t = u_xx - u^q + u^p through x = a x', t = b t', u = c u'.
Everything downstream works in those normalized variables on a truncated,
uniform, symmetric grid.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .errors import (
    ExponentOrderViolation,
    GridError,
    GridMismatch,
    NonPositiveCoefficient,
)

logger = logging.getLogger(__name__)

# relative tolerance used when deciding whether two grids coincide
GRID_RTOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Exponents and coefficients of u_t = K u_xx - B u^q + A u^p."""
    p: float
    q: float
    A: float = 1.0
    B: float = 1.0
    K: float = 1.0

    def __post_init__(self) -> None:
        for name in ("A", "B", "K"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise NonPositiveCoefficient(name, value)
        p, q = self.p, self.q
        if not (math.isfinite(p) and math.isfinite(q)) or not (p > q > 0 and p > 1):
            raise ExponentOrderViolation(p, q)

    @property
    def is_normalized(self) -> bool:
        return self.A == 1.0 and self.B == 1.0 and self.K == 1.0

    @property
    def ode_only(self) -> bool:
        # q in (0, 1) is only covered at the level of the time ODE
        return self.q < 1.0

    def normalized(self) -> "ModelParams":
        return ModelParams(self.p, self.q)


def validate_params(p: float, q: float, A: float = 1.0, B: float = 1.0,
                    K: float = 1.0) -> ModelParams:
    """Validate five raw numbers and return ModelParams."""
    params = ModelParams(float(p), float(q), float(A), float(B), float(K))
    if params.ode_only:
        logger.info("q=%g < 1: parameters are valid for time-ODE operations only", q)
    return params


@dataclass(frozen=True)
class ScalingCoefficients:
    """Space, time and amplitude scales (a, b, c) of the normalizing change of variables."""
    a: float
    b: float
    c: float

    @classmethod
    def identity(cls) -> "ScalingCoefficients":
        return cls(1.0, 1.0, 1.0)


def rescale(params: ModelParams) -> ScalingCoefficients:
    """
    Coefficients such that u'(x', t') = u(a x', b t') / c solves the normalized equation.

    c = (B/A)^(1/(p-q)),  a = (K c^(1-p) / A)^(1/2),  b = c^(1-p) / A.
    """
    p, q = params.p, params.q
    c = (params.B / params.A) ** (1.0 / (p - q))
    b = c ** (1.0 - p) / params.A
    a = math.sqrt(params.K * c ** (1.0 - p) / params.A)
    return ScalingCoefficients(a=a, b=b, c=c)


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on [-L, L] with an odd number of nodes, so x = 0 is a node."""
    half_width: float
    n: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise GridError(f"half_width must be positive and finite, got {self.half_width!r}")
        if self.n < 3 or self.n % 2 == 0:
            raise GridError(f"point count must be odd and >= 3, got {self.n}")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def mid(self) -> int:
        return (self.n - 1) // 2

    @cached_property
    def x(self) -> np.ndarray:
        m = self.mid
        nodes = self.dx * np.arange(-m, m + 1, dtype=float)
        nodes[0], nodes[-1] = -self.half_width, self.half_width
        nodes[m] = 0.0
        nodes.flags.writeable = False
        return nodes

    def scaled(self, factor: float) -> "Grid1D":
        """Image of this grid under x -> factor * x."""
        return Grid1D(self.half_width * factor, self.n)

    def is_image_of(self, other: "Grid1D", factor: float) -> bool:
        return self.n == other.n and math.isclose(
            self.half_width, other.half_width * factor, rel_tol=GRID_RTOL
        )


@dataclass(frozen=True)
class Profile:
    """A function of x sampled at the nodes of a Grid1D. Values are read-only."""
    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise GridError(f"expected {self.grid.n} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise GridError("profile values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid1D, fn: Callable[[np.ndarray], np.ndarray]) -> "Profile":
        return cls(grid, fn(grid.x))

    @classmethod
    def constant(cls, grid: Grid1D, value: float) -> "Profile":
        return cls(grid, np.full(grid.n, float(value)))

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l1_norm(self) -> float:
        return float(trapezoid(np.abs(self.values), dx=self.grid.dx))

    def scaled(self, factor: float) -> "Profile":
        return Profile(self.grid, factor * self.values)

    def interpolate(self, x) -> np.ndarray:
        """Linear interpolation between nodes; constant continuation outside [-L, L]."""
        return np.interp(np.asarray(x, dtype=float), self.grid.x, self.values)

    def is_even(self) -> bool:
        return bool(np.array_equal(self.values, self.values[::-1]))


def norms(profile: Profile) -> Tuple[float, float]:
    """Sup-norm and trapezoid L1-norm of a profile."""
    return profile.sup_norm(), profile.l1_norm()


class Frame(str, Enum):
    TO_NORMALIZED = "to_normalized"
    FROM_NORMALIZED = "from_normalized"


def map_profile_between_frames(profile: Profile, coeffs: ScalingCoefficients,
                               direction: Frame,
                               target: Optional[Grid1D] = None) -> Profile:
    """
    Carry a profile between original and normalized variables.

    to_normalized divides coordinates by a and values by c; from_normalized
    multiplies. When a target grid is given it must be the image of the source
    grid, otherwise GridMismatch is raised.
    """
    direction = Frame(direction)
    if direction is Frame.TO_NORMALIZED:
        space, amplitude = 1.0 / coeffs.a, 1.0 / coeffs.c
    else:
        space, amplitude = coeffs.a, coeffs.c

    image = profile.grid.scaled(space)
    if target is not None:
        if not target.is_image_of(profile.grid, space):
            raise GridMismatch(
                f"target grid (L={target.half_width:g}, n={target.n}) is not the image "
                f"of (L={profile.grid.half_width:g}, n={profile.grid.n}) under x -> {space:g} x"
            )
        image = target
    return Profile(image, profile.values * amplitude)
