"""
Exception hierarchy for fkpplab.

Every failure the library can signal derives from FkppLabError, grouped in
families so callers can catch at the granularity they need. Errors that
describe bad input also derive from ValueError.
"""

from typing import Optional


class FkppLabError(Exception):
    """Base class for all fkpplab errors."""
    pass


# Parameters and regimes

class ParameterError(FkppLabError, ValueError):
    """Raised when model or construction parameters are invalid."""
    pass


class NonPositiveCoefficient(ParameterError):
    """Raised when A, B or K is not strictly positive and finite."""

    def __init__(self, name: str, value: float):
        self.name = name
        self.value = value
        super().__init__(f"Coefficient {name} must be positive and finite, got {value!r}")


class ExponentOrderViolation(ParameterError):
    """Raised when the exponents do not satisfy p > q > 0 and p > 1."""

    def __init__(self, p: float, q: float):
        self.p = p
        self.q = q
        super().__init__(f"Exponents must satisfy p > q > 0 and p > 1, got p={p!r}, q={q!r}")


class RegimeViolation(ParameterError):
    """Raised when an operation is called outside the exponent range it covers."""
    pass


class NotNormalized(ParameterError):
    """Raised when a solver needs A = B = K = 1 and gets something else."""
    pass


class InvalidInitial(ParameterError):
    """Raised for time-ODE initial values that are not positive or equal 1."""
    pass


class NoBlowup(ParameterError):
    """Raised when a blow-up time is requested for a solution that never blows up."""
    pass


class EvaluatedAtOrPastBlowup(ParameterError):
    """Raised when an explicit solution is evaluated at or beyond its blow-up time."""

    def __init__(self, t: float, blowup_time: float):
        self.t = t
        self.blowup_time = blowup_time
        super().__init__(f"t={t!r} is at or past the blow-up time T={blowup_time!r}")


class KappaOnWrongSide(ParameterError):
    """Raised when kappa is not > 1 for a subsolution or in (0, 1) for a supersolution."""
    pass


class BoundCollapse(ParameterError):
    """Raised when the admissible delta interval degenerates."""

    def __init__(self, reason: str, **parameters: float):
        self.reason = reason
        self.parameters = parameters
        details = ", ".join(f"{k}={v:.6g}" for k, v in parameters.items())
        super().__init__(f"{reason} ({details})" if details else reason)


# Grids and profiles

class GridError(FkppLabError, ValueError):
    """Raised for inconsistent grids or profiles."""
    pass


class GridMismatch(GridError):
    """Raised when two grids are not scale-images of each other."""
    pass


class DomainTooSmall(GridError):
    """Raised when the stationary tail has not decayed enough at the domain edge."""

    def __init__(self, half_width: float, tail: float, peak: float, ratio: float):
        self.half_width = half_width
        self.tail = tail
        self.peak = peak
        self.ratio = ratio
        super().__init__(
            f"Tail {tail:.3e} at |x|={half_width:g} is not below {ratio:g} x peak {peak:.6g}"
        )


class SampleOutsideProfile(GridError):
    """Raised when a comparison function is sampled outside its base profile."""
    pass


# Simulation

class SimulationError(FkppLabError):
    """Raised when a numerical run cannot proceed."""
    pass


class NonFiniteState(SimulationError):
    """Raised when the scheme produces NaN/Inf below the blow-up threshold."""

    def __init__(self, t: float, step: int):
        self.t = t
        self.step = step
        super().__init__(
            f"Non-finite state at t={t:.6g} (step {step}); reduce dt0 or sigma"
        )


class NegativeInput(SimulationError, ValueError):
    """Raised when initial data has negative or non-finite values."""
    pass


class NegativeRadicand(SimulationError):
    """Raised when the stationary first-order equation is stepped past its level set."""
    pass


class NotOrdered(SimulationError, ValueError):
    """Raised when comparison data violate u0 <= v0."""

    def __init__(self, worst: float):
        self.worst = worst
        super().__init__(f"Initial data are not ordered: max(u0 - v0) = {worst:.3e}")


class WrongRegime(SimulationError, ValueError):
    """Raised when a diagnostic is requested for a run of the wrong regime."""
    pass


# Post-processing

class AnalysisError(FkppLabError):
    """Raised when a fit or check lacks the data it needs."""
    pass


class InsufficientWindow(AnalysisError):
    """Raised when too few samples fall inside a fitting window."""

    def __init__(self, found: int, needed: int, what: str = "samples"):
        self.found = found
        self.needed = needed
        super().__init__(f"Need at least {needed} {what} in the window, found {found}")


class MissingEvent(AnalysisError):
    """Raised when a bracket needs a blow-up or extinction time that is absent."""
    pass


class BadBracket(AnalysisError):
    """Raised when the bisection endpoints do not classify as assumed."""

    def __init__(self, kappa_lo: float, verdict_lo: str, kappa_hi: float, verdict_hi: str):
        self.kappa_lo = kappa_lo
        self.kappa_hi = kappa_hi
        self.verdict_lo = verdict_lo
        self.verdict_hi = verdict_hi
        super().__init__(
            f"Expected Decay at kappa={kappa_lo:g} and BlowUp at kappa={kappa_hi:g}, "
            f"got {verdict_lo} and {verdict_hi}"
        )


# Configuration

class ConfigError(FkppLabError, ValueError):
    """Raised for malformed or incomplete experiment configuration."""
    pass


class ParseError(ConfigError):
    """Raised when a config line cannot be parsed."""

    def __init__(self, line: int, reason: str, text: Optional[str] = None):
        self.line = line
        self.reason = reason
        self.text = text
        super().__init__(f"line {line}: {reason}")


class UnknownKey(ConfigError):
    """Raised for keys not known in their section."""

    def __init__(self, section: str, key: str, line: Optional[int] = None):
        self.section = section
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"Unknown key '{key}' in [{section}]{where}")


class MissingKey(ConfigError):
    """Raised when a required key is absent."""

    def __init__(self, section: str, key: str):
        self.section = section
        self.key = key
        super().__init__(f"Missing required key '{key}' in [{section}]")
