"""
Exact and ODE-level special solutions of u_t = u_xx - u^q + u^p.

Solutions depending only on time solve h' = h^p - h^q; for q = 1 they are
explicit. Stationary solutions decaying at infinity solve the first-order
relation (psi')^2 = 2 psi^(q+1)/(q+1) - 2 psi^(p+1)/(p+1), explicit for q = 1
and integrated numerically from the peak for 1 < q < p.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import (
    DomainTooSmall,
    EvaluatedAtOrPastBlowup,
    InvalidInitial,
    MissingEvent,
    NegativeRadicand,
    NoBlowup,
    RegimeViolation,
)
from .model import Grid1D, ModelParams, Profile

logger = logging.getLogger(__name__)

BLOWUP_LEVEL = 1e8
ODE_RTOL = 1e-12
ODE_ATOL = 1e-14


# ---------------------------------------------------------------------------
# Solutions depending only on time
# ---------------------------------------------------------------------------

def blowup_time_q1(C: float, p: float) -> float:
    """Blow-up time ln(-1/C)/(p-1) of [1 + C e^((p-1)t)]^(-1/(p-1)), C < 0."""
    if C >= 0:
        raise NoBlowup(f"C={C!r} >= 0: the time-only solution is global")
    return math.log(-1.0 / C) / (p - 1.0)


def time_solution_q1(C: float, p: float, t):
    """Explicit time-only solution [1 + C e^((p-1)t)]^(-1/(p-1)) for q = 1."""
    t_arr = np.asarray(t, dtype=float)
    base = 1.0 + C * np.exp((p - 1.0) * t_arr)
    if np.any(base <= 0):
        raise EvaluatedAtOrPastBlowup(float(np.max(t_arr)), blowup_time_q1(C, p))
    values = base ** (-1.0 / (p - 1.0))
    return float(values) if values.ndim == 0 else values


class EventKind(str, Enum):
    BLOW_UP = "BlowUp"
    EXTINCT = "Extinct"


@dataclass(frozen=True)
class TimeEvent:
    kind: EventKind
    time: float


@dataclass(frozen=True)
class TimeTrajectory:
    """Samples of h(t) with the terminal event, if one was reached."""
    times: np.ndarray
    values: np.ndarray
    event: Optional[TimeEvent]
    h0: float
    p: float
    q: float


def ode_remaining_time(h: float, p: float, q: float) -> float:
    """
    Time left before blow-up (h > 1) or extinction (h < 1, q < 1) of h' = h^p - h^q.

    Computed by quadrature in the variables w = h^(1-p), resp. v = h^(1-q),
    where the integrands are bounded.
    """
    if h > 1:
        r = (p - q) / (p - 1.0)
        value, _ = quad(lambda w: 1.0 / (1.0 - w ** r), 0.0, h ** (1.0 - p),
                        epsabs=1e-14, epsrel=1e-13, limit=200)
        return value / (p - 1.0)
    if 0 < h < 1 and q < 1:
        r = (p - q) / (1.0 - q)
        value, _ = quad(lambda v: 1.0 / (1.0 - v ** r), 0.0, h ** (1.0 - q),
                        epsabs=1e-14, epsrel=1e-13, limit=200)
        return value / (1.0 - q)
    raise RegimeViolation(f"no finite-time event for h={h!r}, p={p!r}, q={q!r}")


def _event_refinement(t_event: float, count: int = 128) -> np.ndarray:
    """Sample times accumulating geometrically at t_event."""
    scale = max(t_event, 1.0)
    offsets = np.geomspace(0.5 * t_event, 1e-12 * scale, count) if t_event > 0 else np.array([])
    return t_event - offsets


def _strictly_monotone(times: np.ndarray, values: np.ndarray, increasing: bool):
    steps = np.diff(values) if increasing else -np.diff(values)
    keep = np.concatenate(([True], steps > 0))
    # dropping one sample can only help its successor, so a single pass per violation suffices
    while not np.all(keep):
        times, values = times[keep], values[keep]
        steps = np.diff(values) if increasing else -np.diff(values)
        keep = np.concatenate(([True], steps > 0))
    return times, values


def integrate_time_ode(h0: float, p: float, q: float, t_max: float,
                       samples: int = 1001,
                       blowup_level: float = BLOWUP_LEVEL) -> TimeTrajectory:
    """
    Integrate h' = h^p - h^q from h(0) = h0 up to t_max or the first event.

    The working variable keeps the right-hand side smooth up to the event:
    w = h^(1-p) above 1 (blow-up when h passes blowup_level, T extrapolated
    from w linearly to zero), v = h^(1-q) below 1 for q < 1 (extinction when
    v reaches 0) and log h below 1 otherwise.
    """
    ModelParams(p, q)
    if not (math.isfinite(h0) and h0 > 0) or h0 == 1.0:
        raise InvalidInitial(f"h0 must be positive and different from 1, got {h0!r}")

    if h0 > 1:
        r = (p - q) / (p - 1.0)
        w_level = blowup_level ** (1.0 - p)

        def rhs(t, y):
            w = max(y[0], 0.0)
            return [(1.0 - p) * (1.0 - w ** r)]

        def reached(t, y):
            return y[0] - w_level

        to_h = lambda y: y ** (-1.0 / (p - 1.0))
        y0 = h0 ** (1.0 - p)
        increasing = True
    elif q < 1:
        r = (p - q) / (1.0 - q)

        def rhs(t, y):
            v = max(y[0], 0.0)
            return [(1.0 - q) * (v ** r - 1.0)]

        def reached(t, y):
            return y[0]

        to_h = lambda y: np.maximum(y, 0.0) ** (1.0 / (1.0 - q))
        y0 = h0 ** (1.0 - q)
        increasing = False
    else:
        def rhs(t, y):
            h = math.exp(y[0])
            return [h ** (p - 1.0) - h ** (q - 1.0)]

        reached = None
        to_h = np.exp
        y0 = math.log(h0)
        increasing = False

    events = None
    if reached is not None:
        reached.terminal = True
        reached.direction = -1
        events = [reached]

    sol = solve_ivp(rhs, (0.0, t_max), [y0], method="DOP853", dense_output=True,
                    events=events, rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.success:
        raise RuntimeError(f"time ODE integration failed: {sol.message}")

    event = None
    t_end = float(sol.t[-1])
    extra = np.array([])
    if events is not None and sol.t_events[0].size:
        t_ev = float(sol.t_events[0][0])
        y_ev = float(sol.y_events[0][0][0])
        t_end = t_ev
        if h0 > 1:
            slope = (p - 1.0) * (1.0 - max(y_ev, 0.0) ** r)
            event = TimeEvent(EventKind.BLOW_UP, t_ev + max(y_ev, 0.0) / slope)
        else:
            event = TimeEvent(EventKind.EXTINCT, t_ev)
        extra = _event_refinement(t_ev)
        logger.debug("time ODE h0=%g p=%g q=%g: %s at t=%.12g",
                     h0, p, q, event.kind.value, event.time)
    else:
        logger.info("time ODE h0=%g p=%g q=%g: horizon t=%g reached without event",
                    h0, p, q, t_max)

    times = np.unique(np.concatenate((np.linspace(0.0, t_end, samples), extra)))
    times = times[(times >= 0.0) & (times <= t_end)]
    values = to_h(sol.sol(times)[0])
    values[0] = h0
    times, values = _strictly_monotone(times, values, increasing)
    return TimeTrajectory(times, values, event, h0, p, q)


# ---------------------------------------------------------------------------
# Rate brackets
# ---------------------------------------------------------------------------

def blowup_bracket(h0: float, p: float, q: float, T: float, t):
    """Lower and upper bounds on h(t) for h(0) > 1 and blow-up time T."""
    gap = np.asarray(T - np.asarray(t, dtype=float))
    lower = ((p - 1.0) * gap) ** (-1.0 / (p - 1.0))
    upper = ((p - 1.0) * (1.0 - h0 ** (q - p)) * gap) ** (-1.0 / (p - 1.0))
    return lower, upper


def decay_bracket(h0: float, p: float, q: float, t):
    """Lower and upper bounds on h(t) for h(0) < 1 and 1 < q < p."""
    t = np.asarray(t, dtype=float)
    start = h0 ** (1.0 - q)
    lower = ((q - 1.0) * t + start) ** (-1.0 / (q - 1.0))
    upper = ((q - 1.0) * (1.0 - h0 ** (p - q)) * t + start) ** (-1.0 / (q - 1.0))
    return lower, upper


def extinction_bracket(h0: float, p: float, q: float, T_e: float, t):
    """Lower and upper bounds on h(t) for h(0) < 1, 0 < q < 1 and extinction time T_e."""
    gap = np.asarray(T_e - np.asarray(t, dtype=float))
    lower = ((1.0 - q) * (1.0 - h0 ** (p - q)) * gap) ** (1.0 / (1.0 - q))
    upper = ((1.0 - q) * gap) ** (1.0 / (1.0 - q))
    return lower, upper


@dataclass(frozen=True)
class BracketReport:
    kind: str
    passed: bool
    worst_margin: float
    checked: int
    skipped: int
    event_time: Optional[float] = None


def bracket_check(trajectory: TimeTrajectory, p: float, q: float, h0: float,
                  resolution: float = 1e-4) -> BracketReport:
    """
    Check the two-sided rate bracket at every trajectory sample.

    The margin of a sample is min((h - lower)/h, (upper - h)/h); the check
    passes when the worst margin is positive. Close to the event the margin
    shrinks like h^(q-p) (blow-up) or h^(p-q) (extinction); samples where that
    scale is below resolution are skipped.
    For q = 1 and h0 < 1 the trajectory is compared with the explicit solution.
    """
    t, h = trajectory.times, trajectory.values
    event = trajectory.event

    if h0 < 1 and q == 1:
        C = h0 ** (1.0 - p) - 1.0
        gap = float(np.max(np.abs(h - time_solution_q1(C, p, t))))
        return BracketReport("closed_form", gap <= 1e-8, -gap, t.size, 0)

    if h0 > 1:
        if event is None or event.kind is not EventKind.BLOW_UP:
            raise MissingEvent("blow-up bracket needs a trajectory that reached blow-up")
        T = event.time
        mask = h ** (q - p) >= resolution
        lower, upper = blowup_bracket(h0, p, q, T, t[mask])
        kind = "blowup"
    elif q < 1:
        if event is None or event.kind is not EventKind.EXTINCT:
            raise MissingEvent("extinction bracket needs a trajectory that reached extinction")
        T = event.time
        mask = h ** (p - q) >= resolution
        lower, upper = extinction_bracket(h0, p, q, T, t[mask])
        kind = "extinction"
    else:
        T = None
        mask = t > 0
        lower, upper = decay_bracket(h0, p, q, t[mask])
        kind = "decay"

    hm = h[mask]
    if hm.size == 0:
        return BracketReport(kind, False, float("nan"), 0, int(t.size), T)
    margin = np.minimum((hm - lower) / hm, (upper - hm) / hm)
    worst = float(np.min(margin))
    report = BracketReport(kind, worst > 0, worst, int(hm.size), int(t.size - hm.size), T)
    logger.debug("bracket %s: worst margin %.3e over %d samples", kind, worst, hm.size)
    return report


# ---------------------------------------------------------------------------
# Stationary solutions
# ---------------------------------------------------------------------------

class Regime(str, Enum):
    Q_EQUALS_1 = "q_equals_1"
    Q_GT_1 = "q_gt_1"


def _sech2(theta: np.ndarray) -> np.ndarray:
    e = np.exp(-2.0 * np.abs(theta))
    return 4.0 * e / (1.0 + e) ** 2


def _g_q1(x, C: float, p: float):
    theta = C + 0.5 * (p - 1.0) * np.asarray(x, dtype=float)
    g = (0.5 * (p + 1.0) * _sech2(theta)) ** (1.0 / (p - 1.0))
    return g, -g * np.tanh(theta)


def first_integral_radicand(psi, p: float, q: float):
    """2 psi^(q+1)/(q+1) - 2 psi^(p+1)/(p+1), the square of psi' on the decaying orbit."""
    psi = np.asarray(psi, dtype=float)
    return 2.0 * psi ** (q + 1.0) / (q + 1.0) - 2.0 * psi ** (p + 1.0) / (p + 1.0)


@dataclass(frozen=True)
class StationaryProfile:
    """A stationary solution sampled on a grid, with its derivative."""
    profile: Profile
    derivative: Profile
    regime: Regime
    p: float
    q: float
    peak: float
    C: Optional[float] = None

    @property
    def grid(self) -> Grid1D:
        return self.profile.grid

    def value(self, zeta) -> np.ndarray:
        """Evaluate the profile at arbitrary positions."""
        zeta = np.asarray(zeta, dtype=float)
        if self.regime is Regime.Q_EQUALS_1:
            return _g_q1(zeta, self.C, self.p)[0]
        mid = self.grid.mid
        xr, vr = self.grid.x[mid:], self.profile.values[mid:]
        z = np.abs(zeta)
        inside = self.profile.interpolate(z)
        edge = xr[-1]
        with np.errstate(divide="ignore"):
            tail = vr[-1] * (edge / np.maximum(z, edge)) ** (2.0 / (self.q - 1.0))
        return np.where(z <= edge, inside, tail)

    def slope(self, zeta) -> np.ndarray:
        """Derivative at arbitrary positions (closed form, or the first-order relation)."""
        zeta = np.asarray(zeta, dtype=float)
        if self.regime is Regime.Q_EQUALS_1:
            return _g_q1(zeta, self.C, self.p)[1]
        radicand = np.maximum(first_integral_radicand(self.value(zeta), self.p, self.q), 0.0)
        return -np.sign(zeta) * np.sqrt(radicand)

    def covers(self, zeta) -> bool:
        """Whether all positions lie where the profile was computed (always for q = 1)."""
        if self.regime is Regime.Q_EQUALS_1:
            return True
        return bool(np.all(np.abs(np.asarray(zeta)) <= self.grid.half_width))


def stationary_q1(C: float, p: float, grid: Grid1D) -> StationaryProfile:
    """Explicit stationary solution g(x; C) for q = 1; even by reflection when C = 0."""
    ModelParams(p, 1.0)
    if C == 0.0:
        mid = grid.mid
        g_r, dg_r = _g_q1(grid.x[mid:], 0.0, p)
        values = np.concatenate((g_r[:0:-1], g_r))
        slope = np.concatenate((-dg_r[:0:-1], dg_r))
        slope[mid] = 0.0
    else:
        values, slope = _g_q1(grid.x, C, p)
    peak = float(_g_q1(0.0, C, p)[0])
    return StationaryProfile(Profile(grid, values), Profile(grid, slope),
                             Regime.Q_EQUALS_1, p, 1.0, peak, C=float(C))


def stationary_peak_qgt1(p: float, q: float) -> float:
    """Peak value ((p+1)/(q+1))^(1/(p-q)) of the decaying stationary solution."""
    if not (1.0 < q < p):
        raise RegimeViolation(f"stationary peak formula needs 1 < q < p, got p={p!r}, q={q!r}")
    return ((p + 1.0) / (q + 1.0)) ** (1.0 / (p - q))


def compute_stationary_qgt1(p: float, q: float, grid: Grid1D) -> StationaryProfile:
    """
    Decaying stationary solution for 1 < q < p.

    The first-order relation is not Lipschitz at the peak, so integration
    starts at x0 = dx/4 from the Taylor value psi(0) + (psi(0)^q - psi(0)^p) x0^2 / 2.
    It proceeds in log psi, psi'/psi = -sqrt(2 psi^(q-1)/(q+1) - 2 psi^(p-1)/(p+1)),
    which keeps psi positive in the algebraic tail. x < 0 follows by reflection.
    """
    peak = stationary_peak_qgt1(p, q)
    mid = grid.mid
    xr = grid.x[mid:]
    x0 = 0.25 * grid.dx
    curvature = peak ** q - peak ** p
    psi_start = peak + 0.5 * curvature * x0 ** 2

    def rhs(x, y):
        psi = math.exp(y[0])
        radicand = 2.0 * psi ** (q - 1.0) / (q + 1.0) - 2.0 * psi ** (p - 1.0) / (p + 1.0)
        if radicand < 0:
            if radicand < -1e-12:
                raise NegativeRadicand(
                    f"radicand {radicand:.3e} at x={x:.6g}, psi={psi:.15g}; reduce the step"
                )
            radicand = 0.0
        return [-math.sqrt(radicand)]

    sol = solve_ivp(rhs, (x0, xr[-1]), [math.log(psi_start)], method="DOP853",
                    t_eval=xr[1:], rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.success:
        raise NegativeRadicand(f"stationary integration failed: {sol.message}")

    right = np.concatenate(([peak], np.exp(sol.y[0])))
    d_right = -np.sqrt(np.maximum(first_integral_radicand(right, p, q), 0.0))
    d_right[0] = 0.0
    values = np.concatenate((right[:0:-1], right))
    slope = np.concatenate((-d_right[:0:-1], d_right))
    logger.debug("stationary profile p=%g q=%g on L=%g n=%d: psi(L)=%.3e",
                 p, q, grid.half_width, grid.n, right[-1])
    return StationaryProfile(Profile(grid, values), Profile(grid, slope),
                             Regime.Q_GT_1, p, q, peak)


def stationary_profile(p: float, q: float, grid: Grid1D, C: float = 0.0) -> StationaryProfile:
    """Dispatch to the explicit (q = 1) or integrated (1 < q < p) construction."""
    if q == 1.0:
        return stationary_q1(C, p, grid)
    return compute_stationary_qgt1(p, q, grid)


def first_integral_residual(sp: StationaryProfile) -> np.ndarray:
    """(psi')^2 - 2 psi^(q+1)/(q+1) + 2 psi^(p+1)/(p+1) at every node."""
    psi, dpsi = sp.profile.values, sp.derivative.values
    return dpsi ** 2 - first_integral_radicand(psi, sp.p, sp.q)


def stationary_residual(sp: StationaryProfile) -> np.ndarray:
    """Centered-difference residual of psi'' - psi^q + psi^p at interior nodes."""
    psi = sp.profile.values
    dx = sp.grid.dx
    second = (psi[2:] - 2.0 * psi[1:-1] + psi[:-2]) / dx ** 2
    inner = psi[1:-1]
    return second - inner ** sp.q + inner ** sp.p


# ---------------------------------------------------------------------------
# Asymptotics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticConstants:
    """Tail amplitude and logarithmic-slope limit of the stationary profile."""
    regime: Regime
    tail_amplitude: float
    log_slope_limit: float
    # q = 1 with C != 0: the amplitude as x -> +infinity differs from the one as x -> -infinity
    tail_amplitude_right: Optional[float] = None


def asymptotic_constants(p: float, q: float, C: float = 0.0) -> AsymptoticConstants:
    """
    q = 1: g(x; C) ~ K e^(-|x|) with K = (2(p+1))^(1/(p-1)) e^(2C/(p-1)) as x -> -infinity
    (e^(-2C/(p-1)) as x -> +infinity); slope limit -1 for g'/g.
    q > 1: |x|^(2/(q-1)) psi -> [2/(q-1) sqrt((q+1)/2)]^(2/(q-1)); x psi'/psi -> -2/(q-1).
    """
    if q == 1.0:
        base = (2.0 * (p + 1.0)) ** (1.0 / (p - 1.0))
        shift = 2.0 * C / (p - 1.0)
        return AsymptoticConstants(Regime.Q_EQUALS_1, base * math.exp(shift), -1.0,
                                   tail_amplitude_right=base * math.exp(-shift))
    if 1.0 < q < p:
        amplitude = (2.0 / (q - 1.0) * math.sqrt(0.5 * (q + 1.0))) ** (2.0 / (q - 1.0))
        return AsymptoticConstants(Regime.Q_GT_1, amplitude, -2.0 / (q - 1.0))
    raise RegimeViolation(f"no stationary tail for p={p!r}, q={q!r}")


@dataclass(frozen=True)
class AsymptoticsReport:
    passed: bool
    amplitude_error: float
    slope_error: float
    points: int
    tolerance: float


def tail_ratio_limit(regime: Regime) -> float:
    return 1e-3 if regime is Regime.Q_EQUALS_1 else 1e-2


def verify_profile_asymptotics(sp: StationaryProfile, ac: AsymptoticConstants,
                               tolerance: float = 0.05) -> AsymptoticsReport:
    """
    Compare the outer 10% of the grid with the tail laws.

    Raises DomainTooSmall when the profile at +-L is not yet small compared
    with its peak (1e-3 for q = 1, 1e-2 for the algebraic tails of q > 1).
    """
    x = sp.grid.x
    psi, dpsi = sp.profile.values, sp.derivative.values
    peak = float(np.max(psi))
    tail = float(max(abs(psi[0]), abs(psi[-1])))
    ratio = tail_ratio_limit(sp.regime)
    if tail >= ratio * peak:
        raise DomainTooSmall(sp.grid.half_width, tail, peak, ratio)

    outer = np.abs(x) >= 0.9 * sp.grid.half_width
    xo, vo, do = x[outer], psi[outer], dpsi[outer]
    if sp.regime is Regime.Q_EQUALS_1:
        right = ac.tail_amplitude_right
        if right is None:
            right = ac.tail_amplitude
        amplitude = np.where(xo > 0, right, ac.tail_amplitude)
        amp_err = np.abs(np.exp(np.abs(xo)) * vo / amplitude - 1.0)
        slope_err = np.abs(-np.sign(xo) * do / vo / (-ac.log_slope_limit) - 1.0)
    else:
        power = -ac.log_slope_limit
        amp_err = np.abs(np.abs(xo) ** power * vo / ac.tail_amplitude - 1.0)
        slope_err = np.abs(xo * do / vo / ac.log_slope_limit - 1.0)

    amp_worst, slope_worst = float(np.max(amp_err)), float(np.max(slope_err))
    passed = amp_worst <= tolerance and slope_worst <= tolerance
    logger.info("asymptotics: amplitude error %.3e, slope error %.3e (tol %g) -> %s",
                amp_worst, slope_worst, tolerance, "pass" if passed else "fail")
    return AsymptoticsReport(passed, amp_worst, slope_worst, int(xo.size), tolerance)
