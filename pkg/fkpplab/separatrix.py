"""
Comparison functions around the stationary solution and threshold experiments.

A candidate has the self-similar form

    W(x, t) = s^(+-delta) base(s^(+-gamma) x),    s = t + T,

with + for a subsolution (data above kappa > 1 times the stationary profile)
and - for a supersolution (kappa < 1). delta, gamma and T follow the
parameter rules of the blow-up and decay constructions; the residual
W_t - W_xx + W^q - W^p is evaluated analytically through the ODE of the base.
"""

import logging
import math
import multiprocessing
from dataclasses import dataclass, replace
from enum import Enum
from functools import partial
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    BadBracket,
    BoundCollapse,
    InsufficientWindow,
    KappaOnWrongSide,
    RegimeViolation,
    SampleOutsideProfile,
)
from .exact import Regime, StationaryProfile
from .model import ModelParams, Profile
from .pde import (
    MIN_FIT_SAMPLES,
    EvolutionRecord,
    Outcome,
    SolverConfig,
    TimeSeries,
    Verdict,
    energy,
    estimate_blowup_time,
    evolve,
)

logger = logging.getLogger(__name__)

T_CAP = 1e12
DELTA_FLOOR = 1e-6
RESIDUAL_RTOL = 1e-10


class Direction(str, Enum):
    SUBSOLUTION = "subsolution"
    SUPERSOLUTION = "supersolution"


@dataclass(frozen=True)
class SeparatrixCandidate:
    """Parameters of a sub- or supersolution built on a stationary profile."""
    direction: Direction
    regime: Regime
    kappa: float
    delta: float
    gamma: float
    T: float
    base: StationaryProfile
    delta_bound: float
    R0: Optional[float] = None
    L0: Optional[float] = None

    @property
    def sign(self) -> float:
        return 1.0 if self.direction is Direction.SUBSOLUTION else -1.0

    @property
    def p(self) -> float:
        return self.base.p

    @property
    def q(self) -> float:
        return self.base.q


def _cap_delta(delta: float, bound: float, kappa: float) -> float:
    """Raise delta until T = kappa^(+-1/delta) <= T_CAP, staying below the bound."""
    log_kappa = abs(math.log(kappa))
    if log_kappa / delta <= math.log(T_CAP):
        return delta
    raised = log_kappa / math.log(T_CAP)
    if raised >= bound:
        raise BoundCollapse("time shift T would exceed 1e12 inside the admissible delta range",
                            kappa=kappa, delta_bound=bound)
    logger.warning("kappa=%g: delta raised from %.4g to %.4g to keep T <= 1e12",
                   kappa, delta, raised)
    return raised


def tail_radius(base: StationaryProfile, ratio: float) -> float:
    """
    Smallest radius beyond which -zeta psi'/psi exceeds ratio on the base grid.

    The crossing is located by linear interpolation between the last node at
    or below ratio and its successor.
    """
    mid = base.grid.mid
    x = base.grid.x[mid:]
    psi = base.profile.values[mid:]
    dpsi = base.derivative.values[mid:]
    log_slope = -x * dpsi / psi
    below = np.flatnonzero(log_slope <= ratio)
    last = int(below[-1])
    if last == x.size - 1:
        raise BoundCollapse("log-slope of the base never exceeds delta/gamma on its grid",
                            ratio=ratio, half_width=base.grid.half_width)
    x0, x1 = x[last], x[last + 1]
    y0, y1 = log_slope[last], log_slope[last + 1]
    return float(x0 + (ratio - y0) * (x1 - x0) / (y1 - y0))


def build_candidate(direction: Direction, regime: Regime, kappa: float, p: float, q: float,
                    base: StationaryProfile) -> SeparatrixCandidate:
    """
    Choose delta, gamma and T for a comparison function above (sub) or below
    (super) the stationary profile.

    delta is half its admissible upper bound; for q > 1 the ratio delta/gamma
    is 1/(p-1) + 1/(q-1), which fixes R0 and L0 before delta is chosen.
    """
    direction = Direction(direction)
    regime = Regime(regime)
    if base.regime is not regime or base.p != p or base.q != q:
        raise RegimeViolation(
            f"base profile is {base.regime.value} with p={base.p:g}, q={base.q:g}; "
            f"requested {regime.value} with p={p:g}, q={q:g}"
        )
    if direction is Direction.SUBSOLUTION and not kappa > 1:
        raise KappaOnWrongSide(f"a subsolution needs kappa > 1, got {kappa!r}")
    if direction is Direction.SUPERSOLUTION and not 0 < kappa < 1:
        raise KappaOnWrongSide(f"a supersolution needs 0 < kappa < 1, got {kappa!r}")

    R0 = L0 = None
    if regime is Regime.Q_EQUALS_1:
        if direction is Direction.SUBSOLUTION:
            bound = kappa ** (0.5 * (p - 1.0)) - 1.0
        else:
            bound = 1.0 - kappa ** (p - 1.0)
    else:
        ratio = 1.0 / (p - 1.0) + 1.0 / (q - 1.0)
        R0 = tail_radius(base, ratio)
        L0 = float(base.value(R0))
        exponent = (p - 1.0) * (p - q) / (p + q - 2.0)
        if direction is Direction.SUBSOLUTION:
            bound = (kappa ** exponent - 1.0) * L0 ** (p - 1.0)
        else:
            bound = min(0.5 * ratio, (1.0 - kappa ** exponent) * L0 ** (p - 1.0))

    delta = 0.5 * bound
    if delta < DELTA_FLOOR:
        raise BoundCollapse("admissible delta fell below 1e-6", kappa=kappa, delta_bound=bound)
    delta = _cap_delta(delta, bound, kappa)

    if regime is Regime.Q_EQUALS_1:
        factor = 4.0 if direction is Direction.SUBSOLUTION else 2.0
        gamma = delta * (p - 1.0) / factor
    else:
        gamma = delta / (1.0 / (p - 1.0) + 1.0 / (q - 1.0))
    sign = 1.0 if direction is Direction.SUBSOLUTION else -1.0
    T = kappa ** (sign / delta)

    logger.debug("%s kappa=%g: delta=%.6g (bound %.6g) gamma=%.6g T=%.6g R0=%s L0=%s",
                 direction.value, kappa, delta, bound, gamma, T, R0, L0)
    return SeparatrixCandidate(direction, regime, kappa, delta, gamma, T, base, bound, R0, L0)


def evaluate_candidate(c: SeparatrixCandidate, x, t: float):
    """(t+T)^(+-delta) base((t+T)^(+-gamma) x)."""
    s = t + c.T
    zeta = s ** (c.sign * c.gamma) * np.asarray(x, dtype=float)
    return s ** (c.sign * c.delta) * c.base.value(zeta)


def candidate_profile(c: SeparatrixCandidate, t: float) -> Profile:
    """The candidate at time t, sampled exactly on the image of the base grid."""
    s = t + c.T
    grid = c.base.grid.scaled(s ** (-c.sign * c.gamma))
    return Profile(grid, s ** (c.sign * c.delta) * c.base.profile.values)


# ---------------------------------------------------------------------------
# Residual sign verification
# ---------------------------------------------------------------------------

def residual_components(c: SeparatrixCandidate, x, t):
    """
    Split W_t - W_xx + W^q - W^p into a linear part, a q-power part and a p-power part.

    With zeta the similarity variable and psi'' = psi^q - psi^p for the base:
      linear  = +-s^(+-delta - 1) (delta psi + gamma zeta psi')
      q-power = -psi^q s^(+-q delta) expm1(+-(2 gamma - (q-1) delta) ln s)
      p-power = -psi^p s^(+-(delta + 2 gamma)) expm1(+-((p-1) delta - 2 gamma) ln s)
    The p-power part vanishes identically for the q = 1 supersolution.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(t, dtype=float) + c.T
    sign, delta, gamma, p, q = c.sign, c.delta, c.gamma, c.p, c.q
    zeta = s ** (sign * gamma) * x
    if not c.base.covers(zeta):
        raise SampleOutsideProfile(
            f"|zeta| up to {np.max(np.abs(zeta)):.4g} exceeds the base half-width "
            f"{c.base.grid.half_width:g}"
        )
    psi = c.base.value(zeta)
    dpsi = c.base.slope(zeta)
    log_s = np.log(s)
    linear = sign * s ** (sign * delta - 1.0) * (delta * psi + gamma * zeta * dpsi)
    q_part = -psi ** q * s ** (sign * q * delta) * np.expm1(
        sign * (2.0 * gamma - (q - 1.0) * delta) * log_s)
    p_part = -psi ** p * s ** (sign * (delta + 2.0 * gamma)) * np.expm1(
        sign * ((p - 1.0) * delta - 2.0 * gamma) * log_s)
    return linear, q_part, p_part


def sample_lattice(x_range: Tuple[float, float], t_range: Tuple[float, float],
                   nx: int = 41, nt: int = 21) -> Tuple[np.ndarray, np.ndarray]:
    """Flattened (x, t) pairs of an nx-by-nt tensor lattice."""
    xs = np.linspace(x_range[0], x_range[1], nx)
    ts = np.linspace(t_range[0], t_range[1], nt)
    X, T = np.meshgrid(xs, ts, indexing="ij")
    return X.ravel(), T.ravel()


@dataclass(frozen=True)
class ResidualReport:
    passed: bool
    direction: Direction
    worst: float
    max_p_component: float
    x: np.ndarray
    t: np.ndarray
    residual: np.ndarray


def residual_sign_check(c: SeparatrixCandidate, params: ModelParams,
                        x, t) -> ResidualReport:
    """
    Verify the residual sign on the sample points.

    A subsolution passes when the residual is at most 1e-10 times the largest
    of its three parts at every sample, a supersolution when it is at least
    minus that. worst is the extreme signed ratio residual/scale.
    """
    if params.p != c.p or params.q != c.q:
        raise RegimeViolation(f"candidate is built for p={c.p:g}, q={c.q:g}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise RegimeViolation("candidates are defined for t >= 0")
    linear, q_part, p_part = residual_components(c, x, t_arr)
    residual = linear + q_part + p_part
    scale = np.maximum.reduce([np.abs(linear), np.abs(q_part), np.abs(p_part)])
    scale = np.where(scale > 0, scale, 1.0)
    ratio = residual / scale
    if c.direction is Direction.SUBSOLUTION:
        worst = float(np.max(ratio))
        passed = worst <= RESIDUAL_RTOL
    else:
        worst = float(np.min(ratio))
        passed = worst >= -RESIDUAL_RTOL
    report = ResidualReport(passed, c.direction, worst, float(np.max(np.abs(p_part))),
                            np.asarray(x, dtype=float), t_arr, residual)
    logger.info("residual check %s kappa=%g: worst ratio %.3e over %d samples -> %s",
                c.direction.value, c.kappa, worst, residual.size,
                "pass" if passed else "fail")
    return report


# ---------------------------------------------------------------------------
# Energy and ordering along candidates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyCrossing:
    t_cross: Optional[float]
    stays_negative: bool
    times: np.ndarray
    energies: np.ndarray


def energy_crossing(c: SeparatrixCandidate, t_max: float = 1e30,
                    samples: int = 241) -> EnergyCrossing:
    """First geometrically sampled t with E(candidate(t)) < 0, and whether it stays negative."""
    times = np.concatenate(([0.0], np.geomspace(1.0, t_max, samples - 1)))
    energies = np.array([energy(candidate_profile(c, t), c.p, c.q) for t in times])
    negative = np.flatnonzero(energies < 0)
    if negative.size == 0:
        return EnergyCrossing(None, False, times, energies)
    first = int(negative[0])
    stays = bool(np.all(energies[first:] < 0))
    logger.info("candidate energy turns negative at t=%.4g (stays negative: %s)",
                times[first], stays)
    return EnergyCrossing(float(times[first]), stays, times, energies)


@dataclass(frozen=True)
class OrderingReport:
    passed: bool
    max_violation: float
    snapshots: int


def ordering_check(record: EvolutionRecord, c: SeparatrixCandidate,
                   tolerance: float = 1e-6) -> OrderingReport:
    """Max over snapshots of (W - u)+ for a subsolution, (u - W)+ for a supersolution."""
    worst = 0.0
    for snap in record.snapshots:
        w = evaluate_candidate(c, snap.profile.x, snap.t)
        gap = w - snap.profile.values if c.direction is Direction.SUBSOLUTION \
            else snap.profile.values - w
        worst = max(worst, float(np.max(gap)))
    return OrderingReport(worst <= tolerance, worst, len(record.snapshots))


def tail_ratio(u0: Profile, base: StationaryProfile) -> Tuple[float, float]:
    """inf and sup of u0 / base over the interior 90% of the grid of u0."""
    x = u0.x
    inner = np.abs(x) <= 0.9 * u0.grid.half_width
    ratio = u0.values[inner] / base.value(x[inner])
    return float(np.min(ratio)), float(np.max(ratio))


# ---------------------------------------------------------------------------
# Rates and classification
# ---------------------------------------------------------------------------

class RateModel(str, Enum):
    EXPONENTIAL = "exponential"
    POWER = "power"


@dataclass(frozen=True)
class RateFit:
    model: RateModel
    exponent: float
    amplitude: float
    window: Tuple[float, float]
    residual: float
    blowup_time: Optional[float] = None


def fit_rate(series: TimeSeries, model: RateModel,
             window: Optional[Tuple[float, float]] = None,
             blowup_time: Optional[float] = None) -> RateFit:
    """
    Least-squares rate fit of a positive series.

    exponential: log v = log a + k t; power: log v = log a + k log t, or
    k log(T - t) when a blow-up time is given.
    """
    model = RateModel(model)
    part = series.window(*window) if window is not None else series
    t, v = part.times, part.values
    keep = v > 0
    if blowup_time is not None:
        keep &= t < blowup_time
    elif model is RateModel.POWER:
        keep &= t > 0
    found = int(np.count_nonzero(keep))
    if found < MIN_FIT_SAMPLES:
        raise InsufficientWindow(found, MIN_FIT_SAMPLES, f"positive {series.name} samples")
    t, v = t[keep], v[keep]

    if model is RateModel.EXPONENTIAL:
        abscissa = t
    elif blowup_time is not None:
        abscissa = np.log(blowup_time - t)
    else:
        abscissa = np.log(t)
    log_v = np.log(v)
    slope, intercept = np.polyfit(abscissa, log_v, 1)
    residual = float(np.sqrt(np.mean((log_v - (slope * abscissa + intercept)) ** 2)))
    return RateFit(model, float(slope), float(math.exp(intercept)),
                   (float(t[0]), float(t[-1])), residual, blowup_time)


def classify(u0: Profile, params: ModelParams, cfg: SolverConfig) -> Outcome:
    """
    Evolve u0 and attach rate fits to the outcome.

    BlowUp gets the power fit in T_est - t; Decay gets an exponential fit for
    q = 1 and a power fit in t otherwise, both over the second half of the run.
    """
    record = evolve(u0, params, cfg)
    outcome = record.outcome
    sup = record.diagnostics.series("sup_norm")
    try:
        if outcome.verdict is Verdict.BLOW_UP:
            estimate = estimate_blowup_time(record, params.p)
            start, T_est = estimate.window[0], estimate.T_est
            window = (start, T_est - 0.1 * (T_est - start))
            fit = fit_rate(sup, RateModel.POWER, window, blowup_time=T_est)
            return outcome.with_fits([fit], time=T_est)
        if outcome.verdict is Verdict.DECAY:
            model = RateModel.EXPONENTIAL if params.q == 1.0 else RateModel.POWER
            t_end = float(sup.times[-1])
            return outcome.with_fits([fit_rate(sup, model, (0.5 * t_end, t_end))])
    except InsufficientWindow as exc:
        logger.warning("%s without rate fit: %s", outcome.verdict.value, exc)
    return outcome


def _classify_kappa(kappa: float, base: StationaryProfile, params: ModelParams,
                    cfg: SolverConfig) -> Outcome:
    return classify(base.profile.scaled(kappa), params, cfg)


@dataclass(frozen=True)
class BisectionStep:
    iteration: int
    kappa: float
    kappa_lo: float
    kappa_hi: float
    verdict: Verdict


@dataclass(frozen=True)
class BisectionResult:
    threshold: float
    width: float
    steps: Tuple[BisectionStep, ...]


def _decided(kappa: float, base: StationaryProfile, params: ModelParams,
             cfg: SolverConfig) -> Verdict:
    """Classify kappa * base; an Undetermined run is retried once with twice the horizon."""
    verdict = classify(base.profile.scaled(kappa), params, cfg).verdict
    if verdict is Verdict.UNDETERMINED:
        logger.warning("kappa=%.10g undetermined at t_max=%g; retrying with %g",
                       kappa, cfg.t_max, 2 * cfg.t_max)
        longer = replace(cfg, t_max=2 * cfg.t_max)
        verdict = classify(base.profile.scaled(kappa), params, longer).verdict
    return verdict


def _decays(verdict: Verdict) -> bool:
    return verdict in (Verdict.DECAY, Verdict.EXTINCT)


def kappa_bisection(base: StationaryProfile, params: ModelParams, cfg: SolverConfig,
                    kappa_lo: float = 0.5, kappa_hi: float = 2.0,
                    iters: int = 8) -> BisectionResult:
    """
    Bisect the amplitude multiplier between a decaying and a blowing-up datum.

    Verdicts still undetermined after the retry count as the blow-up side.
    """
    if not kappa_lo < 1 < kappa_hi:
        raise BadBracket(kappa_lo, "not below 1", kappa_hi, "not above 1")
    verdict_lo = _decided(kappa_lo, base, params, cfg)
    verdict_hi = _decided(kappa_hi, base, params, cfg)
    if not _decays(verdict_lo) or verdict_hi is not Verdict.BLOW_UP:
        raise BadBracket(kappa_lo, verdict_lo.value, kappa_hi, verdict_hi.value)

    steps: List[BisectionStep] = []
    lo, hi = kappa_lo, kappa_hi
    for iteration in range(1, iters + 1):
        mid = 0.5 * (lo + hi)
        verdict = _decided(mid, base, params, cfg)
        if _decays(verdict):
            lo = mid
        else:
            hi = mid
        steps.append(BisectionStep(iteration, mid, lo, hi, verdict))
        logger.info("bisection %d: kappa=%.8f -> %s, bracket [%.8f, %.8f]",
                    iteration, mid, verdict.value, lo, hi,
                    extra={"extra_data": {"kappa": mid, "verdict": verdict.value,
                                          "kappa_lo": lo, "kappa_hi": hi}})
    return BisectionResult(0.5 * (lo + hi), hi - lo, tuple(steps))


@dataclass(frozen=True)
class SweepPoint:
    kappa: float
    outcome: Outcome


def sweep(kappas: Sequence[float], base: StationaryProfile, params: ModelParams,
          cfg: SolverConfig, workers: Optional[int] = None) -> List[SweepPoint]:
    """Classify kappa * base for every kappa, in a process pool when workers != 1."""
    job = partial(_classify_kappa, base=base, params=params, cfg=cfg)
    kappas = [float(k) for k in kappas]
    if workers == 1 or len(kappas) <= 1:
        outcomes: Iterable[Outcome] = map(job, kappas)
    else:
        with multiprocessing.Pool(processes=workers) as pool:
            outcomes = pool.map(job, kappas)
    return [SweepPoint(k, o) for k, o in zip(kappas, outcomes)]
