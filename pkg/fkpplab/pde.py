"""
Evolution of the normalized Cauchy problem u_t = u_xx - u^q + u^p on [-L, L].

Diffusion is theta-implicit with homogeneous Dirichlet rows, the reaction is
explicit, and the step is limited by the reaction time scale so that the
blow-up regime stays resolved. Runs stop at blow-up, at certified decay or at
the horizon.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solve_banded

from .errors import (
    InsufficientWindow,
    NegativeInput,
    NonFiniteState,
    NotNormalized,
    NotOrdered,
    ParameterError,
    WrongRegime,
)
from .exact import EventKind, TimeTrajectory
from .model import Grid1D, ModelParams, Profile

logger = logging.getLogger(__name__)

# the lower end of the sup-norm window used to fit blow-up times
BLOWUP_FIT_FLOOR = 10.0
MIN_FIT_SAMPLES = 10
BOUNDARY_TOLERANCE = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping and stopping parameters of evolve."""
    theta: float = 1.0
    dt0: float = 1e-2
    sigma: float = 0.1
    blowup_threshold: float = 1e6
    decay_threshold: float = 1e-4
    t_max: float = 50.0
    snapshot_dt: float = 0.5
    boundary: str = "dirichlet"

    def __post_init__(self) -> None:
        if not 0.5 <= self.theta <= 1.0:
            raise ParameterError(f"theta must lie in [0.5, 1], got {self.theta!r}")
        if not self.dt0 > 0:
            raise ParameterError(f"dt0 must be positive, got {self.dt0!r}")
        if not 0 < self.sigma <= 1:
            raise ParameterError(f"sigma must lie in (0, 1], got {self.sigma!r}")
        if not 0 < self.decay_threshold < 1 < self.blowup_threshold:
            raise ParameterError(
                "thresholds must satisfy 0 < decay_threshold < 1 < blowup_threshold, "
                f"got {self.decay_threshold!r} and {self.blowup_threshold!r}"
            )
        if not (self.t_max > 0 and self.snapshot_dt > 0):
            raise ParameterError("t_max and snapshot_dt must be positive")
        if self.boundary != "dirichlet":
            raise ParameterError(f"unsupported boundary condition {self.boundary!r}")


@dataclass(frozen=True)
class TimeSeries:
    """A named scalar quantity sampled at increasing times."""
    name: str
    times: np.ndarray
    values: np.ndarray

    def window(self, start: float, end: float) -> "TimeSeries":
        mask = (self.times >= start) & (self.times <= end)
        return TimeSeries(self.name, self.times[mask], self.values[mask])

    def __len__(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class Snapshot:
    t: float
    profile: Profile


@dataclass(frozen=True)
class Diagnostics:
    """Per-step sup-norm, trapezoid mass and energy."""
    times: np.ndarray
    sup_norm: np.ndarray
    mass: np.ndarray
    energy: np.ndarray

    def series(self, name: str) -> TimeSeries:
        return TimeSeries(name, self.times, getattr(self, name))


class Verdict(str, Enum):
    BLOW_UP = "BlowUp"
    DECAY = "Decay"
    EXTINCT = "Extinct"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class Outcome:
    """
    Classification of a run.

    time is T_est for BlowUp, T_e for Extinct and the stopping time otherwise;
    rate_fits is filled by separatrix.classify.
    """
    verdict: Verdict
    time: float
    final_sup: float
    reason: str = ""
    rate_fits: Tuple = ()

    @property
    def variant(self) -> str:
        return self.verdict.value

    def with_fits(self, fits, time: Optional[float] = None) -> "Outcome":
        return Outcome(self.verdict, self.time if time is None else time,
                       self.final_sup, self.reason, tuple(fits))


@dataclass(frozen=True)
class EvolutionRecord:
    params: ModelParams
    grid: Grid1D
    config: SolverConfig
    snapshots: Tuple[Snapshot, ...]
    diagnostics: Diagnostics
    outcome: Outcome
    steps: int
    # first sampled time with negative energy, which forces blow-up
    negative_energy_at: Optional[float] = None
    initial_mass: float = field(default=0.0)

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]


# ---------------------------------------------------------------------------
# Energy and mass
# ---------------------------------------------------------------------------

def energy(u: Profile, p: float, q: float) -> float:
    """
    E(u) = 1/2 int u_x^2 + 1/(q+1) int u^(q+1) - 1/(p+1) int u^(p+1).

    For q = 1 this is the energy 1/2 int (u_x^2 + u^2) - 1/(p+1) int u^(p+1).
    Derivatives are centered (second-order one-sided at the ends), integrals
    use the trapezoid rule.
    """
    values = np.maximum(u.values, 0.0)
    dx = u.grid.dx
    ux = np.gradient(values, dx, edge_order=2)
    density = 0.5 * ux ** 2 + values ** (q + 1.0) / (q + 1.0) - values ** (p + 1.0) / (p + 1.0)
    return float(trapezoid(density, dx=dx))


def _mass(values: np.ndarray, dx: float) -> float:
    return float(trapezoid(values, dx=dx))


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------

class ImexStepper:
    """
    One step u -> (I - theta dt D)^(-1) [u + (1 - theta) dt D u + dt (u^p - u^q)].

    D is the centered second difference on interior nodes; boundary rows hold
    u = 0. The banded matrix depends on dt only and is cached.
    """

    def __init__(self, grid: Grid1D, params: ModelParams, theta: float = 1.0):
        self.grid = grid
        self.params = params
        self.theta = theta
        self._inv_dx2 = 1.0 / grid.dx ** 2
        self._banded = lru_cache(maxsize=16)(self._build_banded)

    def _build_banded(self, dt: float) -> np.ndarray:
        n = self.grid.n
        r = self.theta * dt * self._inv_dx2
        ab = np.zeros((3, n))
        ab[0, 2:] = -r
        ab[1, :] = 1.0 + 2.0 * r
        ab[2, :-2] = -r
        ab[1, 0] = ab[1, -1] = 1.0
        return ab

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        out[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) * self._inv_dx2
        return out

    def reaction(self, u: np.ndarray) -> np.ndarray:
        return u ** self.params.p - u ** self.params.q

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        u = np.maximum(u, 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            rhs = u + dt * self.reaction(u)
            if self.theta < 1.0:
                rhs += (1.0 - self.theta) * dt * self.laplacian(u)
        rhs[0] = rhs[-1] = 0.0
        return solve_banded((1, 1), self._banded(dt), rhs, check_finite=False)

    def time_step(self, sup: float, cfg: SolverConfig) -> float:
        """dt = min(dt0, sigma / (1 + p M^(p-1)))."""
        p = self.params.p
        return min(cfg.dt0, cfg.sigma / (1.0 + p * sup ** (p - 1.0)))


def _check_initial(u0: Profile, params: ModelParams) -> None:
    if not params.is_normalized:
        raise NotNormalized(
            f"evolve needs A = B = K = 1, got A={params.A:g}, B={params.B:g}, K={params.K:g}; "
            "map the data with model.rescale first"
        )
    if np.any(u0.values < 0):
        raise NegativeInput(f"initial data has negative values (min {u0.values.min():.3e})")
    edge = max(u0.values[0], u0.values[-1])
    if edge > BOUNDARY_TOLERANCE:
        logger.warning("initial data is %.3e at the boundary; homogeneous Dirichlet "
                       "conditions cut it off", edge)


def _land(t: float, *marks: float) -> float:
    """Snap t onto a snapshot time or the horizon it reached up to round-off."""
    for mark in marks:
        if math.isclose(t, mark, rel_tol=1e-12):
            return mark
    return t


def _nonincreasing_tail(times: List[float], sups: List[float]) -> bool:
    """Whether the sup-norm is nonincreasing over the last 20% of the run."""
    t = np.asarray(times)
    s = np.asarray(sups)
    tail = s[t >= 0.8 * t[-1]]
    return bool(np.all(np.diff(tail) <= 1e-14 * tail[:-1]))


def _blowup_root(times: np.ndarray, sups: np.ndarray, p: float,
                 threshold: float) -> Tuple[float, np.ndarray]:
    """
    Root of the least-squares line through sup^(-(p-1)) on the sup-norm window
    [10, threshold]. evolve and estimate_blowup_time both fit this window, so
    the step that overshoots the threshold is left out of either fit.
    """
    mask = (sups >= BLOWUP_FIT_FLOOR) & (sups <= threshold)
    found = int(np.count_nonzero(mask))
    if found < MIN_FIT_SAMPLES:
        raise InsufficientWindow(found, MIN_FIT_SAMPLES, "sup-norm samples in [10, threshold]")
    slope, intercept = np.polyfit(times[mask], sups[mask] ** (1.0 - p), 1)
    if slope >= 0:
        raise InsufficientWindow(0, MIN_FIT_SAMPLES, "samples with growing sup-norm")
    return -intercept / slope, mask


def evolve(u0: Profile, params: ModelParams, cfg: SolverConfig) -> EvolutionRecord:
    """
    Advance u0 until blow-up, certified decay or cfg.t_max.

    BlowUp is declared when the sup-norm reaches blowup_threshold, T_est being
    refined by extrapolation when the window allows it. Decay needs the
    sup-norm below decay_threshold with a nonincreasing trend over the last
    20% of the run. For q < 1 the run ends with Extinct when the whole profile
    vanishes and with Undetermined when an interior node reaches zero first.
    """
    _check_initial(u0, params)
    grid = u0.grid
    stepper = ImexStepper(grid, params, cfg.theta)
    p, q = params.p, params.q

    u = np.array(u0.values, dtype=float)
    u[0] = u[-1] = 0.0
    t, steps = 0.0, 0
    times, sups, masses, energies = [0.0], [float(u.max())], [_mass(u, grid.dx)], []
    energies.append(energy(Profile(grid, u), p, q))
    snapshots = [Snapshot(0.0, Profile(grid, u))]
    negative_energy_at = 0.0 if energies[0] < 0 else None
    next_snapshot = cfg.snapshot_dt
    outcome = None

    while outcome is None:
        sup = sups[-1]
        dt = min(stepper.time_step(sup, cfg), cfg.t_max - t, next_snapshot - t)
        new = stepper.step(u, dt)
        steps += 1
        t = _land(t + dt, next_snapshot, cfg.t_max)

        if not np.all(np.isfinite(new)):
            raise NonFiniteState(t, steps)

        if q < 1 and np.any(new[1:-1] <= 0):
            if np.all(new[1:-1] <= 0):
                u = np.zeros_like(new)
                outcome = Outcome(Verdict.EXTINCT, t, 0.0, "profile vanished")
            else:
                u = np.maximum(new, 0.0)
                outcome = Outcome(Verdict.UNDETERMINED, t, float(u.max()),
                                  "interior node reached zero; spatial extinction is not followed")
        else:
            u = np.maximum(new, 0.0)

        current = Profile(grid, u)
        times.append(t)
        sups.append(float(u.max()))
        masses.append(_mass(u, grid.dx))
        energies.append(energy(current, p, q))
        if negative_energy_at is None and energies[-1] < 0:
            negative_energy_at = t
            logger.debug("energy turned negative at t=%.6g", t)

        if outcome is not None:
            break
        if sups[-1] >= cfg.blowup_threshold:
            outcome = Outcome(Verdict.BLOW_UP, t, sups[-1], "blow-up threshold reached")
        elif sups[-1] <= cfg.decay_threshold and _nonincreasing_tail(times, sups):
            outcome = Outcome(Verdict.DECAY, t, sups[-1], "decay threshold reached")
        elif t >= cfg.t_max:
            outcome = Outcome(Verdict.UNDETERMINED, t, sups[-1], "horizon reached")

        if t >= next_snapshot and outcome is None:
            snapshots.append(Snapshot(t, current))
            next_snapshot += cfg.snapshot_dt

    if snapshots[-1].t != times[-1]:
        snapshots.append(Snapshot(times[-1], Profile(grid, u)))

    diagnostics = Diagnostics(np.asarray(times), np.asarray(sups),
                              np.asarray(masses), np.asarray(energies))
    if outcome.verdict is Verdict.BLOW_UP:
        try:
            T_est, _ = _blowup_root(diagnostics.times, diagnostics.sup_norm, p,
                                    cfg.blowup_threshold)
            outcome = Outcome(outcome.verdict, float(T_est), outcome.final_sup, outcome.reason)
        except InsufficientWindow as exc:
            logger.warning("keeping threshold crossing time as T_est: %s", exc)

    logger.info("evolve p=%g q=%g: %s at t=%.6g after %d steps",
                p, q, outcome.verdict.value, outcome.time, steps,
                extra={"extra_data": {"verdict": outcome.verdict.value, "time": outcome.time,
                                      "final_sup": outcome.final_sup, "steps": steps}})
    return EvolutionRecord(params, grid, cfg, tuple(snapshots), diagnostics, outcome,
                           steps, negative_energy_at, _mass(np.asarray(u0.values), grid.dx))


# ---------------------------------------------------------------------------
# Post-processing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlowupEstimate:
    T_est: float
    exponent: float
    samples: int
    window: Tuple[float, float]


def estimate_blowup_time(record: EvolutionRecord, p: float) -> BlowupEstimate:
    """
    Fit sup^(-(p-1)) linearly in t over the sup-norm window [10, threshold].

    The root of the fit is T_est; the exponent is the slope of log sup against
    log(T_est - t), close to -1/(p-1) for the generic rate. It is fitted over
    the first decade of T_est - t in the window, where the error of T_est is
    negligible against T_est - t.
    """
    if record.outcome.verdict is not Verdict.BLOW_UP:
        raise InsufficientWindow(0, MIN_FIT_SAMPLES,
                                 f"blow-up samples ({record.outcome.verdict.value} run)")
    times, sups = record.diagnostics.times, record.diagnostics.sup_norm
    T_est, mask = _blowup_root(times, sups, p, record.config.blowup_threshold)
    tw, sw = times[mask], sups[mask]
    remaining = T_est - tw
    early = remaining >= 0.1 * remaining[0]
    if np.count_nonzero(early) < MIN_FIT_SAMPLES:
        raise InsufficientWindow(int(np.count_nonzero(early)), MIN_FIT_SAMPLES,
                                 "samples in the first decade before T_est")
    exponent, _ = np.polyfit(np.log(remaining[early]), np.log(sw[early]), 1)
    logger.debug("blow-up fit: T_est=%.10g exponent=%.4f over %d samples",
                 T_est, exponent, tw.size)
    return BlowupEstimate(float(T_est), float(exponent), int(tw.size),
                          (float(tw[0]), float(tw[-1])))


def flat_record(trajectory: TimeTrajectory, grid: Grid1D, params: ModelParams,
                cfg: Optional[SolverConfig] = None) -> EvolutionRecord:
    """
    Wrap a time-only trajectory h(t) as a record of spatially constant profiles.

    The blow-up threshold of the record is the last sample, so that the whole
    trajectory is available to estimate_blowup_time.
    """
    t, h = trajectory.times, trajectory.values
    width = 2.0 * grid.half_width
    p, q = params.p, params.q
    potential = h ** (q + 1.0) / (q + 1.0) - h ** (p + 1.0) / (p + 1.0)
    diagnostics = Diagnostics(t, h, h * width, potential * width)
    event = trajectory.event
    if event is not None and event.kind is EventKind.BLOW_UP:
        outcome = Outcome(Verdict.BLOW_UP, event.time, float(h[-1]), "time-only trajectory")
    elif event is not None:
        outcome = Outcome(Verdict.EXTINCT, event.time, 0.0, "time-only trajectory")
    elif h[-1] < 1:
        outcome = Outcome(Verdict.DECAY, float(t[-1]), float(h[-1]), "time-only trajectory")
    else:
        outcome = Outcome(Verdict.UNDETERMINED, float(t[-1]), float(h[-1]), "time-only trajectory")

    base = cfg or SolverConfig()
    record_cfg = replace(
        base,
        blowup_threshold=float(h.max()) if h.max() > 1 else base.blowup_threshold,
        t_max=float(t[-1]) if t[-1] > 0 else base.t_max,
    )
    snapshots = (Snapshot(float(t[0]), Profile.constant(grid, h[0])),
                 Snapshot(float(t[-1]), Profile.constant(grid, h[-1])))
    negative = np.flatnonzero(potential < 0)
    return EvolutionRecord(params, grid, record_cfg, snapshots, diagnostics, outcome,
                           int(t.size - 1), float(t[negative[0]]) if negative.size else None,
                           float(h[0] * width))


def heat_kernel(x, t: float, M: float = 1.0):
    """M e^(-x^2/4t) / sqrt(4 pi t)."""
    x = np.asarray(x, dtype=float)
    return M * np.exp(-x ** 2 / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)


def measured_w_mass(record: EvolutionRecord) -> float:
    """Mass of the renormalized variable w = e^t u at the last snapshot."""
    final = record.final
    return math.exp(final.t) * final.profile.l1_norm()


def heat_kernel_gap(record: EvolutionRecord, M: float) -> TimeSeries:
    """t^(1/2) sup_x |e^t u(x, t) - M G(x, t)| at every snapshot with t > 0 (q = 1 only)."""
    if record.params.q != 1.0:
        raise WrongRegime(f"heat-kernel gap is defined for q = 1, got q={record.params.q:g}")
    if record.outcome.verdict is Verdict.BLOW_UP:
        raise WrongRegime("heat-kernel gap needs a decaying run, got BlowUp")
    times, gaps = [], []
    for snap in record.snapshots:
        if snap.t <= 0:
            continue
        w = math.exp(snap.t) * snap.profile.values
        gap = np.max(np.abs(w - heat_kernel(snap.profile.x, snap.t, M)))
        times.append(snap.t)
        gaps.append(math.sqrt(snap.t) * float(gap))
    return TimeSeries("heat_kernel_gap", np.asarray(times), np.asarray(gaps))


@dataclass(frozen=True)
class ComparisonReport:
    passed: bool
    max_violation: float
    steps: int
    t_end: float


def comparison_check(u0: Profile, v0: Profile, params: ModelParams, cfg: SolverConfig,
                     tolerance: float = 1e-8) -> ComparisonReport:
    """
    Evolve ordered data u0 <= v0 with a common step sequence and record the
    largest violation sup_x (u - v)+ over time.

    Steps follow the larger of the two sup-norms; the run ends at t_max or
    when either solution reaches the blow-up threshold.
    """
    if u0.grid != v0.grid:
        raise ParameterError("comparison data must share a grid")
    worst = float(np.max(u0.values - v0.values))
    if worst > 0:
        raise NotOrdered(worst)
    _check_initial(u0, params)
    _check_initial(v0, params)

    stepper = ImexStepper(u0.grid, params, cfg.theta)
    u = np.array(u0.values, dtype=float)
    v = np.array(v0.values, dtype=float)
    u[0] = u[-1] = v[0] = v[-1] = 0.0
    t, steps, violation = 0.0, 0, 0.0
    while t < cfg.t_max:
        sup = max(u.max(), v.max())
        if sup >= cfg.blowup_threshold:
            break
        dt = min(stepper.time_step(sup, cfg), cfg.t_max - t)
        u_new, v_new = stepper.step(u, dt), stepper.step(v, dt)
        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
            raise NonFiniteState(t + dt, steps + 1)
        u, v = np.maximum(u_new, 0.0), np.maximum(v_new, 0.0)
        t = _land(t + dt, cfg.t_max)
        steps += 1
        violation = max(violation, float(np.max(u - v)))

    report = ComparisonReport(violation <= tolerance, violation, steps, t)
    logger.info("comparison: max violation %.3e over %d steps up to t=%.6g",
                violation, steps, t)
    return report
