"""Tests for sub/supersolution candidates, rate fits and threshold experiments."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fkpplab.errors import (
    BadBracket,
    BoundCollapse,
    InsufficientWindow,
    KappaOnWrongSide,
    RegimeViolation,
    SampleOutsideProfile,
)
from fkpplab.exact import Regime, compute_stationary_qgt1
from fkpplab.model import Grid1D, ModelParams
from fkpplab.pde import (
    Outcome,
    SolverConfig,
    TimeSeries,
    Verdict,
    evolve,
    heat_kernel_gap,
    measured_w_mass,
)
from fkpplab.separatrix import (
    Direction,
    RateModel,
    T_CAP,
    build_candidate,
    candidate_profile,
    classify,
    energy_crossing,
    evaluate_candidate,
    fit_rate,
    kappa_bisection,
    ordering_check,
    residual_components,
    residual_sign_check,
    sample_lattice,
    sweep,
    tail_radius,
    tail_ratio,
)

Q1 = Regime.Q_EQUALS_1
QGT1 = Regime.Q_GT_1


# Candidate construction tests
def test_q1_subsolution_parameters(q1_base):
    """Test delta, gamma and T of the q = 1 subsolution with kappa = 1.21."""
    c = build_candidate(Direction.SUBSOLUTION, Q1, 1.21, 3.0, 1.0, q1_base)
    assert c.delta_bound == pytest.approx(0.21)
    assert c.delta == pytest.approx(0.105)
    assert c.gamma == pytest.approx(0.0525)
    assert c.T == pytest.approx(1.21 ** (1 / 0.105))
    assert c.T == pytest.approx(6.14, abs=0.01)


def test_q1_supersolution_parameters(q1_base):
    """Test delta, gamma and T of the q = 1 supersolution with kappa = 0.9."""
    c = build_candidate("supersolution", "q_equals_1", 0.9, 3.0, 1.0, q1_base)
    assert c.delta == pytest.approx(0.095)
    assert c.gamma == pytest.approx(0.095)
    assert c.T == pytest.approx(3.03, abs=0.01)


def test_tail_radius_of_rational_profile(q2_base):
    """Test R0 = sqrt(13.5) where -x psi'/psi = 3/2 for 6 / (x^2 + 4.5)."""
    assert tail_radius(q2_base, 1.5) == pytest.approx(math.sqrt(13.5), rel=1e-4)


def test_qgt1_subsolution_parameters(q2_base):
    """Test the q = 2 subsolution with kappa = 1.21."""
    c = build_candidate(Direction.SUBSOLUTION, QGT1, 1.21, 3.0, 2.0, q2_base)
    assert c.R0 == pytest.approx(math.sqrt(13.5), rel=1e-4)
    assert c.L0 == pytest.approx(1.0 / 3.0, rel=1e-4)
    expected_bound = (1.21 ** (2.0 / 3.0) - 1.0) / 9.0
    assert c.delta_bound == pytest.approx(expected_bound, rel=1e-3)
    assert c.delta == pytest.approx(0.00753, rel=1e-3)
    assert c.gamma == pytest.approx(c.delta / 1.5)
    assert 9e10 < c.T < 1.1e11


def test_qgt1_supersolution_raises_delta_to_cap_time(q2_base):
    """Test that delta is raised so that T does not exceed 1e12."""
    c = build_candidate(Direction.SUPERSOLUTION, QGT1, 0.9, 3.0, 2.0, q2_base)
    assert c.delta == pytest.approx(abs(math.log(0.9)) / math.log(T_CAP))
    assert c.delta == pytest.approx(0.003813, rel=1e-3)
    assert c.delta < c.delta_bound
    assert c.T == pytest.approx(T_CAP, rel=1e-9)


@pytest.mark.parametrize("direction,kappa", [
    (Direction.SUBSOLUTION, 0.9),
    (Direction.SUBSOLUTION, 1.0),
    (Direction.SUPERSOLUTION, 1.1),
    (Direction.SUPERSOLUTION, 0.0),
])
def test_kappa_on_wrong_side(q1_base, direction, kappa):
    """Test that kappa must lie on the side matching the direction."""
    with pytest.raises(KappaOnWrongSide):
        build_candidate(direction, Q1, kappa, 3.0, 1.0, q1_base)


def test_bound_collapse_for_kappa_near_one(q1_base):
    """Test that kappa too close to 1 leaves no admissible delta."""
    with pytest.raises(BoundCollapse):
        build_candidate(Direction.SUBSOLUTION, Q1, 1.0 + 1e-7, 3.0, 1.0, q1_base)


def test_candidate_regime_must_match_base(q1_base):
    """Test that a q = 1 base cannot carry a q = 2 candidate."""
    with pytest.raises(RegimeViolation):
        build_candidate(Direction.SUBSOLUTION, QGT1, 1.21, 3.0, 2.0, q1_base)


# Evaluation tests
def test_candidate_at_time_zero_is_kappa_scaled(q1_base):
    """Test that W(x, 0) = kappa psi(T^(+-gamma) x) at the peak."""
    c = build_candidate(Direction.SUBSOLUTION, Q1, 1.21, 3.0, 1.0, q1_base)
    assert evaluate_candidate(c, 0.0, 0.0) == pytest.approx(1.21 * q1_base.peak)


def test_candidate_profile_matches_pointwise_evaluation(q1_base):
    """Test that the sampled candidate agrees with evaluate_candidate."""
    c = build_candidate(Direction.SUPERSOLUTION, Q1, 0.9, 3.0, 1.0, q1_base)
    profile = candidate_profile(c, 2.0)
    np.testing.assert_allclose(profile.values, evaluate_candidate(c, profile.x, 2.0), rtol=1e-10)


def test_q1_supersolution_p_component_vanishes(q1_base):
    """Test that the p-power part is identically zero for the q = 1 supersolution."""
    c = build_candidate(Direction.SUPERSOLUTION, Q1, 0.9, 3.0, 1.0, q1_base)
    x, t = sample_lattice((-10.0, 10.0), (0.0, 10.0))
    _, _, p_part = residual_components(c, x, t)
    assert np.all(p_part == 0.0)


def test_residual_components_outside_base(q2_base):
    """Test that sampling beyond the computed profile is refused."""
    c = build_candidate(Direction.SUBSOLUTION, QGT1, 1.21, 3.0, 2.0, q2_base)
    with pytest.raises(SampleOutsideProfile):
        residual_components(c, np.array([59.9]), np.array([0.0]))


def test_sample_lattice_shape():
    """Test the flattened lattice size."""
    x, t = sample_lattice((-1.0, 1.0), (0.0, 2.0), nx=5, nt=3)
    assert x.shape == t.shape == (15,)
    assert set(np.round(t, 12)) == {0.0, 1.0, 2.0}


# Residual sign tests
@pytest.mark.parametrize("direction,kappa", [
    (Direction.SUBSOLUTION, 1.21),
    (Direction.SUPERSOLUTION, 0.9),
    (Direction.SUBSOLUTION, 2.0),
    (Direction.SUPERSOLUTION, 0.5),
])
def test_residual_sign_q1(q1_base, direction, kappa):
    """Test the residual sign of q = 1 candidates on the standard lattice."""
    c = build_candidate(direction, Q1, kappa, 3.0, 1.0, q1_base)
    x, t = sample_lattice((-15.0, 15.0), (0.0, 10.0))
    report = residual_sign_check(c, ModelParams(3.0, 1.0), x, t)
    assert report.passed
    assert report.residual.shape == x.shape


@pytest.mark.parametrize("direction,kappa", [
    (Direction.SUBSOLUTION, 1.21),
    (Direction.SUPERSOLUTION, 0.9),
])
def test_residual_sign_qgt1(q2_base, direction, kappa):
    """Test the residual sign of q = 2 candidates on the standard lattice."""
    c = build_candidate(direction, QGT1, kappa, 3.0, 2.0, q2_base)
    x, t = sample_lattice((-15.0, 15.0), (0.0, 10.0))
    assert residual_sign_check(c, ModelParams(3.0, 2.0), x, t).passed


@settings(max_examples=25, deadline=None)
@given(kappa=st.floats(min_value=1.05, max_value=3.0))
def test_q1_subsolution_residual_for_any_kappa(q1_base, kappa):
    """Test that the q = 1 subsolution rule works across kappa."""
    c = build_candidate(Direction.SUBSOLUTION, Q1, kappa, 3.0, 1.0, q1_base)
    x, t = sample_lattice((-10.0, 10.0), (0.0, 5.0), nx=21, nt=11)
    assert residual_sign_check(c, ModelParams(3.0, 1.0), x, t).passed


def test_residual_sign_check_rejects_other_params(q1_base):
    """Test that the candidate must be checked against its own exponents."""
    c = build_candidate(Direction.SUBSOLUTION, Q1, 1.21, 3.0, 1.0, q1_base)
    with pytest.raises(RegimeViolation):
        residual_sign_check(c, ModelParams(4.0, 1.0), [0.0], [0.0])


# Energy along candidates
def test_qgt1_subsolution_energy_turns_negative(q2_base):
    """Test that the energy of the q = 2 subsolution becomes and stays negative."""
    c = build_candidate(Direction.SUBSOLUTION, QGT1, 1.21, 3.0, 2.0, q2_base)
    crossing = energy_crossing(c)
    assert crossing.t_cross is not None
    assert crossing.t_cross > 1e12
    assert crossing.stays_negative


# Ordering and tail ratio
def test_ordering_check_against_supersolution(q1_base):
    """Test that the run from a supersolution's initial datum stays below it."""
    c = build_candidate(Direction.SUPERSOLUTION, Q1, 0.9, 3.0, 1.0, q1_base)
    u0 = candidate_profile(c, 0.0)
    record = evolve(u0, ModelParams(3.0, 1.0), SolverConfig(t_max=2.0, snapshot_dt=0.5))
    report = ordering_check(record, c)
    assert report.passed
    assert report.snapshots == len(record.snapshots)


def test_ordering_check_against_subsolution(q1_base):
    """Test that the run from 1.21 times the base stays above the subsolution until blow-up."""
    c = build_candidate(Direction.SUBSOLUTION, Q1, 1.21, 3.0, 1.0, q1_base)
    record = evolve(q1_base.profile.scaled(1.21), ModelParams(3.0, 1.0),
                    SolverConfig(t_max=10.0, snapshot_dt=0.5))
    report = ordering_check(record, c)
    assert record.outcome.verdict is Verdict.BLOW_UP
    assert report.passed
    assert report.max_violation <= 1e-10


def test_tail_ratio_of_scaled_base(q1_base):
    """Test that kappa * base has tail ratio kappa on both ends."""
    low, high = tail_ratio(q1_base.profile.scaled(1.3), q1_base)
    assert low == pytest.approx(1.3)
    assert high == pytest.approx(1.3)


# Rate fit tests
def test_fit_rate_exponential():
    """Test the exponential rate of 2 e^(-t)."""
    t = np.linspace(0.0, 10.0, 101)
    fit = fit_rate(TimeSeries("sup_norm", t, 2.0 * np.exp(-t)), RateModel.EXPONENTIAL)
    assert fit.exponent == pytest.approx(-1.0)
    assert fit.amplitude == pytest.approx(2.0)
    assert fit.residual < 1e-10


def test_fit_rate_power_in_time_to_blowup():
    """Test the power rate (T - t)^(-1/2) with a known blow-up time."""
    t = np.linspace(0.0, 0.99, 100)
    series = TimeSeries("sup_norm", t, (1.0 - t) ** -0.5)
    fit = fit_rate(series, "power", blowup_time=1.0)
    assert fit.exponent == pytest.approx(-0.5)
    assert fit.blowup_time == 1.0


def test_fit_rate_window_too_small():
    """Test that a short window is reported."""
    t = np.linspace(0.0, 10.0, 101)
    series = TimeSeries("sup_norm", t, np.exp(-t))
    with pytest.raises(InsufficientWindow):
        fit_rate(series, RateModel.EXPONENTIAL, window=(0.0, 0.5))


# Classification tests
def test_classify_decay_attaches_exponential_fit(q1_base):
    """Test that a decaying q = 1 run gets an exponential rate close to -1."""
    u0 = q1_base.profile.scaled(0.5)
    outcome = classify(u0, ModelParams(3.0, 1.0), SolverConfig(decay_threshold=1e-7, t_max=40.0))
    assert outcome.verdict is Verdict.DECAY
    (fit,) = outcome.rate_fits
    assert fit.model is RateModel.EXPONENTIAL
    assert fit.exponent == pytest.approx(-1.0, abs=0.15)


def test_classify_blowup_reports_estimated_time(q1_base):
    """Test that a blow-up run reports T_est and a power fit."""
    u0 = q1_base.profile.scaled(1.5)
    outcome = classify(u0, ModelParams(3.0, 1.0), SolverConfig(sigma=0.05, t_max=40.0))
    assert outcome.verdict is Verdict.BLOW_UP
    assert outcome.variant == "BlowUp"
    assert outcome.rate_fits[0].blowup_time == outcome.time


def test_classify_stationary_profile_is_unstable(q1_base):
    """Test that the sampled stationary profile itself leaves the equilibrium and blows up."""
    outcome = classify(q1_base.profile, ModelParams(3.0, 1.0), SolverConfig(t_max=20.0))
    assert outcome.verdict is Verdict.BLOW_UP
    assert 2.0 < outcome.time < 6.0


# Bisection tests
def _fake_classify(threshold):
    def fake(u0, params, cfg):
        kappa = u0.values.max() / math.sqrt(2.0)
        verdict = Verdict.DECAY if kappa < threshold else Verdict.BLOW_UP
        return Outcome(verdict, 1.0, 0.0)
    return fake


def test_kappa_bisection_converges(mocker, q1_base):
    """Test that the bisection bracket shrinks around the threshold."""
    mocker.patch("fkpplab.separatrix.classify", side_effect=_fake_classify(1.1))
    result = kappa_bisection(q1_base, ModelParams(3.0, 1.0), SolverConfig(), iters=10)
    assert len(result.steps) == 10
    assert result.width == pytest.approx(1.5 / 2 ** 10)
    assert abs(result.threshold - 1.1) <= result.width


def test_kappa_bisection_retries_undetermined(mocker, q1_base):
    """Test that an Undetermined verdict is retried with a doubled horizon."""
    calls = []

    def fake(u0, params, cfg):
        calls.append(cfg.t_max)
        kappa = u0.values.max() / math.sqrt(2.0)
        if abs(kappa - 1.25) < 1e-12 and cfg.t_max == 50.0:
            return Outcome(Verdict.UNDETERMINED, 50.0, 1.0)
        return Outcome(Verdict.DECAY if kappa < 1.1 else Verdict.BLOW_UP, 1.0, 0.0)

    mocker.patch("fkpplab.separatrix.classify", side_effect=fake)
    result = kappa_bisection(q1_base, ModelParams(3.0, 1.0), SolverConfig(t_max=50.0), iters=1)
    assert calls == [50.0, 50.0, 50.0, 100.0]
    assert result.steps[0].verdict is Verdict.BLOW_UP


def test_kappa_bisection_bad_bracket(mocker, q1_base):
    """Test that endpoints with the wrong verdicts are reported."""
    mocker.patch("fkpplab.separatrix.classify", side_effect=_fake_classify(3.0))
    with pytest.raises(BadBracket, match="kappa=2"):
        kappa_bisection(q1_base, ModelParams(3.0, 1.0), SolverConfig())


def test_sweep_sequential(mocker, q1_base):
    """Test that a single-worker sweep classifies every kappa in order."""
    mocker.patch("fkpplab.separatrix.classify", side_effect=_fake_classify(1.1))
    points = sweep([0.5, 1.0, 1.5], q1_base, ModelParams(3.0, 1.0), SolverConfig(), workers=1)
    assert [pt.kappa for pt in points] == [0.5, 1.0, 1.5]
    assert [pt.outcome.verdict for pt in points] == [Verdict.DECAY, Verdict.DECAY, Verdict.BLOW_UP]


def test_sweep_process_pool(q1_base):
    """Test that a two-worker sweep returns real verdicts in the order of kappas."""
    cfg = SolverConfig(sigma=0.05, t_max=20.0)
    points = sweep([0.5, 1.5], q1_base, ModelParams(3.0, 1.0), cfg, workers=2)
    assert [pt.kappa for pt in points] == [0.5, 1.5]
    assert [pt.outcome.verdict for pt in points] == [Verdict.DECAY, Verdict.BLOW_UP]
    assert points[1].outcome.rate_fits


# Full-scale threshold runs on L = 30, n = 3001
@pytest.fixture(scope="module")
def q2_base_short():
    return compute_stationary_qgt1(3.0, 2.0, Grid1D(30.0, 3001))


@pytest.mark.slow
@pytest.mark.parametrize("q,base_fixture", [(1.0, "q1_base"), (2.0, "q2_base_short")])
def test_full_scale_blowup_above_threshold(request, q, base_fixture):
    """kappa = 1.1, default SolverConfig: BlowUp with sup-norm exponent -1/2."""
    base = request.getfixturevalue(base_fixture)
    outcome = classify(base.profile.scaled(1.1), ModelParams(3.0, q), SolverConfig())
    assert outcome.verdict is Verdict.BLOW_UP
    assert outcome.rate_fits[0].exponent == pytest.approx(-0.5, abs=0.05)


@pytest.mark.slow
def test_full_scale_q1_decay_below_threshold(q1_base):
    """q = 1, kappa = 0.9, default SolverConfig: Decay at exponential rate -1."""
    outcome = classify(q1_base.profile.scaled(0.9), ModelParams(3.0, 1.0), SolverConfig())
    assert outcome.verdict is Verdict.DECAY
    (fit,) = outcome.rate_fits
    assert fit.model is RateModel.EXPONENTIAL
    assert fit.exponent == pytest.approx(-1.0, abs=0.1)


@pytest.mark.slow
def test_full_scale_q2_decay_below_threshold(q2_base_short):
    """q = 2, kappa = 0.9, decay_threshold 5e-3, t_max 400: Decay like t^(-1)."""
    cfg = SolverConfig(decay_threshold=5e-3, t_max=400.0)
    outcome = classify(q2_base_short.profile.scaled(0.9), ModelParams(3.0, 2.0), cfg)
    assert outcome.verdict is Verdict.DECAY
    (fit,) = outcome.rate_fits
    assert fit.model is RateModel.POWER
    assert fit.exponent == pytest.approx(-1.0, abs=0.1)


@pytest.mark.slow
def test_full_scale_heat_kernel_gap_shrinks(q1_base):
    """q = 1, kappa = 0.9, decay_threshold 1e-12, t_max 10: the measured-mass gap decreases."""
    cfg = SolverConfig(decay_threshold=1e-12, t_max=10.0)
    record = evolve(q1_base.profile.scaled(0.9), ModelParams(3.0, 1.0), cfg)
    assert record.final.t == 10.0
    gap = heat_kernel_gap(record, measured_w_mass(record))
    at = dict(zip(np.round(gap.times, 9), gap.values))
    assert at[8.0] < at[2.0]


@pytest.mark.slow
def test_full_scale_bisection_brackets_one(q1_base):
    """q = 1, decay_threshold 0.99, bracket [0.5, 2], 8 halvings: threshold near kappa = 1."""
    result = kappa_bisection(q1_base, ModelParams(3.0, 1.0), SolverConfig(decay_threshold=0.99))
    assert len(result.steps) == 8
    assert 0.95 <= result.threshold <= 1.05
