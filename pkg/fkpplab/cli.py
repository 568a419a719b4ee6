"""
Command line: one subcommand per experiment.

Every subcommand reads a configuration file, writes its CSV/JSON results and
a meta.json into the output directory, and exits with 0 on success, 2 when a
verification fails and 1 on any error.
"""

import functools
import logging
from datetime import datetime, timezone
from typing import Callable, Optional, Tuple

import click
import numpy as np
import pandas as pd

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import FkppLabError, RegimeViolation
from .exact import (
    asymptotic_constants,
    bracket_check,
    first_integral_residual,
    integrate_time_ode,
    ode_remaining_time,
    stationary_profile,
    verify_profile_asymptotics,
)
from .logconf import setup_logging
from .model import (
    Frame,
    ModelParams,
    Profile,
    ScalingCoefficients,
    map_profile_between_frames,
    rescale,
)
from .output import RunOutput
from .pde import evolve, heat_kernel_gap, measured_w_mass
from .separatrix import (
    Direction,
    build_candidate,
    classify as classify_outcome,
    energy_crossing,
    kappa_bisection,
    ordering_check,
    residual_sign_check,
    sample_lattice,
    sweep as sweep_kappas,
    tail_ratio,
)

logger = logging.getLogger(__name__)

EXIT_FAILED_CHECK = 2


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def experiment_options(func: Callable) -> Callable:
    """--config, --out and --seed, shared by every subcommand."""
    func = click.option("--seed", type=int, default=0, show_default=True,
                        help="Reserved; all current algorithms are deterministic.")(func)
    func = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
                        show_default=True, help="Output directory.")(func)
    func = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                        required=True, help="Experiment configuration file.")(func)
    return func


def reports_errors(func: Callable) -> Callable:
    """Turn library and I/O errors into a one-line message and exit status 1."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except FkppLabError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc
        except OSError as exc:
            raise click.ClickException(f"I/O error: {exc}") from exc

    return wrapper


def _meta(command: str, config_path: str, seed: int) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config": config_path,
        "seed": seed,
        "created": datetime.now(timezone.utc).isoformat(),
    }


def _finish(output: RunOutput, command: str, config_path: str, seed: int,
            passed: bool = True) -> None:
    output.add_json("meta.json", _meta(command, config_path, seed))
    for path in output.commit():
        click.echo(str(path))
    if not passed:
        click.echo(f"{command}: verification failed", err=True)
        click.get_current_context().exit(EXIT_FAILED_CHECK)


def _normalized(config: ExperimentConfig) -> Tuple[ModelParams, ScalingCoefficients]:
    params = config.model_params()
    coeffs = rescale(params)
    if not params.is_normalized:
        logger.info("normalizing with a=%.10g b=%.10g c=%.10g; results are in normalized "
                    "variables", coeffs.a, coeffs.b, coeffs.c)
    return params.normalized(), coeffs


def _initial_profile(config: ExperimentConfig, params: ModelParams,
                     coeffs: ScalingCoefficients) -> Profile:
    """
    Initial datum selected by [experiment] initial.

    stationary: kappa times the stationary profile on the normalized grid;
    constant and gaussian are given in original variables and mapped.
    """
    grid = config.grid()
    kind = config.experiment("initial", "stationary")
    if kind == "stationary":
        normalized_grid = grid.scaled(1.0 / coeffs.a)
        base = stationary_profile(params.p, params.q, normalized_grid)
        return base.profile.scaled(config.experiment("kappa", 1.0))
    amplitude = config.experiment("amplitude", 1.0)
    if kind == "constant":
        original = Profile.constant(grid, amplitude)
    elif kind == "gaussian":
        width = config.experiment("width", 1.0)
        original = Profile.from_function(grid, lambda x: amplitude * np.exp(-(x / width) ** 2))
    else:
        raise click.ClickException(
            f"unknown initial datum '{kind}' (stationary, constant or gaussian)")
    return map_profile_between_frames(original, coeffs, Frame.TO_NORMALIZED)


def _outcome_payload(outcome) -> dict:
    return {
        "variant": outcome.variant,
        "time": outcome.time,
        "final_sup": outcome.final_sup,
        "reason": outcome.reason,
        "rate_fits": [
            {
                "model": fit.model,
                "exponent": fit.exponent,
                "amplitude": fit.amplitude,
                "window": fit.window,
                "residual": fit.residual,
                "blowup_time": fit.blowup_time,
            }
            for fit in outcome.rate_fits
        ],
    }


def _tail_ratio_payload(u0: Profile, params: ModelParams) -> Optional[dict]:
    """inf and sup of u0 over the stationary profile; None when q < 1 has no such profile."""
    try:
        base = stationary_profile(params.p, params.q, u0.grid)
    except RegimeViolation as exc:
        logger.warning("no tail ratio against the stationary profile: %s", exc)
        return None
    low, high = tail_ratio(u0, base)
    return {"inf": low, "sup": high}


def _scaling_payload(coeffs: ScalingCoefficients) -> dict:
    return {"a": coeffs.a, "b": coeffs.b, "c": coeffs.c}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(version=__version__, prog_name="fkpplab")
@click.option("--quiet", "-q", is_flag=True, help="Only log warnings and errors.")
@click.option("--log-json", is_flag=True, help="Log one JSON object per line.")
def cli(quiet: bool, log_json: bool):
    """Numerical experiments for u_t = u_xx - u^q + u^p."""
    setup_logging(quiet=quiet, structured=log_json)


@cli.command("rescale")
@experiment_options
@reports_errors
def rescale_cmd(config_path: str, out_dir: str, seed: int):
    """Coefficients (a, b, c) mapping the equation to normalized form."""
    config = load_config(config_path)
    coeffs = rescale(config.model_params())
    output = RunOutput(out_dir)
    output.add_json("coefficients.json", _scaling_payload(coeffs))
    _finish(output, "rescale", config_path, seed)


@cli.command()
@experiment_options
@reports_errors
def stationary(config_path: str, out_dir: str, seed: int):
    """Stationary profile with its tail asymptotics report."""
    config = load_config(config_path)
    params, _ = _normalized(config)
    C = config.experiment("C", 0.0)
    sp = stationary_profile(params.p, params.q, config.grid(), C=C)
    constants = asymptotic_constants(params.p, params.q, C)
    report = verify_profile_asymptotics(sp, constants, config.experiment("tolerance", 0.05))

    output = RunOutput(out_dir)
    output.add_csv("profile.csv", pd.DataFrame({
        "x": sp.grid.x, "value": sp.profile.values, "derivative": sp.derivative.values,
    }))
    output.add_json("asymptotics.json", {
        "regime": sp.regime,
        "p": params.p,
        "q": params.q,
        "C": sp.C,
        "peak": sp.peak,
        "tail_amplitude": constants.tail_amplitude,
        "log_slope_limit": constants.log_slope_limit,
        "amplitude_error": report.amplitude_error,
        "slope_error": report.slope_error,
        "points": report.points,
        "tolerance": report.tolerance,
        "max_first_integral_residual": float(np.max(np.abs(first_integral_residual(sp)))),
        "passed": report.passed,
    })
    _finish(output, "stationary", config_path, seed, report.passed)


@cli.command("time-ode")
@experiment_options
@reports_errors
def time_ode(config_path: str, out_dir: str, seed: int):
    """Time-only solution h' = h^p - h^q with its rate bracket."""
    config = load_config(config_path)
    params, _ = _normalized(config)
    h0 = config.require("h0")
    trajectory = integrate_time_ode(h0, params.p, params.q, config.experiment("horizon", 50.0),
                                    samples=config.experiment("samples", 1001))
    report = bracket_check(trajectory, params.p, params.q, h0)

    event = trajectory.event
    output = RunOutput(out_dir)
    output.add_csv("trajectory.csv", pd.DataFrame({"t": trajectory.times, "h": trajectory.values}))
    output.add_json("bracket.json", {
        "kind": report.kind,
        "passed": report.passed,
        "worst_margin": report.worst_margin,
        "checked": report.checked,
        "skipped": report.skipped,
        "event": None if event is None else {"kind": event.kind, "time": event.time},
        "quadrature_time": None if event is None else ode_remaining_time(h0, params.p, params.q),
    })
    _finish(output, "time-ode", config_path, seed, report.passed)


@cli.command("evolve")
@experiment_options
@reports_errors
def evolve_cmd(config_path: str, out_dir: str, seed: int):
    """Evolve the initial datum; diagnostics, snapshots and the outcome."""
    config = load_config(config_path)
    params, coeffs = _normalized(config)
    u0 = _initial_profile(config, params, coeffs)
    record = evolve(u0, params, config.solver_config())

    d = record.diagnostics
    output = RunOutput(out_dir)
    output.add_csv("diagnostics.csv", pd.DataFrame({
        "t": d.times, "sup_norm": d.sup_norm, "mass": d.mass, "energy": d.energy,
    }))
    if config.experiment("write_snapshots", True):
        for index, snap in enumerate(record.snapshots):
            output.add_csv(f"snapshot_{index:04d}.csv", pd.DataFrame({
                "x": snap.profile.x, "t": np.full(snap.profile.grid.n, snap.t),
                "u": snap.profile.values,
            }))
    payload = _outcome_payload(record.outcome)
    payload.update({
        "steps": record.steps,
        "negative_energy_at": record.negative_energy_at,
        "scaling": _scaling_payload(coeffs),
    })
    output.add_json("outcome.json", payload)
    _finish(output, "evolve", config_path, seed)


@cli.command("classify")
@experiment_options
@reports_errors
def classify_cmd(config_path: str, out_dir: str, seed: int):
    """Outcome of the initial datum with fitted decay or blow-up rates."""
    config = load_config(config_path)
    params, coeffs = _normalized(config)
    u0 = _initial_profile(config, params, coeffs)
    outcome = classify_outcome(u0, params, config.solver_config())

    payload = _outcome_payload(outcome)
    payload["tail_ratio"] = _tail_ratio_payload(u0, params)
    payload["scaling"] = _scaling_payload(coeffs)
    output = RunOutput(out_dir)
    output.add_json("outcome.json", payload)
    _finish(output, "classify", config_path, seed)


@cli.command()
@experiment_options
@reports_errors
def bisect(config_path: str, out_dir: str, seed: int):
    """Bisect the amplitude multiplier of the stationary profile."""
    config = load_config(config_path)
    params, _ = _normalized(config)
    base = stationary_profile(params.p, params.q, config.grid())
    result = kappa_bisection(base, params, config.solver_config(),
                             config.experiment("kappa_lo", 0.5),
                             config.experiment("kappa_hi", 2.0),
                             config.experiment("iters", 8))

    output = RunOutput(out_dir)
    output.add_csv("bisection.csv", pd.DataFrame({
        "iter": [s.iteration for s in result.steps],
        "kappa_lo": [s.kappa_lo for s in result.steps],
        "kappa_hi": [s.kappa_hi for s in result.steps],
        "verdict": [s.verdict.value for s in result.steps],
    }))
    output.add_json("threshold.json", {
        "threshold": result.threshold,
        "width": result.width,
        "iterations": len(result.steps),
    })
    _finish(output, "bisect", config_path, seed)


@cli.command("verify-candidate")
@experiment_options
@reports_errors
def verify_candidate(config_path: str, out_dir: str, seed: int):
    """Sign of the residual of a sub- or supersolution on a sample lattice."""
    config = load_config(config_path)
    params, _ = _normalized(config)
    direction, kappa = config.require("direction", "kappa")
    base = stationary_profile(params.p, params.q, config.grid())
    candidate = build_candidate(Direction(direction), base.regime, kappa,
                                params.p, params.q, base)
    x_max = config.experiment("x_max", 15.0)
    x, t = sample_lattice((-x_max, x_max), (0.0, config.experiment("t_check", 10.0)),
                          config.experiment("lattice_nx", 41), config.experiment("lattice_nt", 21))
    report = residual_sign_check(candidate, params, x, t)

    payload = {
        "direction": candidate.direction,
        "regime": candidate.regime,
        "kappa": candidate.kappa,
        "delta": candidate.delta,
        "gamma": candidate.gamma,
        "T": candidate.T,
        "delta_bound": candidate.delta_bound,
        "R0": candidate.R0,
        "L0": candidate.L0,
        "passed": report.passed,
        "worst": report.worst,
        "max_p_component": report.max_p_component,
    }
    if candidate.direction is Direction.SUBSOLUTION:
        crossing = energy_crossing(candidate, config.experiment("energy_horizon", 1e30))
        payload["energy_crossing"] = crossing.t_cross
        payload["energy_stays_negative"] = crossing.stays_negative

    passed = report.passed
    if config.experiment("check_ordering", False):
        # kappa * base lies on the candidate's side of W(., 0)
        record = evolve(base.profile.scaled(kappa), params, config.solver_config())
        ordering = ordering_check(record, candidate)
        payload["ordering"] = {
            "passed": ordering.passed,
            "max_violation": ordering.max_violation,
            "snapshots": ordering.snapshots,
            "run_outcome": record.outcome.variant,
        }
        passed = passed and ordering.passed

    output = RunOutput(out_dir)
    output.add_csv("residual.csv", pd.DataFrame({"x": report.x, "t": report.t,
                                                 "residual": report.residual}))
    output.add_json("verification.json", payload)
    _finish(output, "verify-candidate", config_path, seed, passed)


@cli.command()
@experiment_options
@reports_errors
def gap(config_path: str, out_dir: str, seed: int):
    """Heat-kernel gap t^(1/2) |e^t u - M G| for the two mass choices (q = 1)."""
    config = load_config(config_path)
    params, coeffs = _normalized(config)
    u0 = _initial_profile(config, params, coeffs)
    record = evolve(u0, params, config.solver_config())
    initial = heat_kernel_gap(record, u0.l1_norm())
    measured = heat_kernel_gap(record, measured_w_mass(record))

    output = RunOutput(out_dir)
    output.add_csv("gap.csv", pd.DataFrame({
        "t": initial.times,
        "gap_paper_mass": initial.values,
        "gap_measured_mass": measured.values,
    }))
    _finish(output, "gap", config_path, seed)


@cli.command()
@experiment_options
@reports_errors
def sweep(config_path: str, out_dir: str, seed: int):
    """Classify many multiples of the stationary profile, in parallel."""
    config = load_config(config_path)
    params, _ = _normalized(config)
    base = stationary_profile(params.p, params.q, config.grid())
    points = sweep_kappas(config.require("kappas"), base, params, config.solver_config(),
                          config.experiment("workers"))

    output = RunOutput(out_dir)
    output.add_csv("sweep.csv", pd.DataFrame({
        "kappa": [pt.kappa for pt in points],
        "verdict": [pt.outcome.verdict.value for pt in points],
        "time": [pt.outcome.time for pt in points],
        "final_sup": [pt.outcome.final_sup for pt in points],
    }))
    _finish(output, "sweep", config_path, seed)


def main(argv: Optional[list] = None) -> int:
    """Entry point; maps usage errors to exit status 1 (2 means a failed check)."""
    try:
        status = cli.main(args=argv, prog_name="fkpplab", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    return status if isinstance(status, int) else 0


if __name__ == "__main__":
    raise SystemExit(main())
