"""Command line interface.

Exit codes: 0 success, 1 validation failure (out-of-regime mu, malformed
values, bad grid syntax), 2 internal consistency failure (a monotone
iterate moved the wrong way, a verification suite found a broken
identity, a coupling invariant failed).

Every command that writes a CSV writes a manifest JSON next to it
(<stem>.manifest.json) recording the subcommand, all parameters, the
master seed, the package version and UTC start/finish times.  CSV floats
carry 12 significant digits; rerunning a command with the same manifest
parameters reproduces the CSV byte for byte, regardless of --workers.
"""

from __future__ import annotations

import functools
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import click

from . import __version__, bounds, model, quenched, simulate, solver
from .errors import ConsistencyError, ValidationError
from .tableio import render_csv, write_csv


class InternalError(click.ClickException):
    exit_code = 2


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            raise click.ClickException(str(exc))
        except ConsistencyError as exc:
            raise InternalError(str(exc))
    return wrapper


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def _write_manifest(out: Path, subcommand: str, params: dict,
                    master_seed: Optional[int], started: str) -> None:
    doc = {
        "subcommand": subcommand,
        "params": params,
        "master_seed": master_seed,
        "version": __version__,
        "started_utc": started,
        "finished_utc": _utc_now(),
    }
    _manifest_path(out).write_text(json.dumps(doc, indent=2, sort_keys=True)
                                   + "\n", encoding="utf-8")


def _regime_mu(mu: float) -> model.ModelParams:
    return model.ModelParams(mu).require_supercritical()


def _kind(name: str) -> model.ModelKind:
    return model.NAMED_KINDS[name]()


def parse_mu_grid(text: str):
    """Either a single value or start:stop:step, stop included within half
    a step.  Every value must lie in the supercritical regime (0, 1)."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, stop, step_ = parts
            if step_ <= 0 or stop < start:
                raise ValidationError(
                    f"bad mu grid {text!r}: need step > 0 and stop >= start")
            values = []
            k = 0
            while True:
                v = start + k * step_
                if v > stop + step_ / 2:
                    break
                values.append(round(v, 12))
                k += 1
        else:
            values = [float(text)]
    except ValidationError:
        raise
    except ValueError:
        raise ValidationError(
            f"bad mu grid {text!r}: expected a float or start:stop:step")
    for v in values:
        _regime_mu(v)
    return values


_model_option = click.option(
    "--model", "model_name", default="hybrid", show_default=True,
    type=click.Choice(sorted(model.NAMED_KINDS)), help="Model kind.")
_seed_option = click.option(
    "--seed", default=42, show_default=True, type=int, help="Master seed.")
_workers_option = click.option(
    "--workers", default=1, show_default=True, type=int,
    help="Worker threads; never affects results.")


@click.group()
@click.version_option(version=__version__, prog_name="distyly")
def cli():
    """Absorption probabilities of two-type birth-death walks: closed-form
    bounds, certified grid enclosures, Monte Carlo estimates."""


@cli.command("bounds")
@click.option("--mu", required=True, type=float)
@click.option("--x", required=True, type=int)
@click.option("--y", required=True, type=int)
@_guard
def cmd_bounds(mu: float, x: int, y: int):
    """Closed-form bound values and the resulting bracket at one state."""
    _regime_mu(mu)
    kit = bounds.BoundKit(mu)
    lo, hi = bounds.closed_form_bracket(mu, x, y)
    rows = [(name, float(kit.value(name, x, y)))
            for name in ("f0", "improved_lower", "h_hat", "h", "f1")]
    rows += [("bracket_lower", lo), ("bracket_upper", hi)]
    sys.stdout.write(render_csv(("name", "value"), rows))


@cli.command("solve")
@click.option("--mu", required=True, type=float)
@_model_option
@click.option("--grid", "extent", required=True, type=int,
              help="Box extent; interior states 1..extent-1 are solved.")
@click.option("--tol", default=1e-10, show_default=True, type=float,
              help="Per-sweep sup-norm change at which iteration stops.")
@click.option("--max-sweeps", default=200_000, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False,
                                                      path_type=Path))
@_guard
def cmd_solve(mu: float, model_name: str, extent: int, tol: float,
              max_sweeps: int, out: Path):
    """Certified two-sided enclosure of q on a truncated box, as CSV."""
    started = _utc_now()
    params = _regime_mu(mu)
    sol = solver.solve_bracket(params, _kind(model_name), extent,
                               tol=tol, max_sweeps=max_sweeps)
    solver.write_bracket_csv(sol, out)
    _write_manifest(out, "solve",
                    {"mu": mu, "model": model_name, "grid": extent,
                     "tol": tol, "max_sweeps": max_sweeps,
                     "out": str(out)}, None, started)
    click.echo(
        f"solved {model_name} mu={mu} extent={extent}: "
        f"sweeps lower/upper {sol.sweeps_lower}/{sol.sweeps_upper}, "
        f"residuals {sol.residual_lower:.3e}/{sol.residual_upper:.3e} "
        f"-> {out}")


SIM_HEADER = ("mu", "kind", "x", "y", "runs", "max_steps", "master_seed",
              "extinct_count", "censored_count", "p_hat", "ci_low",
              "ci_high", "decay_hat", "below_resolution")


def _sim_row(rep: simulate.EstimateReport):
    c = rep.config
    return (c.mu, c.kind.name, c.x, c.y, c.runs, c.max_steps, c.master_seed,
            rep.extinct_count, rep.censored_count, rep.p_hat, rep.ci_low,
            rep.ci_high, rep.decay_hat, rep.below_resolution)


@cli.command("simulate")
@click.option("--mu", required=True, type=float)
@_model_option
@click.option("--x", required=True, type=int)
@click.option("--y", required=True, type=int)
@click.option("--runs", required=True, type=int)
@click.option("--steps", "max_steps", required=True, type=int,
              help="Step horizon; runs alive at the horizon count as "
                   "survived (the estimate is a lower one).")
@_seed_option
@_workers_option
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path))
@_guard
def cmd_simulate(mu: float, model_name: str, x: int, y: int, runs: int,
                 max_steps: int, seed: int, workers: int,
                 out: Optional[Path]):
    """Monte Carlo extinction frequency from one start state."""
    started = _utc_now()
    _regime_mu(mu)
    cfg = simulate.SimConfig(mu=mu, kind=_kind(model_name), x=x, y=y,
                             runs=runs, max_steps=max_steps,
                             master_seed=seed, workers=workers)
    rep = simulate.simulate_extinction(cfg)
    if out is None:
        sys.stdout.write(render_csv(SIM_HEADER, [_sim_row(rep)]))
    else:
        write_csv(out, SIM_HEADER, [_sim_row(rep)])
        _write_manifest(out, "simulate",
                        {"mu": mu, "model": model_name, "x": x, "y": y,
                         "runs": runs, "steps": max_steps,
                         "workers": workers, "out": str(out)}, seed, started)
        click.echo(f"simulated {runs} runs -> {out}")


DECAY_HEADER = ("mu", "p_hat", "decay_hat", "decay_lower", "decay_upper",
                "decay_conjectured")


@cli.command("decay")
@click.option("--x", required=True, type=int,
              help="Diagonal start (x, x).")
@click.option("--runs", required=True, type=int)
@click.option("--steps", "max_steps", required=True, type=int)
@click.option("--mu-grid", "mu_grid", required=True,
              help="Single value or start:stop:step (stop inclusive).")
@_model_option
@_seed_option
@_workers_option
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path))
@_guard
def cmd_decay(x: int, runs: int, max_steps: int, mu_grid: str,
              model_name: str, seed: int, workers: int, out: Optional[Path]):
    """Diagonal decay roots p_hat^(1/x) over a mu grid, with the proven
    rate bounds and the conjectured rate."""
    started = _utc_now()
    mus = parse_mu_grid(mu_grid)
    rows = simulate.decay_experiment(mus, x=x, runs=runs,
                                     max_steps=max_steps, master_seed=seed,
                                     workers=workers, kind=_kind(model_name))
    table = [(r.mu, r.p_hat, r.decay_hat, r.decay_lower, r.decay_upper,
              r.decay_conjectured) for r in rows]
    if out is None:
        sys.stdout.write(render_csv(DECAY_HEADER, table))
    else:
        write_csv(out, DECAY_HEADER, table)
        _write_manifest(out, "decay",
                        {"x": x, "runs": runs, "steps": max_steps,
                         "mu_grid": mu_grid, "model": model_name,
                         "workers": workers, "out": str(out)}, seed, started)
        click.echo(f"decay table ({len(rows)} mu values) -> {out}")
    flagged = [r.mu for r in rows if r.below_resolution]
    if flagged:
        click.echo(f"note: p_hat = 0 at mu = {flagged}; decay_hat recorded "
                   "as 0 (below Monte Carlo resolution)", err=True)


QUENCHED_HEADER = ("mu", "x", "y", "environments", "runs_per_env",
                   "max_steps", "master_seed", "mean", "half_width",
                   "censored_runs")


@cli.command("quenched")
@click.option("--mu", required=True, type=float)
@click.option("--x", required=True, type=int)
@click.option("--y", required=True, type=int)
@click.option("--environments", required=True, type=int)
@click.option("--runs-per-env", "runs_per_env", required=True, type=int)
@click.option("--steps", "max_steps", required=True, type=int)
@_seed_option
@_workers_option
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path))
@_guard
def cmd_quenched(mu: float, x: int, y: int, environments: int,
                 runs_per_env: int, max_steps: int, seed: int, workers: int,
                 out: Optional[Path]):
    """Absorption frequency averaged over independent sign environments
    (hybrid kind), with an environment-clustered confidence width."""
    started = _utc_now()
    params = _regime_mu(mu)
    rep = quenched.quenched_estimate(params, x, y, environments,
                                     runs_per_env, max_steps,
                                     master_seed=seed, workers=workers)
    row = (mu, x, y, environments, runs_per_env, max_steps, seed,
           rep.mean, rep.half_width, rep.censored_runs)
    if out is None:
        sys.stdout.write(render_csv(QUENCHED_HEADER, [row]))
    else:
        write_csv(out, QUENCHED_HEADER, [row])
        _write_manifest(out, "quenched",
                        {"mu": mu, "x": x, "y": y,
                         "environments": environments,
                         "runs_per_env": runs_per_env, "steps": max_steps,
                         "workers": workers, "out": str(out)}, seed, started)
        click.echo(f"quenched estimate -> {out}")


@cli.command("verify")
@click.option("--mu", required=True, type=float)
@click.option("--extent", default=40, show_default=True, type=int,
              help="Interior side of the verification lattice.")
@click.option("--cycle-max", default=3, show_default=True, type=int,
              help="Largest birth-run length in the composed-step bracket.")
@_guard
def cmd_verify(mu: float, extent: int, cycle_max: int):
    """Run every identity and inequality suite; nonzero exit on failure."""
    _regime_mu(mu)
    rows = []
    rows += bounds.verify_harmonic_identities(mu, extent)
    rows += bounds.verify_subharmonic_inequalities(mu, extent)
    rows += quenched.verify_split_identities(mu, extent)
    rows += quenched.verify_death_cycle_bounds(mu, cycle_max, extent)
    bounds.write_check_report(rows, sys.stdout)
    failed = [r.check for r in rows if not r.passed]
    if failed:
        raise ConsistencyError(
            f"{len(failed)} verification check(s) failed: "
            + ", ".join(failed))


def main():
    cli()


if __name__ == "__main__":
    main()
