# tdlab/main.py
"""
Command-line entry point.

    python -m tdlab solve {minimax,baird,<instance.json>}
    python -m tdlab run <config-file>
    python -m tdlab rate <summary.csv> --window a:b
    python -m tdlab gen-config --preset {minimax-fig1,baird-fig3}

Exit codes: 0 success, 2 config error, 3 instance error, 4 I/O error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from tdlab import __version__
from tdlab.core.exceptions import ConfigError, InstanceError, RateFitError, TdLabError
from tdlab.core.logging import configure_logging
from tdlab.models.instance import PolicyEvaluationInstance
from tdlab.models.learner import StepsizeMode, StepsizePlan
from tdlab.operations.exact_solvers import (
    off_policy_population,
    on_policy_population,
    psi_contraction_certificate,
    spectral_report,
    td_contraction,
)
from tdlab.operations.mdp_core import build_geometry, induce_mrp
from tdlab.operations.stepsizes import (
    minimax_sample_threshold,
    off_policy_constants,
    on_policy_constants,
    plan_stepsizes,
    sample_complexity_td,
    sample_complexity_tdc,
)
from tdlab.schemas.instance import MinimaxSpec
from tdlab.services.config_file import PRESETS, dump_config, load_config, preset_config
from tdlab.services.experiment import run_experiment
from tdlab.services.instances import build_baird, build_minimax, export_instance, load_instance_file
from tdlab.services.reporting import emit, fit_rate, load_summary, parse_window

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INSTANCE = 3
EXIT_IO = 4


# ------------------------------------------------------------------------------
# Argument parsing
# ------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdlab", description="TD / averaged TD / TDC policy-evaluation lab")
    parser.add_argument("--version", action="version", version=f"tdlab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="Print exact population quantities of an instance")
    solve.add_argument("instance", help="minimax, baird, or a path to an instance JSON file")
    solve.add_argument("--states", type=int, default=10)
    solve.add_argument("--dim", type=int, default=3)
    solve.add_argument("--gamma", type=float, default=0.2)
    solve.add_argument("--epsilon", type=float, default=0.01)
    solve.add_argument("--signs", default=None, help="Balanced sign pattern such as +-")
    solve.add_argument("--no-epsilon-check", action="store_true", help="Do not enforce the epsilon admissibility bound")
    solve.add_argument("--eta", type=float, default=None, help="TD stepsize for the contraction check")
    solve.add_argument("--alpha", type=float, default=None, help="TDC alpha for the Psi certificate")
    solve.add_argument("--beta", type=float, default=None, help="TDC beta for the Psi certificate")
    solve.add_argument("--T", type=int, default=100_000, help="Horizon for derived stepsizes")
    solve.add_argument("--delta", type=float, default=0.05)
    solve.add_argument("--accuracy", type=float, default=0.01, help="Target error for the sample-size formulas")
    solve.add_argument("--export", default=None, help="Also write the instance as JSON")

    run = sub.add_parser("run", help="Run a multi-trial experiment from a config file")
    run.add_argument("config")
    run.add_argument("--workers", type=int, default=None, help="Worker processes (default: available CPUs)")
    run.add_argument("--output", default=None, help="Override the output directory")

    rate = sub.add_parser("rate", help="Fit a log-log convergence rate to a summary CSV")
    rate.add_argument("summary")
    rate.add_argument("--window", required=True, help="Checkpoint range a:b")

    gen = sub.add_parser("gen-config", help="Write a preset config")
    gen.add_argument("--preset", required=True, choices=sorted(PRESETS))
    gen.add_argument("--algorithm", default=None)
    gen.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Override a preset key")
    gen.add_argument("--output", default=None, help="File to write (stdout when omitted)")
    return parser


# ------------------------------------------------------------------------------
# Commands
# ------------------------------------------------------------------------------
def _fmt(value) -> str:
    if isinstance(value, np.ndarray):
        return np.array2string(value, precision=6, suppress_small=True, max_line_width=120)
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _resolve_instance(args: argparse.Namespace) -> PolicyEvaluationInstance:
    name = args.instance.lower()
    if name == "minimax":
        try:
            spec = MinimaxSpec(
                n_states=args.states,
                d=args.dim,
                gamma=args.gamma,
                epsilon=args.epsilon,
                signs=args.signs,
                enforce_epsilon_bound=not args.no_epsilon_check,
            )
        except ValidationError as exc:
            raise InstanceError(f"Invalid minimax parameters: {exc}") from exc
        return build_minimax(spec)
    if name == "baird":
        return build_baird()
    return load_instance_file(Path(args.instance))


def cmd_solve(args: argparse.Namespace) -> int:
    instance = _resolve_instance(args)
    mdp = instance.mdp
    out = [
        f"instance: {instance.name}",
        f"states: {mdp.n_states}  actions: {mdp.n_actions}  gamma: {mdp.gamma}  d: {instance.features.dim}",
        f"on_policy: {instance.is_on_policy}",
    ]

    if instance.is_on_policy:
        mrp = induce_mrp(mdp, instance.target)
        geometry = build_geometry(mrp, instance.features)
        on_pop = on_policy_population(mrp, instance.features, geometry)
        constants = on_policy_constants(instance.features, geometry, on_pop, mdp.gamma)
        eta = args.eta if args.eta is not None else 0.5 * (1.0 - mdp.gamma) / (4.0 * geometry.lambda_max_Sigma)
        spectral = spectral_report(on_pop, geometry, mdp.gamma)
        contraction = td_contraction(on_pop, geometry, mdp.gamma, eta)
        theorem1 = plan_stepsizes(StepsizePlan(mode=StepsizeMode.THEOREM1), constants, args.T, args.delta)
        out += [
            f"mu: {_fmt(geometry.mu)}",
            f"Sigma:\n{_fmt(geometry.Sigma)}",
            f"lambda_min(Sigma): {_fmt(geometry.lambda_min_Sigma)}  ||Sigma||: {_fmt(geometry.lambda_max_Sigma)}"
            f"  kappa: {_fmt(geometry.kappa)}",
            f"theta*: {_fmt(on_pop.theta_star)}",
            f"||theta*||_Sigma: {_fmt(constants.theta_star_sigma_norm)}  leverage: {_fmt(constants.leverage)}",
            f"lambda_min(whitened A^T Sigma^-1 A): {_fmt(spectral.normalized_gram_min)}"
            f" (floor {_fmt(spectral.normalized_gram_floor)})  ||Sigma^-1/2 b||: {_fmt(spectral.whitened_b_norm)}",
            f"||I - eta A|| at eta={_fmt(eta)}: {_fmt(contraction.norm)} <= {_fmt(contraction.bound)}"
            f" (eta in range: {contraction.in_range})",
            f"theorem1 eta (T={args.T}, delta={args.delta}): {_fmt(theorem1.eta)}"
            f"  burn-in met: {theorem1.burn_in_satisfied}",
            f"averaged TD samples for error {args.accuracy}: {_fmt(sample_complexity_td(constants, args.accuracy, args.delta))}",
            f"minimax sample threshold for error {args.accuracy}: {_fmt(minimax_sample_threshold(constants, args.accuracy))}",
        ]

    off_pop = off_policy_population(mdp, instance.target, instance.behavior, instance.features, strict=False)
    out += [
        f"mu_b: {_fmt(off_pop.mu_b)}",
        f"identifiable: {off_pop.identifiable}",
        f"theta_tilde*: {_fmt(off_pop.theta_tilde_star)}"
        + ("" if off_pop.identifiable else " (minimum-norm member of a non-unique family)"),
        f"value optimum: {_fmt(off_pop.value_star)}",
        f"lambda1: {_fmt(off_pop.lambda1)}  lambda2: {_fmt(off_pop.lambda2)}  lambda_Sigma: {_fmt(off_pop.lambda_Sigma)}"
        f"  kappa_tilde: {_fmt(off_pop.kappa_tilde)}  rho_max: {_fmt(off_pop.rho_max)}",
    ]
    if off_pop.identifiable:
        constants = off_policy_constants(off_pop)
        if args.alpha is not None and args.beta is not None:
            alpha, beta = args.alpha, args.beta
        else:
            plan = plan_stepsizes(StepsizePlan(mode=StepsizeMode.COROLLARY2), constants, args.T, args.delta)
            alpha, beta = plan.alpha, plan.beta
        certificate = psi_contraction_certificate(off_pop, alpha, beta)
        out += [
            f"Psi certificate (alpha={_fmt(alpha)}, beta={_fmt(beta)}, varkappa={_fmt(certificate.varkappa)}):"
            f" norm={certificate.norm:.12f} bound={certificate.bound:.12f} conditions_met={certificate.conditions_met}",
            f"step conditions: {certificate.step_conditions}",
            f"TDC samples for error {args.accuracy}: {_fmt(sample_complexity_tdc(constants, args.accuracy, args.delta))}",
        ]
    else:
        out.append("Psi certificate: unavailable (Sigma_tilde or A_tilde singular)")

    print("\n".join(out))
    if args.export:
        export_instance(instance, args.export)
        print(f"exported: {args.export}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    result = run_experiment(config, workers=args.workers)
    output = args.output or config.output
    emit(result.traces, result.summary, config, output, manifest=result.manifest)
    last = result.summary.rows[-1]
    print(
        f"{config.algorithm.value}: step {last.step} mean error {last.mean:.6g} "
        f"[{last.lo95:.6g}, {last.hi95:.6g}], diverged {last.diverged}/{result.summary.n_trials}"
    )
    print(f"output: {output}")
    return EXIT_OK


def cmd_rate(args: argparse.Namespace) -> int:
    try:
        window = parse_window(args.window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    fit = fit_rate(load_summary(args.summary), window)
    print(f"slope={fit.slope:.6f} intercept={fit.intercept:.6f} r2={fit.r2:.6f} points={fit.n_points}")
    return EXIT_OK


def cmd_gen_config(args: argparse.Namespace) -> int:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.algorithm:
        overrides["algorithm"] = args.algorithm
    config = preset_config(args.preset, **overrides)
    text = dump_config(config, header=f"tdlab preset {args.preset}")
    if args.output:
        path = Path(args.output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "run": cmd_run,
    "rate": cmd_rate,
    "gen-config": cmd_gen_config,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging("DEBUG" if args.verbose else None)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, RateFitError, ValidationError) as exc:
        logger.error(f"Config error: {exc}")
        return EXIT_CONFIG
    except InstanceError as exc:
        logger.error(f"Instance error: {exc}")
        return EXIT_INSTANCE
    except OSError as exc:
        logger.error(f"I/O error: {exc}")
        return EXIT_IO
    except (TdLabError, ValueError) as exc:
        logger.error(f"Error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
