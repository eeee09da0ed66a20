# SPDX-License-Identifier: MIT-0
"""Command-line entry point.

Payloads (CSV, JSON or SVG) go to stdout or ``--out``; logs go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from aws_lambda_powertools import Logger

from cbfe_aif import __version__
from cbfe_aif.config.constants import SERVICE_NAME
from cbfe_aif.errors import InferenceFailure
from cbfe_aif.experiments import (
    ExperimentConfig,
    cmd_bandit,
    cmd_decompose,
    cmd_grid,
    cmd_landscape,
    cmd_model,
    cmd_trial,
    cmd_verify,
)
from cbfe_aif.objectives import Objective, RestartMode

OBJECTIVES = [objective.value for objective in Objective]
RESTART_MODES = [mode.value for mode in RestartMode]


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--format", choices=["csv", "json", "svg"], default="csv")
    parser.add_argument("--out", type=Path, default=None, help="directory for output files (default: stdout)")
    parser.add_argument("--profile", default=None, help="experiment config profile (default: $CBFE_AIF_PROFILE)")
    parser.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _scenario(parser: argparse.ArgumentParser, objective: bool = True):
    if objective:
        parser.add_argument("--objective", choices=OBJECTIVES, default=Objective.CBFE.value)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--c", type=float, default=None)
    parser.add_argument("--horizon", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbfe-aif", description="Constrained Bethe free energy planning on discrete factor graphs"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    bandit = commands.add_parser("bandit", help="free energies of the two-armed bandit policies")
    _common(bandit)

    grid = commands.add_parser("grid", help="minimized free energy of every T-maze policy")
    _scenario(grid)
    grid.add_argument("--restart-mode", choices=RESTART_MODES, default=RestartMode.EXHAUSTIVE.value)
    _common(grid)

    decompose = commands.add_parser("decompose", help="opportunity, risk and extrinsic value grids")
    _scenario(decompose, objective=False)
    decompose.add_argument("--restart-mode", choices=RESTART_MODES, default=RestartMode.EXHAUSTIVE.value)
    _common(decompose)

    landscape = commands.add_parser("landscape", help="average reward over an (alpha, c) grid")
    landscape.add_argument("--objective", choices=OBJECTIVES, default=Objective.CBFE.value)
    for axis in ("alpha", "c"):
        landscape.add_argument(f"--{axis}-min", type=float, default=None)
        landscape.add_argument(f"--{axis}-max", type=float, default=None)
        landscape.add_argument(f"--{axis}-steps", type=int, default=None)
    landscape.add_argument("--horizon", type=int, default=None)
    landscape.add_argument("--moves", type=int, default=None)
    landscape.add_argument("--runs", type=int, default=None)
    landscape.add_argument("--seed", type=int, default=None)
    landscape.add_argument("--reward-arm", type=int, choices=[2, 3], default=None)
    landscape.add_argument("--restart-mode", choices=RESTART_MODES, default=None)
    _common(landscape)

    trial = commands.add_parser("trial", help="one interactive T-maze trial")
    _scenario(trial)
    trial.add_argument("--moves", type=int, default=None)
    trial.add_argument("--seed", type=int, default=None)
    trial.add_argument("--reward-arm", type=int, choices=[2, 3], default=None)
    trial.add_argument("--restart-mode", choices=RESTART_MODES, default=None)
    _common(trial)

    model = commands.add_parser("model", help="dump the T-maze generative model")
    _scenario(model, objective=False)
    _common(model)

    verify = commands.add_parser("verify", help="check message passing against exhaustive enumeration")
    verify.add_argument("--horizon", type=int, default=None)
    verify.add_argument(
        "--perturbation", type=float, default=0.0, help="distort the observation matrix (the checks must then fail)"
    )
    _common(verify)
    return parser


def _pick(value, fallback):
    return fallback if value is None else value


def _run(args: argparse.Namespace, config: ExperimentConfig):
    alpha = _pick(getattr(args, "alpha", None), config.alpha)
    c = _pick(getattr(args, "c", None), config.c)
    horizon = _pick(getattr(args, "horizon", None), config.horizon)
    restart_mode = _pick(getattr(args, "restart_mode", None), config.restart_mode)

    if args.command == "bandit":
        return cmd_bandit()
    if args.command == "grid":
        return cmd_grid(Objective(args.objective), alpha, c, horizon, RestartMode(restart_mode), config.max_iters)
    if args.command == "decompose":
        return cmd_decompose(alpha, c, horizon, RestartMode(restart_mode), config.max_iters)
    if args.command == "model":
        return cmd_model(alpha, c, horizon)
    if args.command == "verify":
        return cmd_verify(args.perturbation, horizon)

    moves = _pick(args.moves, config.moves)
    seed = _pick(args.seed, config.seed)
    reward_arm = _pick(args.reward_arm, config.reward_arm)
    if args.command == "trial":
        return cmd_trial(
            Objective(args.objective), alpha, c, reward_arm, horizon, moves, seed, RestartMode(restart_mode)
        )

    steps = {
        "alpha_steps": _pick(args.alpha_steps, config.alpha_steps),
        "c_steps": _pick(args.c_steps, config.c_steps),
        "runs": _pick(args.runs, config.runs),
    }
    if min(steps.values()) < 1:
        raise InferenceFailure.usage(steps)
    return cmd_landscape(
        Objective(args.objective),
        _pick(args.alpha_min, config.alpha_min),
        _pick(args.alpha_max, config.alpha_max),
        steps["alpha_steps"],
        _pick(args.c_min, config.c_min),
        _pick(args.c_max, config.c_max),
        steps["c_steps"],
        runs=steps["runs"],
        seed=seed,
        reward_arm=reward_arm,
        horizon=horizon,
        moves=moves,
        restart_mode=RestartMode(restart_mode),
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = args.log_level or os.getenv("POWERTOOLS_LOG_LEVEL", "WARNING")
    logger = Logger(service=SERVICE_NAME, level=level, logger_handler=logging.StreamHandler(sys.stderr))
    logger.setLevel(level)

    try:
        config = ExperimentConfig().load_for_profile(args.profile)
        output = _run(args, config)
        output.write(args.format, args.out)
    except InferenceFailure as failure:
        logger.error(str(failure), extra={"failure": failure.to_dict()})
        return failure.exit_code

    if not output.passed:
        failed = [check["name"] for check in output.payload["checks"] if not check["passed"]]
        logger.error("Verification failed", extra={"failed": failed})
        return InferenceFailure.verification_failed().exit_code
    return 0
