# SPDX-License-Identifier: MIT-0
"""Experiment commands: bandit table, policy grids, value decompositions,
reward landscapes, single trials and the verification suite."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import joblib
import numpy as np
import pandas as pd
import simplejson as json
from aws_lambda_powertools import Logger
from yamldataclassconfig import create_file_path_field

from cbfe_aif import __version__
from cbfe_aif.agent import AgentConfig, candidate_policies, run_landscape, run_trial
from cbfe_aif.config.config_mux import ProfileYamlDataClassConfig
from cbfe_aif.config.constants import (
    CSV_FLOAT_FORMAT,
    DEFAULT_MAX_ITERS,
    SERVICE_NAME,
    THREADS_ENV_VAR,
    TIE_TOLERANCE,
)
from cbfe_aif.heatmap import render_heatmap
from cbfe_aif.objectives import (
    Objective,
    RestartMode,
    cbfe_decompose,
    evaluate,
    optimize_bfe,
    optimize_cbfe,
)
from cbfe_aif.tmaze import Policy, build_bandit_model, build_tmaze_model
from cbfe_aif.verify import run_verification

logger = Logger(service=SERVICE_NAME, child=True)

MOVE_LABELS = ("1", "2", "3", "4")
BANDIT_SIGN_NOTE = (
    "The ignorant policy's CBFE is -log2 p(y=0|u=0) = +1 bit; "
    "tabulations printing -1 for this cell carry a sign error."
)
LANDSCAPE_NOTE = (
    "At a known reward arm the CBFE agent keeps the cue while c < -ln(alpha) and the EFE agent exploits for any c > 0, "
    "so low-utility cells score zero for CBFE rather than for EFE."
)


@dataclass
class ExperimentConfig(ProfileYamlDataClassConfig):
    """
    Experiment Config Dataclass
    maps experiment-config.yml of the selected profile to the default command parameters
    """

    alpha: float = 0.9
    c: float = 2.0
    horizon: int = 2
    moves: int = 2
    runs: int = 10
    seed: int = 0
    reward_arm: int = 3
    max_iters: int = DEFAULT_MAX_ITERS
    restart_mode: str = "mode"
    alpha_min: float = 0.5
    alpha_max: float = 1.0
    alpha_steps: int = 10
    c_min: float = 0.0
    c_max: float = 2.0
    c_steps: int = 10

    FILE_PATH: Path = create_file_path_field("experiment-config.yml", path_is_absolute=True)


@dataclass
class ExperimentOutput:
    command: str
    parameters: dict
    payload: dict
    seed: Optional[int] = None
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    figures: Dict[str, str] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    passed: bool = True
    version: str = __version__

    def metadata(self) -> dict:
        return {"command": self.command, "parameters": self.parameters, "seed": self.seed, "version": self.version}

    def to_json(self) -> str:
        document = {"metadata": self.metadata(), "payload": self.payload, "notes": self.notes}
        return json.dumps(document, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> Dict[str, str]:
        rendered = {}
        for name, frame in self.tables.items():
            text = frame.to_csv(float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
            rendered[name] = text + "".join(f"# {note}\n" for note in self.notes)
        return rendered

    def write(self, fmt: str, out_dir: Optional[Path] = None, stream: Optional[TextIO] = None) -> List[Path]:
        """Write the output in ``fmt``; files go to ``out_dir`` when given, otherwise to ``stream``."""
        if fmt == "json":
            documents = {"report": self.to_json()}
            suffix = "json"
        elif fmt == "csv":
            documents = self.to_csv() or {"report": self.to_json()}
            suffix = "csv" if self.tables else "json"
        else:
            documents = self.figures or {"report": self.to_json()}
            suffix = "svg" if self.figures else "json"

        if out_dir is None:
            stream = stream or sys.stdout
            for name, text in documents.items():
                if len(documents) > 1:
                    stream.write(f"# {name}\n")
                stream.write(text)
            return []
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in documents.items():
            path = out_dir / f"{self.command}_{name}.{suffix}"
            path.write_text(text)
            written.append(path)
        logger.info(f"Wrote {len(written)} file(s) to {out_dir}")
        return written


def resolve_threads() -> int:
    available = joblib.cpu_count()
    cap = os.getenv(THREADS_ENV_VAR)
    if cap:
        try:
            return max(1, min(int(cap), available))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV_VAR}={cap}")
    return available


def _policy_frame(values: np.ndarray, horizon: int) -> pd.DataFrame:
    if horizon == 2:
        return pd.DataFrame(
            values.reshape(4, 4),
            index=pd.Index(MOVE_LABELS, name="first move"),
            columns=pd.Index(MOVE_LABELS, name="second move"),
        )
    policies = candidate_policies(4, horizon)
    return pd.DataFrame(
        {"value": values.reshape(-1)}, index=pd.Index(["-".join(map(str, p.moves())) for p in policies], name="policy")
    )


def _optimal_cells(values: np.ndarray, maximize: bool = False) -> List[Tuple[int, ...]]:
    scores = -values if maximize else values
    finite = scores[np.isfinite(scores)]
    if not finite.size:
        return []
    return [tuple(int(i) for i in idx) for idx in np.argwhere(scores <= finite.min() + TIE_TOLERANCE)]


def _moves(cell: Sequence[int]) -> List[int]:
    return [i + 1 for i in cell]


def _grid_figure(values, horizon, title, marked) -> Dict[str, str]:
    if horizon != 2:
        return {}
    return {
        "heatmap": render_heatmap(
            values, MOVE_LABELS, MOVE_LABELS, title, marked, row_title="first move", col_title="second move"
        )
    }


def cmd_bandit() -> ExperimentOutput:
    spec = build_bandit_model()
    rows = {}
    for u, name in ((0, "ignorant (u=0)"), (1, "informative (u=1)")):
        policy = Policy((u,))
        bfe = optimize_bfe(spec, None, policy)
        cbfe = optimize_cbfe(spec, None, policy)
        rows[name] = {"BFE": bfe.value, "CBFE": cbfe.value, "predicted_outcome": cbfe.optimal_outcomes[0]}
    table = pd.DataFrame.from_dict(rows, orient="index")[["BFE", "CBFE"]]
    table.index.name = "policy"
    return ExperimentOutput(
        command="bandit",
        parameters={},
        payload={"table": rows, "units": "bits"},
        tables={"table": table},
        notes=[BANDIT_SIGN_NOTE],
    )


def cmd_grid(
    objective: Objective,
    alpha: float,
    c: float,
    horizon: int = 2,
    restart_mode: RestartMode = RestartMode.EXHAUSTIVE,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> ExperimentOutput:
    objective = Objective(objective)
    spec = build_tmaze_model(alpha, c, horizon)
    policies = candidate_policies(spec.num_controls, horizon)
    reports = [evaluate(objective, spec, spec.d0, policy, restart_mode, max_iters) for policy in policies]
    values = np.array([report.value for report in reports]).reshape((spec.num_controls,) * horizon)
    argmin = _optimal_cells(values)
    unconverged = [p.moves() for p, r in zip(policies, reports) if not r.converged]
    if unconverged:
        logger.warning("Some policies did not converge", extra={"policies": unconverged})
    title = f"{objective.value.upper()} (bits), alpha={alpha:g}, c={c:g}"
    return ExperimentOutput(
        command="grid",
        parameters={"objective": objective.value, "alpha": alpha, "c": c, "horizon": horizon,
                    "restart_mode": RestartMode(restart_mode).value},
        payload={
            "values": values.tolist(),
            "argmin": [_moves(cell) for cell in argmin],
            "reports": [dict(report.to_dict(), policy=list(p.moves())) for p, report in zip(policies, reports)],
        },
        tables={"grid": _policy_frame(values, horizon)},
        figures=_grid_figure(values, horizon, title, argmin),
    )


def cmd_decompose(
    alpha: float,
    c: float,
    horizon: int = 2,
    restart_mode: RestartMode = RestartMode.EXHAUSTIVE,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> ExperimentOutput:
    spec = build_tmaze_model(alpha, c, horizon)
    policies = candidate_policies(spec.num_controls, horizon)
    terms = []
    for policy in policies:
        report = optimize_cbfe(spec, spec.d0, policy, restart_mode, max_iters)
        terms.append(cbfe_decompose(spec, spec.d0, policy, report.beliefs, report.optimal_outcomes))
    shape = (spec.num_controls,) * horizon

    def grid(name):
        return np.array([getattr(t, name) for t in terms]).reshape(shape)

    matrices = {
        "opportunity": (grid("opportunity"), True),
        "risk": (grid("risk"), False),
        "extrinsic": (grid("extrinsic_value"), True),
    }
    optimal = {name: _optimal_cells(values, maximize) for name, (values, maximize) in matrices.items()}
    return ExperimentOutput(
        command="decompose",
        parameters={"alpha": alpha, "c": c, "horizon": horizon, "restart_mode": RestartMode(restart_mode).value},
        payload={
            **{name: values.tolist() for name, (values, _) in matrices.items()},
            "optimal": {name: [_moves(cell) for cell in cells] for name, cells in optimal.items()},
            "terms": [dict(t.to_dict(), policy=list(p.moves())) for p, t in zip(policies, terms)],
        },
        tables={name: _policy_frame(values, horizon) for name, (values, _) in matrices.items()},
        figures={
            name: figure
            for name, (values, _) in matrices.items()
            for figure in _grid_figure(
                values, horizon, f"{name} (bits), alpha={alpha:g}, c={c:g}", optimal[name]
            ).values()
        },
    )


def cmd_landscape(
    objective: Objective,
    alpha_min: float,
    alpha_max: float,
    alpha_steps: int,
    c_min: float,
    c_max: float,
    c_steps: int,
    runs: int = 10,
    seed: int = 0,
    reward_arm: int = 3,
    horizon: int = 2,
    moves: int = 2,
    restart_mode: RestartMode = RestartMode.MODE,
    n_jobs: Optional[int] = None,
) -> ExperimentOutput:
    config = AgentConfig(objective, horizon, restart_mode, tie_break_seed=seed)
    alphas = np.linspace(alpha_min, alpha_max, alpha_steps)
    cs = np.linspace(c_min, c_max, c_steps)
    result = run_landscape(config, alphas, cs, runs, reward_arm, seed, moves, n_jobs or resolve_threads())
    trajectories = [
        ["-".join(map(str, result.dominant_trajectory(i, j))) for j in range(len(cs))] for i in range(len(alphas))
    ]
    row_labels = [f"{a:.3f}" for a in result.alphas]
    col_labels = [f"{c:.3f}" for c in result.cs]
    table = pd.DataFrame(
        result.rewards, index=pd.Index(row_labels, name="alpha"), columns=pd.Index(col_labels, name="c")
    )
    zero = [(i, j) for i, j in np.argwhere(result.rewards == 0.0)]
    logger.info(
        f"Landscape finished with {result.zero_cells} zero-reward cells", extra={"objective": config.objective.value}
    )
    return ExperimentOutput(
        command="landscape",
        seed=seed,
        parameters={
            "objective": config.objective.value,
            "alpha_min": alpha_min, "alpha_max": alpha_max, "alpha_steps": alpha_steps,
            "c_min": c_min, "c_max": c_max, "c_steps": c_steps,
            "runs": runs, "reward_arm": reward_arm, "horizon": horizon, "moves": moves,
            "restart_mode": config.restart_mode.value,
        },
        payload={
            "alphas": list(result.alphas),
            "cs": list(result.cs),
            "rewards": result.rewards.tolist(),
            "zero_cells": result.zero_cells,
            "dominant_trajectories": trajectories,
        },
        tables={"rewards": table},
        figures={
            "heatmap": render_heatmap(
                result.rewards,
                row_labels,
                col_labels,
                f"Average reward, {config.objective.value.upper()} agent",
                zero,
                row_title="alpha",
                col_title="c",
                fmt="{:.2f}",
                footnote=f"zero-reward cells: {result.zero_cells}",
            )
        },
        notes=[LANDSCAPE_NOTE],
    )


def cmd_trial(
    objective: Objective,
    alpha: float,
    c: float,
    reward_arm: int = 3,
    horizon: int = 2,
    moves: int = 2,
    seed: int = 0,
    restart_mode: RestartMode = RestartMode.MODE,
) -> ExperimentOutput:
    config = AgentConfig(objective, horizon, restart_mode, tie_break_seed=seed)
    trajectory = run_trial(config, alpha, c, reward_arm, moves, seed)
    steps = pd.DataFrame(
        [
            {"time": s.time, "policy": "-".join(map(str, s.policy.moves())), "action": s.control + 1,
             "observation": s.observation}
            for s in trajectory.steps
        ]
    ).set_index("time")
    return ExperimentOutput(
        command="trial",
        seed=seed,
        parameters={"objective": config.objective.value, "alpha": alpha, "c": c, "reward_arm": reward_arm,
                    "horizon": horizon, "moves": moves, "restart_mode": config.restart_mode.value},
        payload=trajectory.to_dict(),
        tables={"steps": steps},
    )


def cmd_model(alpha: float, c: float, horizon: int = 2) -> ExperimentOutput:
    spec = build_tmaze_model(alpha, c, horizon)
    return ExperimentOutput(
        command="model", parameters={"alpha": alpha, "c": c, "horizon": horizon}, payload=spec.to_dict()
    )


def cmd_verify(perturbation: float = 0.0, horizon: int = 2) -> ExperimentOutput:
    report = run_verification(horizon=horizon, perturbation=perturbation)
    summary = pd.DataFrame(
        [
            {"check": check.name, "passed": check.passed, "cases": check.cases, "max_deviation": check.max_deviation}
            for check in report.checks
        ]
    ).set_index("check")
    return ExperimentOutput(
        command="verify",
        parameters={"perturbation": perturbation, "horizon": horizon, "tolerance": report.tolerance},
        payload=report.to_dict(),
        tables={"summary": summary},
        passed=report.passed,
    )
