# SPDX-License-Identifier: MIT-0
"""Interaction loop of the active-inference agent: plan, act, execute, observe, slide."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from aws_lambda_powertools import Logger
from joblib import Parallel, delayed

from cbfe_aif.config.constants import DEFAULT_MAX_ITERS, SERVICE_NAME, TIE_TOLERANCE
from cbfe_aif.dist import Categorical
from cbfe_aif.errors import InferenceFailure
from cbfe_aif.objectives import FreeEnergyReport, Objective, RestartMode, evaluate
from cbfe_aif.tmaze import IndexCodec, ModelSpec, Policy, TMazeEnv, build_tmaze_model

logger = Logger(service=SERVICE_NAME, child=True)


@dataclass(frozen=True)
class AgentConfig:
    objective: Objective = Objective.CBFE
    horizon: int = 2
    restart_mode: RestartMode = RestartMode.MODE
    tie_break_seed: int = 0
    max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "restart_mode", RestartMode(self.restart_mode))
        if self.horizon < 1:
            raise InferenceFailure.invalid_policy({"horizon": self.horizon})


@dataclass(frozen=True, eq=False)
class AgentState:
    prior: Categorical
    time: int = 1


@dataclass(frozen=True, eq=False)
class StepRecord:
    time: int
    policy: Policy
    control: int
    observation: int
    grid: Tuple[FreeEnergyReport, ...]

    def values(self, num_controls: int) -> np.ndarray:
        horizon = len(self.policy)
        return np.array([report.value for report in self.grid]).reshape((num_controls,) * horizon)

    def to_dict(self, num_controls: int) -> dict:
        return {
            "time": self.time,
            "policy": list(self.policy.moves()),
            "action": self.control + 1,
            "observation": self.observation,
            "observation_label": IndexCodec.observation_label(self.observation),
            "grid": self.values(num_controls).tolist(),
            "optimal_outcomes": [
                None if report.optimal_outcomes is None else list(report.optimal_outcomes) for report in self.grid
            ],
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    steps: Tuple[StepRecord, ...]
    expected_reward: float
    reward_arm: int
    alpha: float
    c: float
    objective: Objective
    num_controls: int = 4

    def __len__(self):
        return len(self.steps)

    @property
    def moves(self) -> Tuple[int, ...]:
        return tuple(step.control + 1 for step in self.steps)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective.value,
            "alpha": self.alpha,
            "c": self.c,
            "reward_arm": self.reward_arm,
            "actions": list(self.moves),
            "observations": [step.observation for step in self.steps],
            "observation_labels": [IndexCodec.observation_label(step.observation) for step in self.steps],
            "steps": [step.to_dict(self.num_controls) for step in self.steps],
            "expected_reward": self.expected_reward,
        }


def candidate_policies(num_controls: int, horizon: int) -> Tuple[Policy, ...]:
    return tuple(Policy(controls) for controls in itertools.product(range(num_controls), repeat=horizon))


class PlanCache:
    """Policy grids keyed by planning time and prior, shared by the trials of one landscape cell."""

    def __init__(self):
        self._grids: Dict[Tuple[int, bytes], Tuple[FreeEnergyReport, ...]] = {}

    def get(self, state: AgentState):
        return self._grids.get((state.time, state.prior.probs.tobytes()))

    def put(self, state: AgentState, grid):
        self._grids[(state.time, state.prior.probs.tobytes())] = grid


def evaluate_policies(state: AgentState, spec: ModelSpec, config: AgentConfig) -> Tuple[FreeEnergyReport, ...]:
    window = spec.at_time(state.time) if spec.start_time != state.time else spec
    return tuple(
        evaluate(config.objective, window, state.prior, policy, config.restart_mode, config.max_iters)
        for policy in candidate_policies(window.num_controls, config.horizon)
    )


def plan(
    state: AgentState,
    spec: ModelSpec,
    config: AgentConfig,
    rng: Optional[np.random.Generator] = None,
    cache: Optional[PlanCache] = None,
) -> Tuple[Policy, Tuple[FreeEnergyReport, ...]]:
    """Evaluate every candidate policy and return the minimizer with the full grid.

    Policies within ``TIE_TOLERANCE`` of the minimum are tied and one of
    them is drawn uniformly with ``rng``.
    """
    rng = rng if rng is not None else np.random.default_rng(config.tie_break_seed)
    grid = cache.get(state) if cache is not None else None
    if grid is None:
        grid = evaluate_policies(state, spec, config)
        if cache is not None:
            cache.put(state, grid)

    policies = candidate_policies(spec.num_controls, config.horizon)
    values = np.array([report.value for report in grid])
    finite = values[np.isfinite(values)]
    if finite.size:
        tied = np.flatnonzero(np.isfinite(values) & (values <= finite.min() + TIE_TOLERANCE))
    else:
        tied = np.arange(values.size)
    choice = int(tied[0]) if tied.size == 1 else int(rng.choice(tied))
    return policies[choice], grid


def act(policy: Policy) -> int:
    return policy.controls[0]


def slide(state: AgentState, spec: ModelSpec, control: int, observation: int) -> AgentState:
    """Exact filtering step: new prior proportional to A[y, :] times B_u applied to the old prior."""
    if not 0 <= control < spec.num_controls or not 0 <= observation < spec.num_observations:
        raise InferenceFailure.invalid_index({"control": control, "observation": observation})
    predicted = spec.B[control].entries @ state.prior.probs
    posterior = spec.A.entries[observation, :] * predicted
    total = posterior.sum()
    if total <= 0.0:
        raise InferenceFailure.inconsistent_beliefs({"control": control, "observation": observation})
    return AgentState(Categorical(posterior / total), state.time + 1)


def run_trial(
    config: AgentConfig,
    alpha: float,
    c: float,
    reward_arm: int,
    moves: int = 2,
    seed: int = 0,
    cache: Optional[PlanCache] = None,
) -> Trajectory:
    if moves < 1:
        raise InferenceFailure.invalid_policy({"moves": moves})
    spec = build_tmaze_model(alpha, c, config.horizon, start_time=1, goal_span=moves + config.horizon - 1)
    env = TMazeEnv(reward_arm=reward_arm, alpha=alpha, rng_seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence([config.tie_break_seed, seed]))
    state = AgentState(spec.d0, 1)

    steps: List[StepRecord] = []
    for _ in range(moves):
        policy, grid = plan(state, spec, config, rng, cache)
        control = act(policy)
        env.execute(control + 1)
        observation = env.observe()
        steps.append(StepRecord(state.time, policy, control, observation, grid))
        state = slide(state, spec, control, observation)

    trajectory = Trajectory(tuple(steps), env.expected_reward(), reward_arm, alpha, c, config.objective)
    logger.debug(
        "Trial finished",
        extra={"objective": config.objective.value, "moves": trajectory.moves, "reward": trajectory.expected_reward},
    )
    return trajectory


@dataclass(frozen=True, eq=False)
class LandscapeResult:
    alphas: Tuple[float, ...]
    cs: Tuple[float, ...]
    rewards: np.ndarray
    trajectories: Tuple[Tuple[Tuple[int, ...], ...], ...] = field(repr=False)
    objective: Objective = Objective.CBFE

    @property
    def zero_cells(self) -> int:
        return int(np.count_nonzero(self.rewards == 0.0))

    def dominant_trajectory(self, i: int, j: int) -> Tuple[int, ...]:
        return Counter(self.trajectories[i * len(self.cs) + j]).most_common(1)[0][0]


def _cell_seed(seed: int, i: int, j: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, i, j, run]).generate_state(1)[0])


def run_cell(config, alpha, c, runs, reward_arm, moves, seed, i, j):
    """Seeded trials of landscape cell (i, j); the seeds depend on the cell position, not its values."""
    cache = PlanCache()
    trials = [
        run_trial(config, alpha, c, reward_arm, moves, _cell_seed(seed, i, j, run), cache) for run in range(runs)
    ]
    reward = float(np.mean([t.expected_reward for t in trials]))
    logger.debug(f"Cell ({i}, {j}) done", extra={"alpha": alpha, "c": c, "reward": reward})
    return reward, tuple(t.moves for t in trials)


def run_landscape(
    config: AgentConfig,
    alpha_grid: Sequence[float],
    c_grid: Sequence[float],
    runs_per_cell: int = 10,
    reward_arm: int = 3,
    seed: int = 0,
    moves: int = 2,
    n_jobs: int = 1,
) -> LandscapeResult:
    """Average expected reward over seeded trials for every (alpha, c) cell."""
    alphas, cs = tuple(float(a) for a in alpha_grid), tuple(float(c) for c in c_grid)
    if not alphas or not cs or runs_per_cell < 1:
        raise InferenceFailure.invalid_policy({"alphas": len(alphas), "cs": len(cs), "runs": runs_per_cell})
    cells = [(i, j) for i in range(len(alphas)) for j in range(len(cs))]
    logger.info(
        f"Running {len(cells)} landscape cells",
        extra={"objective": config.objective.value, "runs": runs_per_cell, "n_jobs": n_jobs},
    )
    results = Parallel(n_jobs=n_jobs)(
        delayed(run_cell)(config, alphas[i], cs[j], runs_per_cell, reward_arm, moves, seed, i, j) for i, j in cells
    )
    rewards = np.array([reward for reward, _ in results]).reshape(len(alphas), len(cs))
    return LandscapeResult(alphas, cs, rewards, tuple(t for _, t in results), config.objective)
