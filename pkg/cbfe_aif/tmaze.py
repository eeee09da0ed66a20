# SPDX-License-Identifier: MIT-0
"""T-maze generative model, two-armed bandit model and the simulated T-maze.

Positions are 1 (start), 2 and 3 (reward arms) and 4 (cue). States and
observations are indexed position-major::

    state       s = 2 * (pos - 1) + (reward_arm - 2)
    observation o = 4 * (pos - 1) + (outcome - 1)

with outcomes 1 (cue indicates arm 2), 2 (cue indicates arm 3),
3 (reward obtained) and 4 (reward not obtained).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import simplejson as json
from aws_lambda_powertools import Logger

from cbfe_aif.config.constants import SERVICE_NAME
from cbfe_aif.dist import Categorical, StochasticMatrix, direct_sum, kronecker, softmax
from cbfe_aif.errors import InferenceFailure

logger = Logger(service=SERVICE_NAME, child=True)

NUM_POSITIONS = 4
NUM_OUTCOMES = 4
START_POSITION = 1
CUE_POSITION = 4
REWARD_ARMS = (2, 3)

CUE_LEFT, CUE_RIGHT, REWARD_OBTAINED, REWARD_NOT_OBTAINED = 1, 2, 3, 4

OUTCOME_LABELS = {
    CUE_LEFT: "cue indicates arm 2",
    CUE_RIGHT: "cue indicates arm 3",
    REWARD_OBTAINED: "reward obtained",
    REWARD_NOT_OBTAINED: "reward not obtained",
}


@dataclass(frozen=True)
class Policy:
    """Sequence of control indices, one per planning step."""

    controls: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(int(u) for u in self.controls))
        if not self.controls:
            raise InferenceFailure.invalid_policy({"controls": ()})

    def __len__(self):
        return len(self.controls)

    def moves(self) -> Tuple[int, ...]:
        return tuple(u + 1 for u in self.controls)


def policy_from_moves(*moves: int) -> Policy:
    return Policy(tuple(m - 1 for m in moves))


class IndexCodec:
    @staticmethod
    def state_index(pos: int, reward_arm: int) -> int:
        if pos not in range(1, NUM_POSITIONS + 1) or reward_arm not in REWARD_ARMS:
            raise InferenceFailure.invalid_index({"pos": pos, "reward_arm": reward_arm})
        return 2 * (pos - 1) + (reward_arm - 2)

    @staticmethod
    def decode_state(s: int) -> Tuple[int, int]:
        if s not in range(2 * NUM_POSITIONS):
            raise InferenceFailure.invalid_index({"state": s})
        return s // 2 + 1, s % 2 + 2

    @staticmethod
    def observation_index(pos: int, outcome: int) -> int:
        if pos not in range(1, NUM_POSITIONS + 1) or outcome not in range(1, NUM_OUTCOMES + 1):
            raise InferenceFailure.invalid_index({"pos": pos, "outcome": outcome})
        return NUM_OUTCOMES * (pos - 1) + (outcome - 1)

    @staticmethod
    def decode_observation(o: int) -> Tuple[int, int]:
        if o not in range(NUM_POSITIONS * NUM_OUTCOMES):
            raise InferenceFailure.invalid_index({"observation": o})
        return o // NUM_OUTCOMES + 1, o % NUM_OUTCOMES + 1

    @classmethod
    def state_label(cls, s: int) -> str:
        pos, arm = cls.decode_state(s)
        return f"position {pos}, reward in arm {arm}"

    @classmethod
    def observation_label(cls, o: int) -> str:
        pos, outcome = cls.decode_observation(o)
        return f"position {pos}: {OUTCOME_LABELS[outcome]}"


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Discrete generative model with goal priors indexed by absolute time."""

    A: StochasticMatrix
    B: Tuple[StochasticMatrix, ...]
    d0: Categorical
    goals: Mapping[int, Categorical]
    horizon: int
    alpha: float = float("nan")
    c: float = float("nan")
    start_time: int = 1

    def __post_init__(self):
        object.__setattr__(self, "B", tuple(self.B))
        object.__setattr__(self, "goals", dict(self.goals))
        if self.horizon < 1:
            raise InferenceFailure.invalid_model({"horizon": self.horizon})
        n = self.d0.size
        if self.A.cols != n:
            raise InferenceFailure.invalid_model({"A_cols": self.A.cols, "states": n})
        for u, b in enumerate(self.B):
            if b.shape != (n, n):
                raise InferenceFailure.invalid_model({"control": u, "B_shape": b.shape, "states": n})
        for k, goal in self.goals.items():
            if goal.size != self.A.rows:
                raise InferenceFailure.invalid_model({"goal_time": k, "goal_size": goal.size})
        missing = [k for k in self.window() if k not in self.goals]
        if missing:
            raise InferenceFailure.invalid_model({"missing_goal_times": missing})

    @property
    def num_states(self) -> int:
        return self.d0.size

    @property
    def num_observations(self) -> int:
        return self.A.rows

    @property
    def num_controls(self) -> int:
        return len(self.B)

    def window(self) -> range:
        return range(self.start_time, self.start_time + self.horizon)

    def goal(self, k: int) -> Categorical:
        if k not in self.goals:
            raise InferenceFailure.invalid_model({"missing_goal_times": [k]})
        return self.goals[k]

    def step_goals(self) -> Tuple[Categorical, ...]:
        """Goal priors of the current planning window, first step first."""
        return tuple(self.goal(k) for k in self.window())

    def at_time(self, t: int) -> "ModelSpec":
        return replace(self, start_time=t)

    def to_dict(self) -> dict:
        return {
            "A": self.A.entries.tolist(),
            "B": [b.entries.tolist() for b in self.B],
            "d0": self.d0.probs.tolist(),
            "goals": {str(k): g.probs.tolist() for k, g in sorted(self.goals.items())},
            "horizon": self.horizon,
            "alpha": self.alpha,
            "c": self.c,
            "start_time": self.start_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, document: dict) -> "ModelSpec":
        return cls(
            A=StochasticMatrix(document["A"]),
            B=tuple(StochasticMatrix(b) for b in document["B"]),
            d0=Categorical(document["d0"]),
            goals={int(k): Categorical(v) for k, v in document["goals"].items()},
            horizon=document["horizon"],
            alpha=document["alpha"],
            c=document["c"],
            start_time=document.get("start_time", 1),
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class BanditSpec:
    """Single observation factor ``A[y, u]`` with a clamped control and no goal prior."""

    A: StochasticMatrix
    horizon: int = 1

    @property
    def num_controls(self) -> int:
        return self.A.cols

    @property
    def num_observations(self) -> int:
        return self.A.rows

    def to_dict(self) -> dict:
        return {"A": self.A.entries.tolist(), "horizon": self.horizon}


def target_position(pos: int, move: int) -> int:
    """Arms are absorbing, every other position moves to the chosen target."""
    if move not in range(1, NUM_POSITIONS + 1):
        raise InferenceFailure.invalid_index({"move": move})
    return pos if pos in REWARD_ARMS else move


def _position_transition(move: int) -> np.ndarray:
    matrix = np.zeros((NUM_POSITIONS, NUM_POSITIONS))
    for pos in range(1, NUM_POSITIONS + 1):
        matrix[target_position(pos, move) - 1, pos - 1] = 1.0
    return matrix


def _observation_blocks(alpha: float):
    a = alpha
    start = [[0.5, 0.5], [0.5, 0.5], [0.0, 0.0], [0.0, 0.0]]
    arm_2 = [[0.0, 0.0], [0.0, 0.0], [a, 1 - a], [1 - a, a]]
    arm_3 = [[0.0, 0.0], [0.0, 0.0], [1 - a, a], [a, 1 - a]]
    cue = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]
    return [np.array(block) for block in (start, arm_2, arm_3, cue)]


def goal_vector(c: float, flat: bool = False) -> Categorical:
    if flat:
        return Categorical(kronecker(Categorical.uniform(NUM_POSITIONS), Categorical.uniform(NUM_OUTCOMES)))
    return softmax(kronecker(np.ones(NUM_POSITIONS), np.array([0.0, 0.0, c, -c])))


def build_tmaze_model(
    alpha: float, c: float, horizon: int = 2, start_time: int = 1, goal_span: Optional[int] = None
) -> ModelSpec:
    """Build the T-maze model.

    Parameters:
        alpha: reward probability of the rewarded arm
        c: reward utility
        horizon: planning horizon T
        start_time: absolute time of the first planning step
        goal_span: number of goal priors to generate from ``start_time``
            (defaults to ``horizon``); trials need ``moves + horizon - 1``

    Returns:
        ModelSpec with the flat goal at absolute time 1
    """
    if not 0.0 <= alpha <= 1.0:
        raise InferenceFailure.invalid_model({"alpha": alpha})
    goal_span = horizon if goal_span is None else goal_span
    goals: Dict[int, Categorical] = {
        k: goal_vector(c, flat=(k == 1)) for k in range(start_time, start_time + goal_span)
    }
    spec = ModelSpec(
        A=StochasticMatrix(direct_sum(_observation_blocks(alpha))),
        B=tuple(
            StochasticMatrix(kronecker(_position_transition(move), np.eye(2)))
            for move in range(1, NUM_POSITIONS + 1)
        ),
        d0=Categorical(kronecker([1.0, 0.0, 0.0, 0.0], [0.5, 0.5])),
        goals=goals,
        horizon=horizon,
        alpha=alpha,
        c=c,
        start_time=start_time,
    )
    logger.debug("Built T-maze model", extra={"alpha": alpha, "c": c, "horizon": horizon, "goal_times": list(goals)})
    return spec


def build_bandit_model() -> BanditSpec:
    return BanditSpec(A=StochasticMatrix([[0.5, 1.0], [0.5, 0.0]]))


@dataclass
class TMazeEnv:
    """Ground-truth T-maze; owned and mutated by a single trial."""

    reward_arm: int
    agent_pos: int = START_POSITION
    alpha: float = 0.9
    rng_seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.reward_arm not in REWARD_ARMS:
            raise InferenceFailure.invalid_index({"reward_arm": self.reward_arm})
        if self.agent_pos not in range(1, NUM_POSITIONS + 1):
            raise InferenceFailure.invalid_index({"agent_pos": self.agent_pos})
        self.rng = np.random.default_rng(self.rng_seed)

    @property
    def state_index(self) -> int:
        return IndexCodec.state_index(self.agent_pos, self.reward_arm)

    def execute(self, move: int) -> "TMazeEnv":
        self.agent_pos = target_position(self.agent_pos, move)
        return self

    def observe(self) -> int:
        block = _observation_blocks(self.alpha)[self.agent_pos - 1]
        column = block[:, self.reward_arm - 2]
        support = np.flatnonzero(column)
        if support.size == 1:
            outcome = int(support[0]) + 1
        else:
            outcome = int(self.rng.choice(NUM_OUTCOMES, p=column)) + 1
        return IndexCodec.observation_index(self.agent_pos, outcome)

    def expected_reward(self) -> float:
        if self.agent_pos == self.reward_arm:
            return self.alpha
        if self.agent_pos in REWARD_ARMS:
            return 1.0 - self.alpha
        return 0.0


def env_execute(env: TMazeEnv, action: int) -> TMazeEnv:
    return env.execute(action)


def env_observe(env: TMazeEnv) -> int:
    return env.observe()


def expected_reward(env: TMazeEnv) -> float:
    return env.expected_reward()
