# SPDX-License-Identifier: MIT-0

import math

import numpy as np
import pytest

from cbfe_aif.agent import (
    AgentConfig,
    AgentState,
    PlanCache,
    act,
    candidate_policies,
    plan,
    run_cell,
    run_landscape,
    run_trial,
    slide,
)
from cbfe_aif.errors import InferenceFailure
from cbfe_aif.objectives import Objective, RestartMode
from cbfe_aif.tmaze import CUE_RIGHT, IndexCodec, build_tmaze_model, policy_from_moves

CUE_ARM_3 = IndexCodec.observation_index(4, CUE_RIGHT)


class TestSteps:
    def test_act_takes_first_control(self):
        assert act(policy_from_moves(4, 3)) == 3

    def test_candidate_policies(self):
        policies = candidate_policies(4, 2)
        assert len(policies) == 16
        assert policies[0].moves() == (1, 1) and policies[-1].moves() == (4, 4)

    def test_slide_after_cue(self, tmaze):
        state = slide(AgentState(tmaze.d0), tmaze, 3, CUE_ARM_3)
        np.testing.assert_allclose(state.prior.probs, np.eye(8)[IndexCodec.state_index(4, 3)])
        assert state.time == 2

    def test_slide_after_uninformative_move(self, tmaze):
        start_outcome = IndexCodec.observation_index(1, 1)
        state = slide(AgentState(tmaze.d0), tmaze, 0, start_outcome)
        np.testing.assert_allclose(state.prior.probs, tmaze.d0.probs)

    def test_slide_impossible_observation(self, tmaze):
        with pytest.raises(InferenceFailure) as failure:
            slide(AgentState(tmaze.d0), tmaze, 3, IndexCodec.observation_index(2, 3))
        assert failure.value.reason == "inconsistent"

    def test_slide_index_checked(self, tmaze):
        with pytest.raises(InferenceFailure):
            slide(AgentState(tmaze.d0), tmaze, 4, 0)


class TestPlanning:
    def test_cbfe_first_move_goes_to_cue(self, tmaze):
        policy, grid = plan(AgentState(tmaze.d0), tmaze, AgentConfig(Objective.CBFE))
        assert len(grid) == 16
        assert act(policy) == 3

    def test_efe_first_move_goes_to_cue(self, tmaze):
        policy, _ = plan(AgentState(tmaze.d0), tmaze, AgentConfig(Objective.EFE))
        assert policy.moves() == (4, 4)

    def test_indifferent_bfe_ties_everything(self, indifferent_tmaze):
        _, grid = plan(AgentState(indifferent_tmaze.d0), indifferent_tmaze, AgentConfig(Objective.BFE))
        np.testing.assert_allclose([report.value for report in grid], grid[0].value, atol=1e-9)

    @pytest.mark.parametrize("alpha, c", [(0.6, 0.2), (0.6, 1.0), (0.9, 0.05), (0.9, 0.5)])
    def test_known_arm_utility_threshold(self, alpha, c):
        spec = build_tmaze_model(alpha, c, start_time=1, goal_span=3)
        state = slide(AgentState(spec.d0), spec, 3, CUE_ARM_3)
        exhaustive = AgentConfig(Objective.CBFE, restart_mode=RestartMode.EXHAUSTIVE)
        cbfe_policy, _ = plan(state, spec, exhaustive)
        efe_policy, _ = plan(state, spec, AgentConfig(Objective.EFE))
        assert cbfe_policy.moves()[0] == (4 if c < -math.log(alpha) else 3)
        assert efe_policy.moves()[0] == 3

    def test_plan_cache_reuses_grid(self, tmaze):
        cache = PlanCache()
        state = AgentState(tmaze.d0)
        _, first = plan(state, tmaze, AgentConfig(), cache=cache)
        _, second = plan(state, tmaze, AgentConfig(), cache=cache)
        assert first is second


class TestTrials:
    @pytest.mark.parametrize("objective", [Objective.CBFE, Objective.EFE])
    def test_cue_then_reward_arm(self, objective):
        for seed in range(10):
            trajectory = run_trial(AgentConfig(objective), 0.9, 2.0, reward_arm=3, seed=seed)
            assert trajectory.moves == (4, 3)
            assert trajectory.expected_reward == 0.9

    def test_reward_arm_two(self):
        trajectory = run_trial(AgentConfig(Objective.CBFE), 0.9, 2.0, reward_arm=2, seed=0)
        assert trajectory.moves == (4, 2)

    def test_low_utility_cbfe_keeps_the_cue(self):
        trajectory = run_trial(AgentConfig(Objective.CBFE), 0.6, 0.2, reward_arm=3, seed=0)
        assert trajectory.moves == (4, 4)
        assert trajectory.expected_reward == 0.0

    def test_low_utility_efe_exploits(self):
        trajectory = run_trial(AgentConfig(Objective.EFE), 0.6, 0.2, reward_arm=3, seed=0)
        assert trajectory.moves == (4, 3)
        assert trajectory.expected_reward == pytest.approx(0.6)

    def test_trials_are_deterministic(self):
        config = AgentConfig(Objective.BFE)
        first = run_trial(config, 0.9, 0.0, reward_arm=3, seed=5)
        second = run_trial(config, 0.9, 0.0, reward_arm=3, seed=5)
        assert first.to_dict() == second.to_dict()

    def test_trajectory_document(self):
        document = run_trial(AgentConfig(), 0.9, 2.0, reward_arm=3).to_dict()
        assert document["actions"] == [4, 3]
        assert document["observations"][0] == CUE_ARM_3
        assert len(document["steps"][0]["grid"]) == 4

    def test_moves_must_be_positive(self):
        with pytest.raises(InferenceFailure):
            run_trial(AgentConfig(), 0.9, 2.0, reward_arm=3, moves=0)


class TestLandscape:
    def test_small_landscape(self):
        result = run_landscape(AgentConfig(Objective.CBFE), [0.6, 0.9], [0.2, 2.0], runs_per_cell=2, seed=0)
        assert result.rewards.shape == (2, 2)
        assert result.rewards[1, 1] == pytest.approx(0.9)
        assert result.rewards[0, 0] == 0.0
        assert result.zero_cells >= 1
        assert result.dominant_trajectory(1, 1) == (4, 3)

    def test_landscape_is_reproducible(self):
        config = AgentConfig(Objective.BFE)
        first = run_landscape(config, [0.9], [0.0, 1.0], runs_per_cell=3, seed=11)
        second = run_landscape(config, [0.9], [0.0, 1.0], runs_per_cell=3, seed=11)
        np.testing.assert_array_equal(first.rewards, second.rewards)
        assert first.trajectories == second.trajectories

    @pytest.mark.parametrize("i, j", [(0, 1), (0, 3), (2, 0), (5, 0)])
    def test_low_utility_cells_split_the_agents(self, i, j):
        alphas, cs = np.linspace(0.5, 1.0, 10), np.linspace(0.0, 2.0, 10)
        trials = {}
        for objective in (Objective.CBFE, Objective.EFE):
            _, trials[objective] = run_cell(AgentConfig(objective), float(alphas[i]), float(cs[j]), 10, 3, 2, 0, i, j)
        assert set(trials[Objective.CBFE]) == {(4, 4)}
        assert (4, 1) in trials[Objective.EFE]

    def test_empty_grid(self):
        with pytest.raises(InferenceFailure):
            run_landscape(AgentConfig(), [], [1.0])
