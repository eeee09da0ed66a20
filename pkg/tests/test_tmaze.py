# SPDX-License-Identifier: MIT-0

import math

import numpy as np
import pytest

from cbfe_aif.errors import InferenceFailure
from cbfe_aif.tmaze import (
    CUE_RIGHT,
    REWARD_OBTAINED,
    IndexCodec,
    ModelSpec,
    Policy,
    TMazeEnv,
    build_tmaze_model,
    goal_vector,
    policy_from_moves,
)


class TestModel:
    def test_shapes(self, tmaze):
        assert tmaze.A.shape == (16, 8)
        assert tmaze.num_controls == 4
        assert all(b.shape == (8, 8) for b in tmaze.B)

    def test_initial_state_is_start_with_unknown_arm(self, tmaze):
        np.testing.assert_allclose(tmaze.d0.probs, [0.5, 0.5, 0, 0, 0, 0, 0, 0])

    def test_reward_arm_observation(self, tmaze):
        state = IndexCodec.state_index(2, 2)
        reward = IndexCodec.observation_index(2, REWARD_OBTAINED)
        assert tmaze.A.entries[reward, state] == pytest.approx(0.9)
        assert tmaze.A.entries[reward + 1, state] == pytest.approx(0.1)

    def test_cue_is_deterministic(self, tmaze):
        state = IndexCodec.state_index(4, 3)
        assert tmaze.A.entries[IndexCodec.observation_index(4, CUE_RIGHT), state] == 1.0

    def test_arms_are_absorbing(self, tmaze):
        for arm in (2, 3):
            for move in range(4):
                state = IndexCodec.state_index(arm, 3)
                assert tmaze.B[move].entries[state, state] == 1.0

    def test_moves_from_start_reach_target(self, tmaze):
        start = IndexCodec.state_index(1, 2)
        for move in range(1, 5):
            assert tmaze.B[move - 1].entries[IndexCodec.state_index(move, 2), start] == 1.0

    def test_first_goal_is_flat(self, tmaze):
        np.testing.assert_allclose(tmaze.goal(1).probs, np.full(16, 1 / 16))

    def test_goal_vector_values(self):
        c = 2.0
        goal = goal_vector(c).probs
        normalizer = 4 * (2 + math.exp(c) + math.exp(-c))
        assert goal[IndexCodec.observation_index(3, REWARD_OBTAINED)] == pytest.approx(math.exp(c) / normalizer)
        assert goal[0] == pytest.approx(1 / normalizer)

    def test_zero_utility_goal_is_uniform(self):
        np.testing.assert_allclose(goal_vector(0.0).probs, np.full(16, 1 / 16))

    def test_window_shift_needs_goals(self, tmaze):
        with pytest.raises(InferenceFailure) as failure:
            tmaze.at_time(2)
        assert failure.value.reason == "model"

    def test_trial_goal_span(self):
        spec = build_tmaze_model(0.9, 2.0, horizon=2, goal_span=3)
        assert sorted(spec.goals) == [1, 2, 3]
        assert list(spec.at_time(2).window()) == [2, 3]

    def test_alpha_out_of_range(self):
        with pytest.raises(InferenceFailure):
            build_tmaze_model(1.2, 2.0)

    def test_json_round_trip(self, tmaze):
        restored = ModelSpec.from_json(tmaze.to_json())
        np.testing.assert_array_equal(restored.A.entries, tmaze.A.entries)
        np.testing.assert_array_equal(restored.goal(2).probs, tmaze.goal(2).probs)
        assert restored.horizon == tmaze.horizon


class TestIndexing:
    def test_state_codec(self):
        for s in range(8):
            assert IndexCodec.state_index(*IndexCodec.decode_state(s)) == s

    def test_observation_codec(self):
        assert IndexCodec.observation_index(4, CUE_RIGHT) == 13
        assert IndexCodec.decode_observation(13) == (4, CUE_RIGHT)

    def test_labels(self):
        assert IndexCodec.observation_label(13) == "position 4: cue indicates arm 3"

    def test_invalid_position(self):
        with pytest.raises(InferenceFailure):
            IndexCodec.state_index(5, 2)

    def test_policy_from_moves(self):
        assert policy_from_moves(4, 3) == Policy((3, 2))
        assert policy_from_moves(4, 3).moves() == (4, 3)

    def test_empty_policy(self):
        with pytest.raises(InferenceFailure):
            Policy(())


class TestEnvironment:
    def test_cue_then_reward_arm(self):
        env = TMazeEnv(reward_arm=3, alpha=0.9)
        env.execute(4)
        assert env.observe() == IndexCodec.observation_index(4, CUE_RIGHT)
        env.execute(3)
        assert env.agent_pos == 3
        assert env.expected_reward() == 0.9

    def test_arms_are_absorbing(self):
        env = TMazeEnv(reward_arm=3, alpha=0.9)
        env.execute(2).execute(3)
        assert env.agent_pos == 2
        assert env.expected_reward() == pytest.approx(0.1)

    def test_no_reward_outside_arms(self):
        env = TMazeEnv(reward_arm=2)
        assert env.execute(4).expected_reward() == 0.0

    def test_seeded_observations_repeat(self):
        first, second = TMazeEnv(reward_arm=2, rng_seed=7), TMazeEnv(reward_arm=2, rng_seed=7)
        assert [first.observe() for _ in range(5)] == [second.observe() for _ in range(5)]

    def test_invalid_arm(self):
        with pytest.raises(InferenceFailure):
            TMazeEnv(reward_arm=4)
