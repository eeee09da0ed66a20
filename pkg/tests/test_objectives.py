# SPDX-License-Identifier: MIT-0

import dataclasses
import math

import numpy as np
import pytest
from scipy import special

from cbfe_aif import objectives
from cbfe_aif.agent import candidate_policies
from cbfe_aif.dist import Categorical
from cbfe_aif.errors import InferenceFailure
from cbfe_aif.objectives import (
    FreeEnergyReport,
    Objective,
    RestartMode,
    bethe_free_energy,
    bfe_decompose,
    cbfe_decompose,
    efe,
    efe_contributions,
    efe_instantaneous_check,
    evaluate,
    optimize_bfe,
    optimize_cbfe,
    posterior_predictive,
)
from cbfe_aif.oracle import (
    brute_force_cbfe,
    brute_force_evidence,
    joint_size,
    outcome_distribution,
    state_path_distribution,
)
from cbfe_aif.tmaze import Policy, build_tmaze_model, policy_from_moves

ALL_POLICIES = candidate_policies(4, 2)


def _argmin(values):
    values = np.asarray(values)
    return {ALL_POLICIES[i].moves() for i in np.flatnonzero(values <= values.min() + 1e-9)}


def _decompositions(alpha, c):
    spec = build_tmaze_model(alpha, c)
    terms = {}
    for policy in ALL_POLICIES:
        report = optimize_cbfe(spec, spec.d0, policy, RestartMode.EXHAUSTIVE)
        terms[policy.moves()] = cbfe_decompose(spec, spec.d0, policy, report.beliefs, report.optimal_outcomes)
    return terms


def _term_grid(terms, name):
    return np.array([getattr(terms[policy.moves()], name) for policy in ALL_POLICIES])


class TestBandit:
    @pytest.mark.parametrize("control, bfe, cbfe", [(0, 0.0, 1.0), (1, 0.0, 0.0)])
    def test_free_energies(self, bandit, control, bfe, cbfe):
        assert optimize_bfe(bandit, None, Policy((control,))).value == pytest.approx(bfe, abs=1e-12)
        report = optimize_cbfe(bandit, None, Policy((control,)))
        assert report.value == pytest.approx(cbfe, abs=1e-12)
        assert report.optimal_outcomes == (0,)

    def test_oracle_agrees(self, bandit):
        for control in range(2):
            value, _ = brute_force_cbfe(bandit, None, Policy((control,)))
            assert optimize_cbfe(bandit, None, Policy((control,))).value == pytest.approx(value, abs=1e-12)


class TestBetheFreeEnergy:
    @pytest.mark.parametrize("alpha, c", [(0.5, 0.0), (0.9, 2.0), (1.0, 2.0)])
    def test_equals_surprise_on_trees(self, alpha, c):
        spec = build_tmaze_model(alpha, c)
        for policy in ALL_POLICIES:
            expected = -math.log2(brute_force_evidence(spec, spec.d0, policy))
            assert optimize_bfe(spec, spec.d0, policy).value == pytest.approx(expected, abs=1e-9)

    def test_indifferent_goals_make_policies_equal(self, indifferent_tmaze):
        values = [optimize_bfe(indifferent_tmaze, indifferent_tmaze.d0, p).value for p in ALL_POLICIES]
        np.testing.assert_allclose(values, 8.0, atol=1e-9)

    @pytest.mark.parametrize("c", [0.0, 2.0])
    def test_grid_ignores_cue_reliability(self, c):
        grids = []
        for alpha in (0.5, 0.9):
            spec = build_tmaze_model(alpha, c)
            grids.append([optimize_bfe(spec, spec.d0, p).value for p in ALL_POLICIES])
        np.testing.assert_allclose(grids[0], grids[1], atol=1e-9)

    def test_report_carries_no_outcomes(self, tmaze):
        report = optimize_bfe(tmaze, tmaze.d0, policy_from_moves(4, 3))
        assert report.objective is Objective.BFE and report.optimal_outcomes is None

    def test_report_consistency_checked(self):
        with pytest.raises(InferenceFailure) as failure:
            FreeEnergyReport(Objective.CBFE, 1.0)
        assert failure.value.reason == "report"


class TestConstrainedBetheFreeEnergy:
    def test_exhaustive_restarts_match_oracle(self, tmaze):
        for policy in ALL_POLICIES:
            expected, _ = brute_force_cbfe(tmaze, tmaze.d0, policy)
            report = optimize_cbfe(tmaze, tmaze.d0, policy, RestartMode.EXHAUSTIVE)
            assert report.value == pytest.approx(expected, abs=1e-9)

    def test_global_argmin(self, tmaze):
        values = [optimize_cbfe(tmaze, tmaze.d0, p, RestartMode.EXHAUSTIVE).value for p in ALL_POLICIES]
        assert _argmin(values) == {(4, 2), (4, 3)}

    def test_mode_start_never_beats_oracle(self, tmaze):
        for policy in ALL_POLICIES:
            expected, _ = brute_force_cbfe(tmaze, tmaze.d0, policy)
            assert optimize_cbfe(tmaze, tmaze.d0, policy).value >= expected - 1e-9

    def test_em_never_increases_free_energy(self, tmaze):
        for policy in ALL_POLICIES:
            report = optimize_cbfe(tmaze, tmaze.d0, policy)
            values = [bethe_free_energy(state.graph, state) for state in report.beliefs.history]
            assert all(later <= earlier + 1e-9 for earlier, later in zip(values, values[1:]))
            assert report.converged

    def test_value_is_surprise_of_predicted_outcomes(self, tmaze):
        policy = policy_from_moves(4, 3)
        report = optimize_cbfe(tmaze, tmaze.d0, policy)
        y1, y2 = report.optimal_outcomes
        p = outcome_distribution(tmaze, tmaze.d0, policy)[y1, y2]
        expected = -math.log2(p * tmaze.goal(1).probs[y1] * tmaze.goal(2).probs[y2])
        assert report.value == pytest.approx(expected, abs=1e-9)


class TestDecompositions:
    @pytest.mark.parametrize("alpha, c", [(0.5, 2.0), (0.9, 0.0), (0.9, 2.0), (1.0, 2.0)])
    def test_conservative_policy_has_opportunity_minus_two(self, alpha, c):
        spec = build_tmaze_model(alpha, c)
        policy = policy_from_moves(1, 1)
        report = optimize_cbfe(spec, spec.d0, policy, RestartMode.EXHAUSTIVE)
        parts = cbfe_decompose(spec, spec.d0, policy, report.beliefs, report.optimal_outcomes)
        assert parts.opportunity == pytest.approx(-2.0, abs=1e-12)
        assert parts.risk == pytest.approx(0.0, abs=1e-12)

    def test_identities(self, tmaze):
        for policy in ALL_POLICIES:
            report = optimize_cbfe(tmaze, tmaze.d0, policy, RestartMode.EXHAUSTIVE)
            parts = cbfe_decompose(tmaze, tmaze.d0, policy, report.beliefs)
            assert parts.free_energy == pytest.approx(report.value, abs=1e-12)
            assert -parts.opportunity + parts.risk - parts.extrinsic_value == pytest.approx(report.value, abs=1e-9)
            assert parts.posterior_divergence - parts.epistemic_value_of_policy - parts.extrinsic_value == pytest.approx(
                report.value, abs=1e-9
            )
            assert parts.risk >= -1e-12
            assert parts.posterior_divergence >= -1e-9
            assert parts.epistemic_value_of_policy <= parts.opportunity - parts.risk + 1e-9

    def test_risk_prefers_conservative_policy(self, tmaze):
        risks = []
        for policy in ALL_POLICIES:
            report = optimize_cbfe(tmaze, tmaze.d0, policy, RestartMode.EXHAUSTIVE)
            risks.append(cbfe_decompose(tmaze, tmaze.d0, policy, report.beliefs).risk)
        assert (1, 1) in _argmin(risks)

    def test_extrinsic_value_constant_without_preference(self, indifferent_tmaze):
        spec = indifferent_tmaze
        values = []
        for policy in ALL_POLICIES:
            report = optimize_cbfe(spec, spec.d0, policy, RestartMode.EXHAUSTIVE)
            values.append(cbfe_decompose(spec, spec.d0, policy, report.beliefs).extrinsic_value)
        np.testing.assert_allclose(values, -8.0, atol=1e-12)

    @pytest.mark.parametrize("name", ["opportunity", "risk"])
    def test_goal_utility_leaves_term_unchanged(self, name):
        indifferent, preferring = _decompositions(0.9, 0.0), _decompositions(0.9, 2.0)
        np.testing.assert_allclose(_term_grid(indifferent, name), _term_grid(preferring, name), atol=1e-9)

    @pytest.mark.parametrize("c", [0.0, 2.0])
    def test_extrinsic_value_ignores_cue_reliability(self, c):
        unreliable, reliable = _decompositions(0.5, c), _decompositions(0.9, c)
        np.testing.assert_allclose(
            _term_grid(unreliable, "extrinsic_value"), _term_grid(reliable, "extrinsic_value"), atol=1e-9
        )

    @pytest.mark.parametrize("informative", [(4, 2), (4, 3)])
    def test_reliable_cue_greedy_opportunity_ties_informative(self, informative):
        terms = _decompositions(1.0, 2.0)
        greedy = [parts.opportunity for moves, parts in terms.items() if moves[0] in (2, 3)]
        assert min(abs(value - terms[informative].opportunity) for value in greedy) < 1e-9

    @pytest.mark.parametrize("alpha, c", [(0.5, 2.0), (0.9, 0.0), (0.9, 2.0)])
    def test_risk_is_enumerated_path_divergence(self, alpha, c):
        spec = build_tmaze_model(alpha, c)
        for policy in ALL_POLICIES:
            report = optimize_cbfe(spec, spec.d0, policy, RestartMode.EXHAUSTIVE)
            posterior = state_path_distribution(spec, spec.d0, policy, report.optimal_outcomes)
            predicted = state_path_distribution(spec, spec.d0, policy)
            expected = float(special.rel_entr(posterior, predicted).sum()) / math.log(2)
            parts = cbfe_decompose(spec, spec.d0, policy, report.beliefs, report.optimal_outcomes)
            assert parts.risk == pytest.approx(expected, abs=1e-9)

    def test_path_distribution_conditioning(self, tmaze):
        policy = policy_from_moves(4, 3)
        predicted = state_path_distribution(tmaze, tmaze.d0, policy)
        assert predicted.shape == (8, 8, 8)
        assert predicted.sum() == pytest.approx(1.0)
        _, outcomes = brute_force_cbfe(tmaze, tmaze.d0, policy)
        assert np.count_nonzero(state_path_distribution(tmaze, tmaze.d0, policy, outcomes)) == 1

    def test_expected_form_of_bfe(self, tmaze):
        for policy in ALL_POLICIES:
            report = optimize_bfe(tmaze, tmaze.d0, policy)
            parts = bfe_decompose(tmaze, tmaze.d0, policy, report.beliefs)
            total = parts.expected_divergence + parts.risk - parts.expected_extrinsic_value
            assert total == pytest.approx(report.value, abs=1e-9)
            assert parts.expected_divergence >= -1e-12


class TestExpectedFreeEnergy:
    def test_posterior_predictive(self, tmaze):
        np.testing.assert_allclose(posterior_predictive(tmaze, tmaze.d0, [3]).probs, [0, 0, 0, 0, 0, 0, 0.5, 0.5])
        np.testing.assert_allclose(posterior_predictive(tmaze, tmaze.d0, [3, 2]).probs, [0, 0, 0, 0, 0.5, 0.5, 0, 0])

    def test_posterior_predictive_needs_controls(self, tmaze):
        with pytest.raises(InferenceFailure):
            posterior_predictive(tmaze, tmaze.d0, [])

    @pytest.mark.parametrize("alpha, c", [(0.5, 2.0), (0.9, 2.0), (0.9, 0.0)])
    def test_cue_first_is_optimal(self, alpha, c):
        spec = build_tmaze_model(alpha, c)
        values = [efe(spec, spec.d0, p) for p in ALL_POLICIES]
        assert _argmin(values) == {(4, 4)}

    def test_sum_of_contributions(self, tmaze):
        policy = policy_from_moves(4, 3)
        contributions = efe_contributions(tmaze, tmaze.d0, policy)
        assert [c.time for c in contributions] == [1, 2]
        assert efe(tmaze, tmaze.d0, policy) == pytest.approx(sum(c.ambiguity + c.risk for c in contributions))

    def test_cue_has_no_ambiguity(self, tmaze):
        first = efe_contributions(tmaze, tmaze.d0, policy_from_moves(4, 4))[0]
        assert first.ambiguity == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.5, 0.9, 1.0])
    def test_two_forms_agree(self, alpha):
        spec = build_tmaze_model(alpha, 2.0)
        for policy in ALL_POLICIES:
            for k, tau in enumerate(spec.window(), start=1):
                factorized, direct = efe_instantaneous_check(spec, spec.d0, policy.controls[:k], tau)
                assert factorized == pytest.approx(direct, abs=1e-9)

    def test_unreachable_goal_is_infinite_and_logged(self, tmaze, monkeypatch):
        warnings = []
        monkeypatch.setattr(objectives.logger, "warning", lambda message, *args, **kwargs: warnings.append(message))
        goal = Categorical.onehot(0, tmaze.num_observations)
        spec = dataclasses.replace(tmaze, goals={1: goal, 2: goal})
        assert efe(spec, spec.d0, policy_from_moves(4, 4)) == math.inf
        assert warnings == ["Predicted outcomes outside the goal support, expected free energy is infinite"]

    def test_two_form_time_must_match_prefix(self, tmaze):
        with pytest.raises(InferenceFailure):
            efe_instantaneous_check(tmaze, tmaze.d0, [3], 2)

    def test_evaluate_dispatch(self, tmaze):
        policy = policy_from_moves(4, 4)
        assert evaluate(Objective.EFE, tmaze, tmaze.d0, policy).value == pytest.approx(efe(tmaze, tmaze.d0, policy))
        assert evaluate("cbfe", tmaze, tmaze.d0, policy).optimal_outcomes is not None


class TestOracle:
    def test_joint_size(self, tmaze):
        assert joint_size(tmaze) == 8**3 * 16**2

    def test_outcome_distribution_normalized(self, tmaze):
        p = outcome_distribution(tmaze, tmaze.d0, policy_from_moves(4, 3))
        assert p.shape == (16, 16)
        assert p.sum() == pytest.approx(1.0)

    def test_enumeration_guard(self):
        spec = build_tmaze_model(0.9, 2.0, horizon=4)
        with pytest.raises(InferenceFailure) as failure:
            brute_force_evidence(spec, spec.d0, Policy((0, 0, 0, 0)))
        assert failure.value.reason == "enumeration"
