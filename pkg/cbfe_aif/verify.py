# SPDX-License-Identifier: MIT-0
"""Cross-checks of the message-passing results against exact enumeration."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np
from aws_lambda_powertools import Logger

from cbfe_aif.agent import candidate_policies
from cbfe_aif.config.constants import SERVICE_NAME
from cbfe_aif.dist import StochasticMatrix
from cbfe_aif.graph import marginal
from cbfe_aif.objectives import (
    RestartMode,
    bfe_decompose,
    cbfe_decompose,
    efe_instantaneous_check,
    optimize_bfe,
    optimize_cbfe,
)
from cbfe_aif.oracle import brute_force_cbfe, brute_force_evidence, enumerate_marginals
from cbfe_aif.tmaze import ModelSpec, Policy, build_bandit_model, build_tmaze_model

logger = Logger(service=SERVICE_NAME, child=True)

DEFAULT_ALPHAS = (0.5, 0.9, 1.0)
DEFAULT_UTILITIES = (0.0, 2.0)
MODE_MATCH_FRACTION = 0.9


def _gap(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b) and (a > 0) == (b > 0):
        return 0.0
    return abs(a - b)


@dataclass
class CheckResult:
    name: str
    passed: bool = True
    max_deviation: float = 0.0
    cases: int = 0
    failures: List[str] = field(default_factory=list)
    details: Dict[str, float] = field(default_factory=dict)

    def record(self, deviation: float, label: str, tolerance: float):
        self.cases += 1
        self.max_deviation = max(self.max_deviation, deviation)
        if deviation > tolerance:
            self.passed = False
            self.failures.append(f"{label}: deviation {deviation:.3e}")


@dataclass(frozen=True)
class VerificationReport:
    checks: Tuple[CheckResult, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str) -> CheckResult:
        return next(check for check in self.checks if check.name == name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "tolerance": self.tolerance, "checks": [asdict(check) for check in self.checks]}


def perturbed(spec: ModelSpec, epsilon: float) -> ModelSpec:
    """Same model with the observation matrix mixed toward uniform columns."""
    mixed = (1.0 - epsilon) * spec.A.entries + epsilon / spec.num_observations
    return replace(spec, A=StochasticMatrix(mixed))


def _label(spec: ModelSpec, policy: Policy) -> str:
    return f"alpha={spec.alpha:g} c={spec.c:g} policy={policy.moves()}"


def run_verification(
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    utilities: Sequence[float] = DEFAULT_UTILITIES,
    horizon: int = 2,
    perturbation: float = 0.0,
    tolerance: float = 1e-9,
) -> VerificationReport:
    """Run every check over all policies of every (alpha, c) scenario.

    ``perturbation`` > 0 feeds the message-passing side a distorted
    observation matrix while the oracle keeps the true one; it exists to
    prove the checks can fail.
    """
    tree = CheckResult("tree_exactness")
    oracle = CheckResult("cbfe_oracle_equivalence")
    mode = CheckResult("cbfe_mode_initialization")
    identities = CheckResult("decomposition_identities")
    bound = CheckResult("surprise_bound")
    two_form = CheckResult("efe_two_form")
    bandit = CheckResult("bandit_table")
    mode_matches = 0

    for alpha in alphas:
        for c in utilities:
            truth = build_tmaze_model(alpha, c, horizon)
            model = perturbed(truth, perturbation) if perturbation > 0.0 else truth
            prior = truth.d0
            for policy in candidate_policies(truth.num_controls, horizon):
                label = _label(truth, policy)

                bfe = optimize_bfe(model, prior, policy)
                tree.record(_gap(bfe.value, -math.log2(brute_force_evidence(truth, prior, policy))), label, tolerance)
                exact = enumerate_marginals(truth, prior, policy)
                worst_edge, worst = None, 0.0
                for edge in bfe.beliefs.graph.edges:
                    error = marginal(bfe.beliefs, edge.name).probs - exact[edge.variable].probs
                    deviation = float(np.max(np.abs(error)))
                    if deviation >= worst:
                        worst_edge, worst = edge.name, deviation
                tree.record(worst, f"{label} edge={worst_edge}", tolerance)

                oracle_value, _ = brute_force_cbfe(truth, prior, policy)
                best = optimize_cbfe(model, prior, policy, RestartMode.EXHAUSTIVE)
                oracle.record(_gap(best.value, oracle_value), label, tolerance)

                local = optimize_cbfe(model, prior, policy, RestartMode.MODE)
                if _gap(local.value, oracle_value) <= tolerance:
                    mode_matches += 1
                else:
                    mode.failures.append(f"{label}: local optimum {local.value:.6f} vs {oracle_value:.6f}")

                parts = cbfe_decompose(model, prior, policy, best.beliefs, best.optimal_outcomes)
                identities.record(
                    _gap(-parts.opportunity + parts.risk - parts.extrinsic_value, best.value),
                    f"{label} risk form",
                    tolerance,
                )
                identities.record(
                    _gap(
                        parts.posterior_divergence - parts.epistemic_value_of_policy - parts.extrinsic_value, best.value
                    ),
                    f"{label} evidence form",
                    tolerance,
                )
                identities.record(max(0.0, -parts.risk, -parts.posterior_divergence), f"{label} sign", tolerance)
                bfe_parts = bfe_decompose(model, prior, policy, bfe.beliefs)
                identities.record(
                    _gap(
                        bfe_parts.expected_divergence + bfe_parts.risk - bfe_parts.expected_extrinsic_value, bfe.value
                    ),
                    f"{label} expected form",
                    tolerance,
                )

                for sweep, iterate in enumerate(local.beliefs.history, start=1):
                    terms = cbfe_decompose(model, prior, policy, iterate)
                    slack = terms.epistemic_value_of_policy - (terms.opportunity - terms.risk)
                    bound.record(max(0.0, slack), f"{label} sweep={sweep}", tolerance)
                final = cbfe_decompose(model, prior, policy, local.beliefs)
                bound.record(
                    _gap(final.epistemic_value_of_policy, final.opportunity - final.risk),
                    f"{label} converged",
                    tolerance,
                )

                for k, tau in enumerate(truth.window(), start=1):
                    factorized, direct = efe_instantaneous_check(model, prior, policy.controls[:k], tau)
                    two_form.record(_gap(factorized, direct), f"{label} tau={tau}", tolerance)

    total = len(mode.failures) + mode_matches
    mode.cases = total
    mode.details = {"match_fraction": mode_matches / total if total else 1.0}
    mode.passed = mode.details["match_fraction"] >= MODE_MATCH_FRACTION

    bandit_spec = build_bandit_model()
    expected = {0: (0.0, 1.0), 1: (0.0, 0.0)}
    for u, (bfe_value, cbfe_value) in expected.items():
        policy = Policy((u,))
        bandit.record(_gap(optimize_bfe(bandit_spec, None, policy).value, bfe_value), f"bandit u={u} bfe", tolerance)
        bandit.record(_gap(optimize_cbfe(bandit_spec, None, policy).value, cbfe_value), f"bandit u={u} cbfe", tolerance)

    report = VerificationReport((tree, oracle, mode, identities, bound, two_form, bandit), tolerance)
    for check in report.checks:
        if not check.passed:
            logger.error(f"Check {check.name} failed", extra={"failures": check.failures[:10]})
    return report
