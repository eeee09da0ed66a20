# SPDX-License-Identifier: MIT-0
"""Planning objectives: Bethe free energy, constrained Bethe free energy and
expected free energy, with their value decompositions. All values in bits.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from aws_lambda_powertools import Logger
from scipy import special, stats

from cbfe_aif.config.constants import DEFAULT_MAX_ITERS, SERVICE_NAME
from cbfe_aif.dist import Categorical, average_energy, bits, joint_entropy, kl_divergence
from cbfe_aif.errors import InferenceFailure
from cbfe_aif.graph import (
    BeliefState,
    FactorGraph,
    build_future_model,
    build_schedule,
    marginal,
    observation_edge,
    observation_node,
    observed_state_edge,
    run_schedule,
    state_edge,
    target_supports,
    transition_node,
)
from cbfe_aif.oracle import outcome_evidence
from cbfe_aif.tmaze import BanditSpec, ModelSpec, Policy

logger = Logger(service=SERVICE_NAME, child=True)

__all__ = [
    "BfeDecomposition",
    "CbfeDecomposition",
    "EfeContribution",
    "FreeEnergyReport",
    "Objective",
    "Policy",
    "RestartMode",
    "bethe_free_energy",
    "bfe_decompose",
    "cbfe_decompose",
    "efe",
    "efe_contributions",
    "efe_instantaneous_check",
    "evaluate",
    "optimize_bfe",
    "optimize_cbfe",
    "posterior_predictive",
]

Spec = Union[ModelSpec, BanditSpec]


class Objective(str, Enum):
    BFE = "bfe"
    CBFE = "cbfe"
    EFE = "efe"


class RestartMode(str, Enum):
    MODE = "mode"
    EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True, eq=False)
class FreeEnergyReport:
    objective: Objective
    value: float
    optimal_outcomes: Optional[Tuple[int, ...]] = None
    converged: bool = True
    sweeps: int = 0
    beliefs: Optional[BeliefState] = field(default=None, repr=False)

    def __post_init__(self):
        if (self.objective is Objective.CBFE) != (self.optimal_outcomes is not None):
            raise InferenceFailure.invalid_report(
                {"objective": self.objective.value, "optimal_outcomes": self.optimal_outcomes}
            )

    def to_dict(self) -> dict:
        return {
            "objective": self.objective.value,
            "value": self.value,
            "optimal_outcomes": None if self.optimal_outcomes is None else list(self.optimal_outcomes),
            "converged": self.converged,
            "sweeps": self.sweeps,
        }


@dataclass(frozen=True)
class CbfeDecomposition:
    opportunity: float
    risk: float
    extrinsic_value: float
    posterior_divergence: float
    epistemic_value_of_policy: float
    free_energy: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BfeDecomposition:
    expected_divergence: float
    risk: float
    expected_extrinsic_value: float
    free_energy: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EfeContribution:
    time: int
    ambiguity: float
    risk: float

    @property
    def total(self) -> float:
        return self.ambiguity + self.risk


def bethe_free_energy(graph: FactorGraph, beliefs: BeliefState) -> float:
    """Average energy minus Bethe entropy of the beliefs, in bits.

    Point-mass and clamped edges carry no entropy; a belief with mass on a
    zero of some factor returns ``math.inf``.
    """
    energy, entropy = 0.0, 0.0
    for node in graph.factor_nodes():
        joint = beliefs.factor_joint(node.name)
        energy += average_energy(joint, node.kind.tensor())
        entropy += joint_entropy(joint)
    for edge in graph.edges:
        if graph.is_free(edge.name):
            entropy += (1 - graph.degree(edge.name)) * joint_entropy(marginal(beliefs, edge.name).probs)
    if math.isinf(energy):
        logger.warning("Belief mass on a zero-probability factor entry, free energy is infinite")
        return math.inf
    return bits(energy - entropy)


def optimize_bfe(spec: Spec, prior: Optional[Categorical], policy: Policy, max_iters: int = DEFAULT_MAX_ITERS):
    graph = build_future_model(spec, prior, policy, constrain_observations=False)
    beliefs = run_schedule(graph, max_iters=max_iters)
    return FreeEnergyReport(
        Objective.BFE, bethe_free_energy(graph, beliefs), None, beliefs.converged, beliefs.sweeps, beliefs
    )


def _cbfe_report(graph: FactorGraph, beliefs: BeliefState, sweeps: Optional[int] = None) -> FreeEnergyReport:
    return FreeEnergyReport(
        Objective.CBFE,
        bethe_free_energy(graph, beliefs),
        beliefs.outcomes(),
        beliefs.converged,
        beliefs.sweeps if sweeps is None else sweeps,
        beliefs,
    )


def optimize_cbfe(
    spec: Spec,
    prior: Optional[Categorical],
    policy: Policy,
    restart_mode: RestartMode = RestartMode.MODE,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> FreeEnergyReport:
    """Minimize the constrained Bethe free energy over beliefs and outcome point masses.

    ``RestartMode.MODE`` runs EM once from the sequential mode start.
    ``RestartMode.EXHAUSTIVE`` runs EM from every joint outcome assignment
    with positive marginal mass and keeps the lowest result; starts that
    turn out jointly impossible are skipped.
    """
    restart_mode = RestartMode(restart_mode)
    graph = build_future_model(spec, prior, policy, constrain_observations=True)
    schedule = build_schedule(graph)
    if restart_mode is RestartMode.MODE:
        return _cbfe_report(graph, run_schedule(graph, schedule, max_iters))

    targets = schedule.em_targets
    supports = target_supports(graph)
    best, skipped, total_sweeps = None, 0, 0
    for start in itertools.product(*(range(graph.edge(e).size) for e in targets)):
        if any(index not in supports[e] for index, e in zip(start, targets)):
            continue
        try:
            beliefs = run_schedule(graph, schedule, max_iters, initial=dict(zip(targets, start)))
            report = _cbfe_report(graph, beliefs)
        except InferenceFailure as failure:
            if failure.reason != "inconsistent":
                raise
            skipped += 1
            continue
        total_sweeps += beliefs.sweeps
        if best is None or report.value < best.value:
            best = report
    if best is None:
        raise InferenceFailure.inconsistent_beliefs({"policy": policy.controls, "what": "no feasible restart"})
    logger.debug(
        "Exhaustive restarts finished",
        extra={"policy": policy.controls, "skipped": skipped, "sweeps": total_sweeps, "value": best.value},
    )
    return best


def _log2_goal(goal: Categorical, index: int) -> float:
    return bits(float(special.xlogy(1.0, goal.probs[index])))


def _state_risk(beliefs: BeliefState, horizon: int) -> float:
    """KL between the chain-factorized state beliefs and the policy-conditioned state prior."""
    graph = beliefs.graph
    prior = graph.node("prior")
    energy = average_energy(beliefs.factor_joint(prior.name), prior.kind.tensor())
    entropy = 0.0
    for k in range(1, horizon + 1):
        node = graph.node(transition_node(k))
        pair = beliefs.factor_joint(node.name)
        energy += average_energy(pair, node.kind.tensor())
        entropy += joint_entropy(pair)
    for k in range(1, horizon):
        entropy -= joint_entropy(marginal(beliefs, state_edge(k)).probs)
    return bits(energy - entropy)


def cbfe_decompose(
    spec: ModelSpec,
    prior: Categorical,
    policy: Policy,
    beliefs: BeliefState,
    outcomes: Optional[Sequence[int]] = None,
) -> CbfeDecomposition:
    """Split a converged constrained free energy into opportunity, risk and extrinsic value,
    and into posterior divergence, epistemic value of the policy and extrinsic value."""
    outcomes = tuple(beliefs.outcomes() if outcomes is None else outcomes)
    horizon = spec.horizon
    opportunity = 0.0
    for k in range(1, horizon + 1):
        q = marginal(beliefs, observed_state_edge(k, horizon)).probs
        opportunity -= bits(average_energy(q, spec.A.entries[outcomes[k - 1], :]))
    extrinsic = sum(_log2_goal(goal, y) for goal, y in zip(spec.step_goals(), outcomes))

    evidence = outcome_evidence(spec, prior, policy, outcomes)
    if evidence <= 0.0:
        logger.warning("Predicted outcomes have zero evidence", extra={"outcomes": outcomes})
        epistemic = -math.inf
    else:
        epistemic = math.log2(evidence)

    value = bethe_free_energy(beliefs.graph, beliefs)
    return CbfeDecomposition(
        opportunity=opportunity,
        risk=_state_risk(beliefs, horizon),
        extrinsic_value=extrinsic,
        posterior_divergence=value + epistemic + extrinsic,
        epistemic_value_of_policy=epistemic,
        free_energy=value,
    )


def bfe_decompose(spec: ModelSpec, prior: Categorical, policy: Policy, beliefs: BeliefState) -> BfeDecomposition:
    expected_extrinsic, expected_divergence = 0.0, 0.0
    for k, goal in enumerate(spec.step_goals(), start=1):
        q_y = marginal(beliefs, observation_edge(k)).probs
        expected_extrinsic -= bits(average_energy(q_y, goal.probs))
        joint = beliefs.factor_joint(observation_node(k))
        reference = spec.A.entries * joint.sum(axis=0)[np.newaxis, :]
        expected_divergence += bits(float(special.rel_entr(joint, reference).sum()))
    return BfeDecomposition(
        expected_divergence=expected_divergence,
        risk=_state_risk(beliefs, spec.horizon),
        expected_extrinsic_value=expected_extrinsic,
        free_energy=bethe_free_energy(beliefs.graph, beliefs),
    )


def posterior_predictive(spec: ModelSpec, prior: Categorical, controls_prefix: Sequence[int]) -> Categorical:
    controls = tuple(controls_prefix)
    if not controls or any(not 0 <= u < spec.num_controls for u in controls):
        raise InferenceFailure.invalid_policy({"controls": controls, "num_controls": spec.num_controls})
    return functools.reduce(lambda p, u: spec.B[u].apply(p), controls, prior)


def _ambiguity(spec: ModelSpec) -> np.ndarray:
    return stats.entropy(spec.A.entries, base=2, axis=0)


def efe_contributions(spec: ModelSpec, prior: Categorical, policy: Policy) -> Tuple[EfeContribution, ...]:
    """Per-step ambiguity and risk of the forward predictive."""
    if len(policy) != spec.horizon:
        raise InferenceFailure.invalid_policy({"length": len(policy), "horizon": spec.horizon})
    ambiguity = _ambiguity(spec)
    contributions = []
    for k, t in enumerate(spec.window(), start=1):
        predicted = posterior_predictive(spec, prior, policy.controls[:k])
        contributions.append(
            EfeContribution(
                time=t,
                ambiguity=float(predicted.probs @ ambiguity),
                risk=kl_divergence(spec.A.apply(predicted), spec.goal(t)),
            )
        )
    return tuple(contributions)


def efe(spec: ModelSpec, prior: Categorical, policy: Policy) -> float:
    value = sum(contribution.total for contribution in efe_contributions(spec, prior, policy))
    if math.isinf(value):
        logger.warning("Predicted outcomes outside the goal support, expected free energy is infinite")
        return math.inf
    return value


def efe_instantaneous_check(
    spec: ModelSpec, prior: Categorical, controls_prefix: Sequence[int], tau: int
) -> Tuple[float, float]:
    """Instantaneous EFE at absolute time ``tau`` as (ambiguity + risk, direct expectation)."""
    if tau != spec.start_time + len(controls_prefix) - 1:
        raise InferenceFailure.invalid_policy({"prefix": tuple(controls_prefix), "tau": tau})
    predicted = posterior_predictive(spec, prior, controls_prefix)
    goal = spec.goal(tau).probs
    factorized = float(predicted.probs @ _ambiguity(spec)) + kl_divergence(spec.A.apply(predicted), spec.goal(tau))

    joint = spec.A.entries * predicted.probs[np.newaxis, :]
    evidence = joint.sum(axis=1, keepdims=True)
    posterior = np.divide(joint, evidence, out=np.zeros_like(joint), where=evidence > 0)
    target = posterior * goal[:, np.newaxis]
    state_term = special.xlogy(joint, np.broadcast_to(predicted.probs, joint.shape)).sum()
    target_term = special.xlogy(joint, target).sum()
    direct = math.inf if np.isinf(target_term) else bits(float(state_term - target_term))
    return factorized, direct


def evaluate(
    objective: Objective,
    spec: Spec,
    prior: Optional[Categorical],
    policy: Policy,
    restart_mode: RestartMode = RestartMode.MODE,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> FreeEnergyReport:
    objective = Objective(objective)
    if objective is Objective.BFE:
        return optimize_bfe(spec, prior, policy, max_iters)
    if objective is Objective.CBFE:
        return optimize_cbfe(spec, prior, policy, restart_mode, max_iters)
    return FreeEnergyReport(Objective.EFE, efe(spec, prior, policy))
