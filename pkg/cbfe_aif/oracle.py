# SPDX-License-Identifier: MIT-0
"""Exact answers by enumerating the full joint of the policy-conditioned model.

Only usable at desk scale; every entry point refuses joints larger than
``ENUMERATION_LIMIT``.
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from cbfe_aif.config.constants import ENUMERATION_LIMIT
from cbfe_aif.dist import Categorical
from cbfe_aif.errors import InferenceFailure
from cbfe_aif.graph import validate_policy
from cbfe_aif.tmaze import BanditSpec, ModelSpec, Policy

Spec = Union[ModelSpec, BanditSpec]


def joint_size(spec: Spec) -> int:
    if isinstance(spec, BanditSpec):
        return spec.num_observations
    return spec.num_states ** (spec.horizon + 1) * spec.num_observations**spec.horizon


def _joint(spec: ModelSpec, prior: Categorical, policy: Policy, with_goals: bool) -> np.ndarray:
    """Joint tensor over axes (x_0, ..., x_T, y_1, ..., y_T)."""
    validate_policy(spec, policy)
    size = joint_size(spec)
    if size > ENUMERATION_LIMIT:
        raise InferenceFailure.enumeration_too_large({"size": size, "limit": ENUMERATION_LIMIT})
    horizon = spec.horizon
    operands = [prior.probs, [0]]
    for k, goal in enumerate(spec.step_goals(), start=1):
        operands += [spec.B[policy.controls[k - 1]].entries, [k, k - 1]]
        operands += [spec.A.entries, [horizon + k, k]]
        if with_goals:
            operands += [goal.probs, [horizon + k]]
    return np.einsum(*operands, list(range(2 * horizon + 1)))


def outcome_distribution(spec: Spec, prior: Optional[Categorical], policy: Policy) -> np.ndarray:
    """p(y | u) with one axis per future step."""
    if isinstance(spec, BanditSpec):
        validate_policy(spec, policy)
        return spec.A.entries[:, policy.controls[0]].copy()
    joint = _joint(spec, prior, policy, with_goals=False)
    return joint.sum(axis=tuple(range(spec.horizon + 1)))


def brute_force_evidence(spec: Spec, prior: Optional[Categorical], policy: Policy) -> float:
    if isinstance(spec, BanditSpec):
        return float(outcome_distribution(spec, prior, policy).sum())
    return float(_joint(spec, prior, policy, with_goals=True).sum())


def outcome_evidence(spec: Spec, prior: Optional[Categorical], policy: Policy, outcomes: Sequence[int]) -> float:
    return float(outcome_distribution(spec, prior, policy)[tuple(outcomes)])


def brute_force_cbfe(spec: Spec, prior: Optional[Categorical], policy: Policy) -> Tuple[float, Tuple[int, ...]]:
    """Global minimum over outcome sequences of -log2 p(y|u) p~(y); lowest index wins ties."""
    scores = outcome_distribution(spec, prior, policy)
    if isinstance(spec, ModelSpec):
        for axis, goal in enumerate(spec.step_goals()):
            shape = [1] * scores.ndim
            shape[axis] = -1
            scores = scores * goal.probs.reshape(shape)
    flat = int(np.argmax(scores))
    best = float(scores.flat[flat])
    outcomes = tuple(int(i) for i in np.unravel_index(flat, scores.shape))
    return (-math.log2(best) if best > 0.0 else math.inf), outcomes


def state_path_distribution(
    spec: ModelSpec, prior: Categorical, policy: Policy, outcomes: Optional[Sequence[int]] = None
) -> np.ndarray:
    """p(x | u), or p(x | y, u) when outcomes are given."""
    joint = _joint(spec, prior, policy, with_goals=False)
    if outcomes is not None:
        paths = joint[(Ellipsis,) + tuple(outcomes)]
    else:
        paths = joint.sum(axis=tuple(range(spec.horizon + 1, 2 * spec.horizon + 1)))
    total = paths.sum()
    if total <= 0.0:
        raise InferenceFailure.inconsistent_beliefs({"outcomes": tuple(outcomes or ())})
    return paths / total


def enumerate_marginals(
    spec: ModelSpec, prior: Categorical, policy: Policy, outcomes: Optional[Sequence[int]] = None
) -> Dict[str, Categorical]:
    """Exact single-variable marginals of the goal-weighted joint, optionally conditioned on outcomes."""
    horizon = spec.horizon
    joint = _joint(spec, prior, policy, with_goals=True)
    if outcomes is not None:
        joint = joint[(slice(None),) * (horizon + 1) + tuple(slice(o, o + 1) for o in outcomes)]
    names = [f"x_{k}" for k in range(horizon + 1)] + [f"y_{k}" for k in range(1, horizon + 1)]
    marginals = {}
    for axis, name in enumerate(names):
        if outcomes is not None and axis > horizon:
            marginals[name] = Categorical.onehot(outcomes[axis - horizon - 1], spec.num_observations)
            continue
        values = joint.sum(axis=tuple(a for a in range(joint.ndim) if a != axis))
        marginals[name] = Categorical(values / values.sum())
    return marginals
