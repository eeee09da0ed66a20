# SPDX-License-Identifier: MIT-0
"""Finite-domain probability primitives.

All information quantities are returned in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import linalg, special, stats

from cbfe_aif.config.constants import RENORMALIZE_TOLERANCE
from cbfe_aif.errors import InferenceFailure

ArrayLike = Union[Sequence[float], np.ndarray]

LN2 = math.log(2.0)


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    return values


def _check_entries(values: np.ndarray, what: str):
    if values.size == 0:
        raise InferenceFailure.dimension_mismatch({"what": what, "size": 0})
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise InferenceFailure.invalid_entries({"what": what})


def _renormalized(values: np.ndarray, axis: int, what: str) -> np.ndarray:
    totals = values.sum(axis=axis, keepdims=True)
    deviation = float(np.max(np.abs(totals - 1.0)))
    if deviation > RENORMALIZE_TOLERANCE:
        raise InferenceFailure.not_normalized({"what": what, "deviation": deviation})
    return values / totals


@dataclass(frozen=True, eq=False)
class Categorical:
    """Normalized probability vector over ``range(size)``."""

    probs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.probs, dtype=float)
        if values.ndim != 1:
            raise InferenceFailure.dimension_mismatch({"what": "categorical", "ndim": values.ndim})
        _check_entries(values, "categorical")
        object.__setattr__(self, "probs", _frozen(_renormalized(values, 0, "categorical")))

    @classmethod
    def uniform(cls, size: int) -> "Categorical":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def onehot(cls, index: int, size: int) -> "Categorical":
        return PointMass(index, size).to_categorical()

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def __len__(self):
        return self.size

    def allclose(self, other: "Categorical", atol: float = 1e-12) -> bool:
        return self.size == other.size and bool(np.allclose(self.probs, other.probs, rtol=0.0, atol=atol))

    def __repr__(self):
        return f"Categorical({np.array2string(self.probs, precision=4)})"


@dataclass(frozen=True)
class PointMass:
    index: int
    size: int

    def __post_init__(self):
        if not 0 <= self.index < self.size:
            raise InferenceFailure.invalid_index({"index": self.index, "size": self.size})

    def to_categorical(self) -> Categorical:
        return Categorical(self.vector())

    def vector(self) -> np.ndarray:
        values = np.zeros(self.size)
        values[self.index] = 1.0
        return values


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """Column-stochastic matrix; column ``j`` is a distribution over rows."""

    entries: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.entries, dtype=float)
        if values.ndim != 2:
            raise InferenceFailure.dimension_mismatch({"what": "stochastic matrix", "ndim": values.ndim})
        _check_entries(values, "stochastic matrix")
        object.__setattr__(self, "entries", _frozen(_renormalized(values, 0, "stochastic matrix")))

    @property
    def shape(self):
        return self.entries.shape

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def column(self, j: int) -> Categorical:
        return Categorical(self.entries[:, j])

    def apply(self, p: Categorical) -> Categorical:
        if p.size != self.cols:
            raise InferenceFailure.dimension_mismatch({"matrix_cols": self.cols, "vector": p.size})
        return Categorical(self.entries @ p.probs)

    def __repr__(self):
        return f"StochasticMatrix(shape={self.shape})"


def _as_array(v) -> np.ndarray:
    if isinstance(v, Categorical):
        return v.probs
    if isinstance(v, StochasticMatrix):
        return v.entries
    return np.asarray(v, dtype=float)


def entropy(p: Categorical) -> float:
    return float(stats.entropy(p.probs, base=2))


def kl_divergence(p: Categorical, q: Categorical) -> float:
    """KL[p || q] in bits, ``math.inf`` when p puts mass outside the support of q."""
    if p.size != q.size:
        raise InferenceFailure.dimension_mismatch({"p": p.size, "q": q.size})
    terms = special.rel_entr(p.probs, q.probs)
    if np.isinf(terms).any():
        return math.inf
    return max(float(terms.sum()) / LN2, 0.0)


def softmax(s: ArrayLike) -> Categorical:
    values = np.asarray(s, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise InferenceFailure.dimension_mismatch({"what": "softmax", "shape": values.shape})
    if not np.all(np.isfinite(values)):
        raise InferenceFailure.invalid_entries({"what": "softmax"})
    return Categorical(special.softmax(values))


def kronecker(v, w) -> np.ndarray:
    """Kronecker product with ``v`` as the major index."""
    return np.kron(_as_array(v), _as_array(w))


def direct_sum(blocks) -> np.ndarray:
    if not blocks:
        raise InferenceFailure.dimension_mismatch({"what": "direct sum", "blocks": 0})
    return linalg.block_diag(*(_as_array(block) for block in blocks))


def bits(nats: float) -> float:
    return nats / LN2


def average_energy(q: np.ndarray, f: np.ndarray) -> float:
    """-sum q log f in nats; 0 log 0 = 0 and positive mass on a zero of f gives inf."""
    return float(-special.xlogy(q, np.broadcast_to(f, np.shape(q))).sum())


def joint_entropy(q: np.ndarray) -> float:
    """Entropy of an arbitrary-shape normalized array in nats."""
    return float(special.entr(q).sum())
