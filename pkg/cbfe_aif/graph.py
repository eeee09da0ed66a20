# SPDX-License-Identifier: MIT-0
"""Forney-style factor graphs over finite domains.

Edges are variables, nodes are factors. Every node kind exposes its factor
as a tensor whose axes follow the order of the node's edges, so message
rules and energy terms are computed the same way for every kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import ClassVar, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from aws_lambda_powertools import Logger
from scipy import special

from cbfe_aif.config.constants import DEFAULT_MAX_ITERS, SERVICE_NAME
from cbfe_aif.dist import Categorical, PointMass, StochasticMatrix
from cbfe_aif.errors import InferenceFailure
from cbfe_aif.tmaze import BanditSpec, ModelSpec, Policy

logger = Logger(service=SERVICE_NAME, child=True)

MessageKey = Tuple[str, str]


class Rule(str, Enum):
    SUM_PRODUCT = "sum-product"
    VARIATIONAL = "variational"


@dataclass(frozen=True, eq=False)
class CategoricalPrior:
    params: Categorical
    arity: ClassVar[int] = 1

    def tensor(self) -> np.ndarray:
        return self.params.probs


@dataclass(frozen=True, eq=False)
class GoalPrior:
    params: Categorical
    arity: ClassVar[int] = 1

    def tensor(self) -> np.ndarray:
        return self.params.probs


@dataclass(frozen=True, eq=False)
class DiscreteTransition:
    """Edges are (output, input)."""

    matrix: StochasticMatrix
    arity: ClassVar[int] = 2

    def tensor(self) -> np.ndarray:
        return self.matrix.entries


@dataclass(frozen=True, eq=False)
class Multiplexer:
    """Transition selected by a clamped control; edges are (output, input)."""

    matrices: Tuple[StochasticMatrix, ...]
    selector: PointMass
    arity: ClassVar[int] = 2

    def __post_init__(self):
        object.__setattr__(self, "matrices", tuple(self.matrices))
        if self.selector.size != len(self.matrices):
            raise InferenceFailure.invalid_index({"selector": self.selector.index, "matrices": len(self.matrices)})
        if len({m.shape for m in self.matrices}) != 1:
            shapes = [m.shape for m in self.matrices]
            raise InferenceFailure.dimension_mismatch({"what": "multiplexer", "shapes": shapes})

    def tensor(self) -> np.ndarray:
        return self.matrices[self.selector.index].entries


@dataclass(frozen=True, eq=False)
class Equality:
    size: int
    arity: ClassVar[int] = 3
    _tensor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        delta = np.zeros((self.size,) * 3)
        idx = np.arange(self.size)
        delta[idx, idx, idx] = 1.0
        delta.setflags(write=False)
        object.__setattr__(self, "_tensor", delta)

    def tensor(self) -> np.ndarray:
        return self._tensor


@dataclass(frozen=True, eq=False)
class Clamp:
    value: PointMass
    arity: ClassVar[int] = 1

    def tensor(self) -> np.ndarray:
        return self.value.vector()


NodeKind = Union[CategoricalPrior, GoalPrior, DiscreteTransition, Multiplexer, Equality, Clamp]


@dataclass(frozen=True)
class Node:
    name: str
    kind: NodeKind = field(compare=False)
    edges: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))


@dataclass(frozen=True)
class Edge:
    name: str
    size: int
    variable: str = ""
    constrained: bool = False

    def __post_init__(self):
        if not self.variable:
            object.__setattr__(self, "variable", self.name.split(":")[0])


def _along(values: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = -1
    return np.reshape(values, shape)


@dataclass(frozen=True, eq=False)
class FactorGraph:
    nodes: Tuple[Node, ...]
    edges: Tuple[Edge, ...]
    _nodes: Dict[str, Node] = field(init=False, repr=False)
    _edges: Dict[str, Edge] = field(init=False, repr=False)
    _endpoints: Dict[str, Tuple[str, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        nodes = {node.name: node for node in self.nodes}
        edges = {edge.name: edge for edge in self.edges}
        if len(nodes) != len(self.nodes) or len(edges) != len(self.edges):
            raise InferenceFailure.invalid_graph({"what": "duplicate names"})

        endpoints: Dict[str, List[str]] = {name: [] for name in edges}
        for node in self.nodes:
            if len(node.edges) != node.kind.arity:
                raise InferenceFailure.invalid_graph({"node": node.name, "edges": len(node.edges)})
            tensor = node.kind.tensor()
            for axis, name in enumerate(node.edges):
                if name not in edges:
                    raise InferenceFailure.invalid_graph({"node": node.name, "unknown_edge": name})
                if tensor.shape[axis] != edges[name].size:
                    raise InferenceFailure.dimension_mismatch(
                        {"node": node.name, "edge": name, "factor": tensor.shape[axis], "edge_size": edges[name].size}
                    )
                endpoints[name].append(node.name)
        for name, ends in endpoints.items():
            if len(ends) not in (1, 2):
                raise InferenceFailure.invalid_graph({"edge": name, "endpoints": len(ends)})

        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_endpoints", {name: tuple(ends) for name, ends in endpoints.items()})
        if not nx.is_forest(self.to_networkx()):
            raise InferenceFailure.cyclic_graph({"nodes": len(self.nodes), "edges": len(self.edges)})

    def to_networkx(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(self._nodes)
        for name, ends in self._endpoints.items():
            if len(ends) == 2:
                g.add_edge(*ends, key=name)
        return g

    def node(self, name: str) -> Node:
        try:
            return self._nodes[name]
        except KeyError:
            raise InferenceFailure.invalid_graph({"unknown_node": name})

    def edge(self, name: str) -> Edge:
        try:
            return self._edges[name]
        except KeyError:
            raise InferenceFailure.invalid_graph({"unknown_edge": name})

    def endpoints(self, edge: str) -> Tuple[str, ...]:
        self.edge(edge)
        return self._endpoints[edge]

    def other_end(self, node: str, edge: str) -> Optional[str]:
        others = [n for n in self.endpoints(edge) if n != node]
        return others[0] if others else None

    def is_clamped(self, edge: str) -> bool:
        return any(isinstance(self._nodes[n].kind, Clamp) for n in self.endpoints(edge))

    def clamp_value(self, edge: str) -> np.ndarray:
        for n in self.endpoints(edge):
            if isinstance(self._nodes[n].kind, Clamp):
                return self._nodes[n].kind.tensor()
        raise InferenceFailure.invalid_graph({"edge": edge, "what": "not clamped"})

    def is_free(self, edge: str) -> bool:
        return not (self.edge(edge).constrained or self.is_clamped(edge))

    def degree(self, edge: str) -> int:
        return sum(not isinstance(self._nodes[n].kind, Clamp) for n in self.endpoints(edge))

    def factor_nodes(self) -> Tuple[Node, ...]:
        return tuple(node for node in self.nodes if not isinstance(node.kind, Clamp))

    def constrained_edges(self) -> Tuple[str, ...]:
        return tuple(edge.name for edge in self.edges if edge.constrained)

    def with_constraints(self, constrained: Iterable[str]) -> "FactorGraph":
        """Copy of the graph where exactly the named edges carry point-mass constraints."""
        constrained = set(constrained)
        unknown = constrained - set(self._edges)
        if unknown:
            raise InferenceFailure.invalid_graph({"unknown_edges": sorted(unknown)})
        return FactorGraph(self.nodes, tuple(replace(e, constrained=e.name in constrained) for e in self.edges))


def message_rule(graph: FactorGraph, node: Node) -> Rule:
    if len(node.edges) >= 2 and any(graph.edge(e).constrained for e in node.edges):
        return Rule.VARIATIONAL
    return Rule.SUM_PRODUCT


def required_inputs(graph: FactorGraph, node: str, edge: str, rule: Rule) -> List[MessageKey]:
    """Messages that must exist before ``node`` can send along ``edge``."""
    needed = []
    for other_edge in graph.node(node).edges:
        if other_edge == edge or not graph.is_free(other_edge):
            continue
        other = graph.other_end(node, other_edge)
        if other is not None:
            needed.append((other, other_edge))
        if rule is Rule.VARIATIONAL:
            needed.append((node, other_edge))
    return needed


@dataclass(frozen=True)
class ScheduleEntry:
    node: str
    edge: str
    rule: Rule

    @property
    def key(self) -> MessageKey:
        return self.node, self.edge


@dataclass(frozen=True)
class Schedule:
    entries: Tuple[ScheduleEntry, ...]
    em_targets: Tuple[str, ...] = ()

    def __len__(self):
        return len(self.entries)

    def message_set(self) -> set:
        return {entry.key for entry in self.entries}

    def validate(self, graph: FactorGraph) -> "Schedule":
        produced = set()
        for position, entry in enumerate(self.entries):
            missing = [key for key in required_inputs(graph, entry.node, entry.edge, entry.rule) if key not in produced]
            if missing:
                raise InferenceFailure.invalid_schedule(
                    {"position": position, "message": entry.key, "missing": missing}
                )
            produced.add(entry.key)
        return self

    @classmethod
    def from_order(cls, graph: FactorGraph, order: Sequence[MessageKey]) -> "Schedule":
        entries = tuple(ScheduleEntry(n, e, message_rule(graph, graph.node(n))) for n, e in order)
        return cls(entries, graph.constrained_edges()).validate(graph)


def build_schedule(graph: FactorGraph) -> Schedule:
    """Every message into a non-clamped edge, in dependency order."""
    rules: Dict[MessageKey, Rule] = {}
    for node in graph.factor_nodes():
        rule = message_rule(graph, node)
        for edge in node.edges:
            if not graph.is_clamped(edge):
                rules[(node.name, edge)] = rule
    rank = {key: position for position, key in enumerate(rules)}

    dependencies = nx.DiGraph()
    dependencies.add_nodes_from(rules)
    for (node, edge), rule in rules.items():
        for needed in required_inputs(graph, node, edge, rule):
            dependencies.add_edge(needed, (node, edge))
    if not nx.is_directed_acyclic_graph(dependencies):
        raise InferenceFailure.invalid_schedule({"what": "circular message dependencies"})

    order = nx.lexicographical_topological_sort(dependencies, key=rank.get)
    schedule = Schedule(tuple(ScheduleEntry(n, e, rules[(n, e)]) for n, e in order), graph.constrained_edges())
    logger.debug("Built schedule", extra={"messages": len(schedule), "em_targets": list(schedule.em_targets)})
    return schedule


@dataclass(frozen=True, eq=False)
class Message:
    node: str
    edge: str
    rule: Rule
    values: np.ndarray


def _checked_total(values: np.ndarray, node: str, edge: str) -> float:
    total = float(values.sum())
    if not total > 0.0 or not np.isfinite(total):
        raise InferenceFailure.inconsistent_beliefs({"node": node, "edge": edge})
    return total


def compute_message(
    graph: FactorGraph,
    node: str,
    out_edge: str,
    rule: Rule,
    inbound: Mapping[str, np.ndarray],
    normalize: bool = True,
) -> Message:
    """Message from ``node`` along ``out_edge``.

    ``inbound`` maps every other edge of the node to the incoming message
    (sum-product) or to the current edge belief (variational). Clamped and
    constrained edges supply their one-hot vector in both cases.
    """
    kind = graph.node(node).kind
    edges = graph.node(node).edges
    tensor = kind.tensor()
    axis = edges.index(out_edge)
    others = tuple(j for j in range(len(edges)) if j != axis)

    if rule is Rule.SUM_PRODUCT:
        product = tensor
        for j in others:
            product = product * _along(inbound[edges[j]], j, tensor.ndim)
        values = product.sum(axis=others)
    else:
        weights = np.ones([1] * tensor.ndim)
        for j in others:
            weights = weights * _along(inbound[edges[j]], j, tensor.ndim)
        log_values = special.xlogy(np.broadcast_to(weights, tensor.shape), tensor).sum(axis=others)
        finite = log_values[np.isfinite(log_values)]
        if normalize and finite.size:
            log_values = log_values - finite.max()
        values = np.exp(log_values)

    total = _checked_total(values, node, out_edge)
    if normalize:
        values = values / total
    return Message(node, out_edge, rule, values)


@dataclass(frozen=True, eq=False)
class BeliefState:
    """Messages and point masses from one schedule execution."""

    graph: FactorGraph
    messages: Mapping[MessageKey, np.ndarray] = field(default_factory=dict)
    point_masses: Mapping[str, PointMass] = field(default_factory=dict)
    sweeps: int = 0
    converged: bool = False
    history: Tuple["BeliefState", ...] = field(default=(), repr=False)

    def message(self, node: str, edge: str) -> np.ndarray:
        try:
            return self.messages[(node, edge)]
        except KeyError:
            raise InferenceFailure.beliefs_not_ready({"node": node, "edge": edge})

    def outcomes(self) -> Tuple[int, ...]:
        return tuple(self.point_masses[e].index for e in self.graph.constrained_edges())

    def edge_vector(self, node: str, edge: str) -> np.ndarray:
        """What ``node`` sees on ``edge``: clamp, point mass or the message from the far side."""
        if self.graph.is_clamped(edge):
            return self.graph.clamp_value(edge)
        if self.graph.edge(edge).constrained:
            if edge not in self.point_masses:
                raise InferenceFailure.beliefs_not_ready({"edge": edge})
            return self.point_masses[edge].vector()
        other = self.graph.other_end(node, edge)
        if other is None:
            return np.ones(self.graph.edge(edge).size)
        return self.message(other, edge)

    def factor_joint(self, node: str) -> np.ndarray:
        """Bethe factor belief, proportional to the factor times all incoming messages."""
        n = self.graph.node(node)
        joint = n.kind.tensor()
        for axis, edge in enumerate(n.edges):
            joint = joint * _along(self.edge_vector(node, edge), axis, joint.ndim)
        return joint / _checked_total(joint, node, ",".join(n.edges))


def marginal(beliefs: BeliefState, edge: str) -> Categorical:
    graph = beliefs.graph
    if graph.is_clamped(edge):
        return Categorical(graph.clamp_value(edge))
    if graph.edge(edge).constrained:
        if edge not in beliefs.point_masses:
            raise InferenceFailure.beliefs_not_ready({"edge": edge})
        return beliefs.point_masses[edge].to_categorical()
    values = np.ones(graph.edge(edge).size)
    for node in graph.endpoints(edge):
        values = values * beliefs.message(node, edge)
    return Categorical(values / _checked_total(values, "marginal", edge))


def _inbound_vector(
    graph: FactorGraph,
    node: str,
    edge: str,
    rule: Rule,
    messages: Mapping[MessageKey, np.ndarray],
    point_masses: Mapping[str, PointMass],
) -> np.ndarray:
    state = BeliefState(graph, messages, point_masses)
    incoming = state.edge_vector(node, edge)
    if rule is Rule.SUM_PRODUCT or not graph.is_free(edge):
        return incoming
    belief = incoming * state.message(node, edge)
    return belief / _checked_total(belief, node, edge)


def _sweep(graph, schedule, point_masses, normalize) -> Dict[MessageKey, np.ndarray]:
    messages: Dict[MessageKey, np.ndarray] = {}
    for entry in schedule.entries:
        inbound = {}
        for edge in graph.node(entry.node).edges:
            if edge == entry.edge:
                continue
            try:
                inbound[edge] = _inbound_vector(graph, entry.node, edge, entry.rule, messages, point_masses)
            except InferenceFailure as failure:
                if failure.reason == "state":
                    raise InferenceFailure.invalid_schedule({"message": entry.key, "missing_input": edge})
                raise
        messages[entry.key] = compute_message(graph, entry.node, entry.edge, entry.rule, inbound, normalize).values
    return messages


def em_update(beliefs: BeliefState, edge: str) -> PointMass:
    """Mode of the product of all messages toward a constrained edge, lowest index on ties."""
    graph = beliefs.graph
    product = np.ones(graph.edge(edge).size)
    for node in graph.endpoints(edge):
        product = product * beliefs.message(node, edge)
    _checked_total(product, "em", edge)
    return PointMass(int(np.argmax(product)), graph.edge(edge).size)


def mode_initialization(graph: FactorGraph) -> Dict[str, PointMass]:
    """Initial point masses chosen one target at a time.

    Each target takes the argmax of its sum-product marginal with the
    targets chosen before it held at their point masses, so the joint
    start always has positive probability.
    """
    chosen: Dict[str, PointMass] = {}
    for edge in graph.constrained_edges():
        partial = graph.with_constraints(chosen)
        state = BeliefState(partial, _sweep(partial, build_schedule(partial), chosen, True), dict(chosen))
        chosen[edge] = PointMass(int(np.argmax(marginal(state, edge).probs)), graph.edge(edge).size)
    return chosen


def target_supports(graph: FactorGraph) -> Dict[str, Tuple[int, ...]]:
    """Indices with positive mass in the unconstrained marginal of every constrained edge."""
    relaxed = graph.with_constraints(())
    state = BeliefState(relaxed, _sweep(relaxed, build_schedule(relaxed), {}, True))
    return {e: tuple(int(i) for i in np.flatnonzero(marginal(state, e).probs > 0.0)) for e in graph.constrained_edges()}


def run_schedule(
    graph: FactorGraph,
    schedule: Optional[Schedule] = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    initial: Optional[Mapping[str, Union[int, PointMass]]] = None,
    normalize: bool = True,
) -> BeliefState:
    """Run sweeps of the schedule, updating point masses between sweeps until they settle."""
    schedule = schedule or build_schedule(graph)
    if initial is None:
        point_masses = mode_initialization(graph)
    else:
        point_masses = {
            e: v if isinstance(v, PointMass) else PointMass(int(v), graph.edge(e).size) for e, v in initial.items()
        }
    missing = [e for e in schedule.em_targets if e not in point_masses]
    if missing:
        raise InferenceFailure.beliefs_not_ready({"uninitialized": missing})

    history: List[BeliefState] = []
    converged = False
    for sweep in range(1, max_iters + 1):
        state = BeliefState(graph, _sweep(graph, schedule, point_masses, normalize), dict(point_masses), sweep)
        history.append(state)
        if not schedule.em_targets:
            converged = True
            break
        updated = {e: em_update(state, e) for e in schedule.em_targets}
        if all(updated[e].index == point_masses[e].index for e in schedule.em_targets):
            converged = True
            break
        point_masses = updated

    if not converged:
        logger.warning(f"Point masses still changing after {max_iters} sweeps", extra={"outcomes": state.outcomes()})
    return replace(state, converged=converged, history=tuple(history))


def transition_node(k: int) -> str:
    return f"transition_{k}"


def equality_node(k: int) -> str:
    return f"equality_{k}"


def observation_node(k: int) -> str:
    return f"observation_{k}"


def goal_node(k: int) -> str:
    return f"goal_{k}"


def state_edge(k: int) -> str:
    return f"x_{k}"


def observation_edge(k: int) -> str:
    return f"y_{k}"


def observed_state_edge(k: int, horizon: int) -> str:
    """State edge entering the observation factor of step ``k``."""
    return f"x_{k}:obs" if k < horizon else f"x_{k}"


def validate_policy(spec: Union[ModelSpec, BanditSpec], policy: Policy):
    if len(policy) != spec.horizon:
        raise InferenceFailure.invalid_policy({"length": len(policy), "horizon": spec.horizon})
    if any(not 0 <= u < spec.num_controls for u in policy.controls):
        raise InferenceFailure.invalid_policy({"controls": policy.controls, "num_controls": spec.num_controls})


def _bandit_graph(spec: BanditSpec, policy: Policy, constrain_observations: bool) -> FactorGraph:
    nodes = (
        Node(observation_node(1), DiscreteTransition(spec.A), (observation_edge(1), "u_1")),
        Node("control_1", Clamp(PointMass(policy.controls[0], spec.num_controls)), ("u_1",)),
    )
    edges = (
        Edge(observation_edge(1), spec.num_observations, constrained=constrain_observations),
        Edge("u_1", spec.num_controls),
    )
    return FactorGraph(nodes, edges)


def build_future_model(
    spec: Union[ModelSpec, BanditSpec],
    prior: Optional[Categorical],
    policy: Policy,
    constrain_observations: bool,
) -> FactorGraph:
    """Chain factor graph of the policy-conditioned future with goal priors on the outcomes."""
    validate_policy(spec, policy)
    if isinstance(spec, BanditSpec):
        return _bandit_graph(spec, policy, constrain_observations)
    if prior is None or prior.size != spec.num_states:
        raise InferenceFailure.dimension_mismatch(
            {"prior": None if prior is None else prior.size, "states": spec.num_states}
        )

    n, horizon = spec.num_states, spec.horizon
    nodes = [Node("prior", CategoricalPrior(prior), (state_edge(0),))]
    edges = [Edge(state_edge(0), n)]
    incoming = state_edge(0)
    for k, goal in enumerate(spec.step_goals(), start=1):
        selector = PointMass(policy.controls[k - 1], spec.num_controls)
        nodes.append(Node(transition_node(k), Multiplexer(spec.B, selector), (state_edge(k), incoming)))
        edges.append(Edge(state_edge(k), n))
        if k < horizon:
            observed, incoming = f"x_{k}:obs", f"x_{k}:next"
            nodes.append(Node(equality_node(k), Equality(n), (state_edge(k), observed, incoming)))
            edges.extend([Edge(observed, n), Edge(incoming, n)])
        else:
            observed = state_edge(k)
        nodes.append(Node(observation_node(k), DiscreteTransition(spec.A), (observation_edge(k), observed)))
        nodes.append(Node(goal_node(k), GoalPrior(goal), (observation_edge(k),)))
        edges.append(Edge(observation_edge(k), spec.num_observations, constrained=constrain_observations))
    return FactorGraph(tuple(nodes), tuple(edges))


def build_slide_model(spec: ModelSpec, prior: Categorical, control: int, observation: int) -> FactorGraph:
    """One executed step with the observed outcome clamped."""
    if prior.size != spec.num_states:
        raise InferenceFailure.dimension_mismatch({"prior": prior.size, "states": spec.num_states})
    nodes = (
        Node("prior", CategoricalPrior(prior), (state_edge(0),)),
        Node(
            transition_node(1),
            Multiplexer(spec.B, PointMass(control, spec.num_controls)),
            (state_edge(1), state_edge(0)),
        ),
        Node(observation_node(1), DiscreteTransition(spec.A), (observation_edge(1), state_edge(1))),
        Node("outcome_1", Clamp(PointMass(observation, spec.num_observations)), (observation_edge(1),)),
    )
    edges = (
        Edge(state_edge(0), spec.num_states),
        Edge(state_edge(1), spec.num_states),
        Edge(observation_edge(1), spec.num_observations),
    )
    return FactorGraph(nodes, edges)
