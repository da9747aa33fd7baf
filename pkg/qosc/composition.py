"""Service activation, dependency graphs, plan counting and the two solver backends.

A plan chooses, for every demanded concept, exactly one producer: the query inputs
(``SOURCE``) or an activated service offering a sub-concept. Query outputs are demanded
by ``SINK``; a chosen service demands its own inputs, which must come from the query or
from strictly earlier layers. The chosen producers of the query outputs must together
imply the output requirement.
"""

from dataclasses import dataclass, field, replace
from typing import (
    TYPE_CHECKING,
    AbstractSet,
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)
import itertools
import logging
import math

import networkx as nx

from .errors import NoSolutionError, StaleHierarchyError, ValidationError, Violation
from .model import (
    SINK,
    SOURCE,
    STANDARD_SPECS,
    Aggregation,
    CompositionPlan,
    Direction,
    QoSSpec,
    Query,
    ServiceDescriptor,
    ServiceNode,
    satisfiesConstraints,
    specsByName,
)
from .ontology import AtomId, ConceptId, Condition, Ontology, conceptsOf, implies
from .util import Deadline

if TYPE_CHECKING:
    from .abstraction import AbstractionHierarchy

logger = logging.getLogger(__name__)

DEFAULT_DEADLINE_MS = 60_000

Choice = Tuple[str, ConceptId]
Edge = Tuple[str, str, ConceptId]


def _activated(
    onto: Ontology,
    inputs: FrozenSet[ConceptId],
    pre: Condition,
    offered: AbstractSet[ConceptId],
    knowledge: Condition,
) -> bool:
    return inputs <= offered and implies(onto, knowledge, pre)


def isActivated(
    onto: Ontology,
    service: Union[ServiceDescriptor, ServiceNode],
    available: Iterable[ConceptId],
    knowledge: Condition,
) -> bool:
    """Whether every input is covered by an available sub-concept and the precondition holds."""
    if isinstance(service, ServiceDescriptor):
        inputs = conceptsOf(onto, service.inputs)
    else:
        inputs = service.inputs
    return _activated(
        onto, inputs, service.pre, onto.upwardClosure(available), knowledge
    )


@dataclass(frozen=True)
class DependencyGraph:
    """Layered activation structure for one query at one abstraction level.

    ``availableConcepts[k]`` and ``knowledge[k]`` are what layer ``k`` was activated with.
    ``bindings`` maps abstract nodes to their representative chain down to level 0.
    """

    onto: Ontology = field(repr=False, compare=False)
    level: int
    layers: Tuple[FrozenSet[str], ...]
    availableConcepts: Tuple[FrozenSet[ConceptId], ...]
    knowledge: Tuple[Condition, ...]
    nodes: Mapping[str, ServiceNode] = field(repr=False)
    queryConcepts: FrozenSet[ConceptId]
    inputSpec: Condition
    excluded: FrozenSet[str] = frozenset()
    bindings: Mapping[str, Tuple[str, ...]] = field(default_factory=dict, repr=False)
    hierarchyDigest: Optional[str] = None

    _layerIndex: Dict[str, int] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        for k, layer in enumerate(self.layers):
            for sid in layer:
                self._layerIndex[sid] = k

    def __len__(self) -> int:
        return len(self._layerIndex)

    def layerOf(self, sid: str) -> int:
        if sid == SINK:
            return len(self.layers)
        return self._layerIndex[sid]

    def serviceIds(self) -> List[str]:
        """Activated services in layer order, ids sorted within a layer."""
        return [sid for layer in self.layers for sid in sorted(layer)]


def buildDependencyGraph(
    onto: Ontology,
    services: Iterable[ServiceNode],
    query: Query,
    level: int = 0,
    trees: Optional[Mapping[str, FrozenSet[str]]] = None,
) -> DependencyGraph:
    """Activate services layer by layer until nothing new fires.

    Args:
        onto: The ontology the services are described over.
        services: Candidate services at one level.
        query: The query whose inputs and input spec seed the activation.
        level: Abstraction level of ``services``.
        trees: For final-level services, the other services each one's tree covers.
            A service covered by an activated service is excluded, as is a service
            whose tree covers one already activated.

    Returns:
        The dependency graph. Unreachable outputs are not an error here.
    """
    pending: Dict[str, ServiceNode] = {}
    for node in services:
        if node.id in pending:
            raise ValueError("duplicate service id {}".format(node.id))
        pending[node.id] = node

    queryConcepts = conceptsOf(onto, query.inputs)
    available: Set[ConceptId] = set(queryConcepts)
    offered: Set[ConceptId] = set(onto.upwardClosure(queryConcepts))
    knowledge = query.inputSpec

    layers: List[FrozenSet[str]] = []
    availables: List[FrozenSet[ConceptId]] = []
    knowledges: List[Condition] = []
    placed: Dict[str, ServiceNode] = {}
    excluded: Set[str] = set()
    shadowed: Set[str] = set()

    while True:
        ready = sorted(
            sid
            for sid, node in pending.items()
            if _activated(onto, node.inputs, node.pre, offered, knowledge)
        )
        if trees is not None:
            layerCover = set(shadowed)
            for sid in ready:
                layerCover |= trees.get(sid, frozenset())
            kept = []
            for sid in ready:
                if sid in layerCover or placed.keys() & trees.get(sid, frozenset()):
                    excluded.add(sid)
                    del pending[sid]
                else:
                    kept.append(sid)
            ready = kept
            for sid in ready:
                shadowed |= trees.get(sid, frozenset())

        if not ready:
            break

        layers.append(frozenset(ready))
        availables.append(frozenset(available))
        knowledges.append(knowledge)
        for sid in ready:
            node = pending.pop(sid)
            placed[sid] = node
            available |= node.outputs
            offered |= onto.upwardClosure(node.outputs)
            knowledge = knowledge.conjoin(node.post)

        logger.debug(
            "level %d layer %d: activated %d services", level, len(layers) - 1, len(ready)
        )

    if excluded:
        logger.debug("level %d: excluded %d covered services", level, len(excluded))

    return DependencyGraph(
        onto=onto,
        level=level,
        layers=tuple(layers),
        availableConcepts=tuple(availables),
        knowledge=tuple(knowledges),
        nodes=placed,
        queryConcepts=queryConcepts,
        inputSpec=query.inputSpec,
        excluded=frozenset(excluded),
    )


class _PlanSpace:
    """Producer lookups over a dependency graph shared by the counters and solvers."""

    def __init__(self, dg: DependencyGraph) -> None:
        self.dg = dg
        self.onto = dg.onto
        self.queryOffers = self.onto.upwardClosure(dg.queryConcepts)
        self.offers: Dict[str, FrozenSet[ConceptId]] = {}
        self._index: Dict[ConceptId, List[str]] = {}
        for sid in dg.serviceIds():
            self.offers[sid] = self.onto.upwardClosure(dg.nodes[sid].outputs)
            for concept in self.offers[sid]:
                self._index.setdefault(concept, []).append(sid)
        self._covered: Dict[str, FrozenSet[AtomId]] = {}

    def sourceOffers(self, concept: ConceptId) -> bool:
        return concept in self.queryOffers

    def producers(self, concept: ConceptId, consumer: str) -> List[str]:
        limit = self.dg.layerOf(consumer)
        result = []
        for sid in self._index.get(concept, []):
            if self.dg.layerOf(sid) >= limit:
                break
            result.append(sid)
        return result

    def inputsOf(self, sid: str) -> List[ConceptId]:
        return sorted(self.dg.nodes[sid].inputs)

    def outputConcepts(self, query: Query) -> List[ConceptId]:
        return sorted(conceptsOf(self.onto, query.outputs))

    def required(self, query: Query) -> FrozenSet[AtomId]:
        for atom in query.outputReq.atoms:
            self.onto.weakerAtoms(atom)
        return query.outputReq.atoms

    def covered(self, producer: str, required: FrozenSet[AtomId]) -> FrozenSet[AtomId]:
        """The required atoms entailed by a producer's postcondition."""
        if producer not in self._covered:
            post = self.dg.inputSpec if producer == SOURCE else self.dg.nodes[producer].post
            self._covered[producer] = self.onto.entailed(post)
        return self._covered[producer] & required


def countPlans(dg: DependencyGraph, query: Query) -> int:
    """Number of distinct producer-choice trees answering ``query`` within ``dg``."""
    space = _PlanSpace(dg)
    ways: Dict[str, int] = {}

    def nodeWays(sid: str) -> int:
        if sid not in ways:
            total = 1
            for concept in space.inputsOf(sid):
                total *= obligationWays(concept, sid)
            ways[sid] = total
        return ways[sid]

    def obligationWays(concept: ConceptId, consumer: str) -> int:
        total = 1 if space.sourceOffers(concept) else 0
        for producer in space.producers(concept, consumer):
            total += nodeWays(producer)
        return total

    # warm the memo bottom-up so recursion depth stays at one layer
    for sid in dg.serviceIds():
        nodeWays(sid)

    required = space.required(query)
    states: Dict[FrozenSet[AtomId], int] = {frozenset(): 1}
    for concept in space.outputConcepts(query):
        groups: Dict[FrozenSet[AtomId], int] = {}
        if space.sourceOffers(concept):
            key = space.covered(SOURCE, required)
            groups[key] = groups.get(key, 0) + 1
        for producer in space.producers(concept, SINK):
            key = space.covered(producer, required)
            groups[key] = groups.get(key, 0) + nodeWays(producer)

        merged: Dict[FrozenSet[AtomId], int] = {}
        for state, count in states.items():
            for group, weight in groups.items():
                key = state | group
                merged[key] = merged.get(key, 0) + count * weight
        states = merged

    return states.get(required, 0)


@dataclass(frozen=True)
class Derivation:
    """One producer together with a derivation for each of its inputs."""

    producer: str
    inputs: Tuple[Tuple[ConceptId, "Derivation"], ...] = ()


PlanTree = Tuple[Tuple[ConceptId, Derivation], ...]


def enumeratePlans(
    dg: DependencyGraph, query: Query, limit: Optional[int] = None
) -> Iterator[PlanTree]:
    """Yield every plan tree ``countPlans`` counts, by brute force.

    Meant for small instances: alternatives are materialised per service.
    """
    space = _PlanSpace(dg)
    leaf = Derivation(SOURCE)
    memo: Dict[str, List[Derivation]] = {}

    def alternatives(concept: ConceptId, consumer: str) -> List[Derivation]:
        result = [leaf] if space.sourceOffers(concept) else []
        for producer in space.producers(concept, consumer):
            result.extend(derivations(producer))
        return result

    def derivations(sid: str) -> List[Derivation]:
        if sid not in memo:
            inputs = space.inputsOf(sid)
            options = [alternatives(concept, sid) for concept in inputs]
            memo[sid] = [
                Derivation(sid, tuple(zip(inputs, combo)))
                for combo in itertools.product(*options)
            ]
        return memo[sid]

    required = space.required(query)
    outputs = space.outputConcepts(query)
    emitted = 0
    for combo in itertools.product(*(alternatives(c, SINK) for c in outputs)):
        covered: FrozenSet[AtomId] = frozenset()
        for derivation in combo:
            covered |= space.covered(derivation.producer, required)
        if covered != required:
            continue
        yield tuple(zip(outputs, combo))
        emitted += 1
        if limit is not None and emitted >= limit:
            return


def _planGraph(plan: CompositionPlan) -> "nx.DiGraph[str]":
    graph: "nx.DiGraph[str]" = nx.DiGraph()
    graph.add_nodes_from(plan.nodes)
    graph.add_edges_from(
        (producer, consumer)
        for producer, consumer, _ in plan.producerEdges
        if producer != SOURCE and consumer != SINK
    )
    return graph


def topologicalOrder(plan: CompositionPlan) -> List[str]:
    """Plan nodes producers-first, ties broken by id."""
    try:
        return list(nx.lexicographical_topological_sort(_planGraph(plan)))
    except nx.NetworkXUnfeasible:
        raise ValidationError(
            [Violation("cyclic-plan", "plan", "producer edges contain a cycle")]
        ) from None


def aggregateQos(plan: CompositionPlan, specs: Sequence[QoSSpec]) -> Dict[str, float]:
    """Aggregate node QoS over the plan DAG.

    Additive parameters take the heaviest producer-to-consumer path, multiplicative
    ones the product over nodes and bottleneck ones the minimum over nodes. Values are
    rounded to each parameter's declared precision.
    """
    order = topologicalOrder(plan)
    graph = _planGraph(plan)

    missing = [
        Violation("missing-qos", node, "no value for " + spec.name)
        for node in order
        for spec in specs
        if spec.name not in plan.nodeQos.get(node, {})
    ]
    if missing:
        raise ValidationError(missing)

    result: Dict[str, float] = {}
    for spec in specs:
        values = {node: plan.nodeQos[node][spec.name] for node in order}
        if spec.aggregation == Aggregation.ADDITIVE:
            finish: Dict[str, float] = {}
            for node in order:
                before = [finish[p] for p in graph.predecessors(node)]
                finish[node] = values[node] + max(before, default=0.0)
            total = max(finish.values(), default=0.0)
        elif spec.aggregation == Aggregation.MULTIPLICATIVE:
            total = math.prod(values.values())
        else:
            total = min(values.values(), default=math.inf)
        result[spec.name] = spec.rounded(total)
    return result


def buildPlan(
    dg: DependencyGraph, choices: Mapping[Choice, str], specs: Sequence[QoSSpec]
) -> CompositionPlan:
    """Materialise a producer choice per ``(consumer, concept)`` as a plan of ``dg``."""
    nodes = frozenset(p for p in choices.values() if p != SOURCE)
    plan = CompositionPlan(
        level=dg.level,
        nodes=nodes,
        producerEdges=frozenset(
            (producer, consumer, concept)
            for (consumer, concept), producer in choices.items()
        ),
        qos={},
        nodeQos={sid: dg.nodes[sid].qos for sid in nodes},
        bindings={sid: dg.bindings.get(sid, (sid,)) for sid in nodes},
        hierarchyDigest=dg.hierarchyDigest,
        sourceConcepts=dg.queryConcepts,
    )
    return replace(plan, qos=aggregateQos(plan, specs))


def planFromTree(
    dg: DependencyGraph, tree: PlanTree, specs: Sequence[QoSSpec] = STANDARD_SPECS
) -> Optional[CompositionPlan]:
    """The plan a tree describes, or None when one service is derived two different ways."""
    if not _consistentTree(tree):
        return None
    choices: Dict[Choice, str] = {}
    stack = [(SINK, concept, derivation) for concept, derivation in tree]
    while stack:
        consumer, concept, derivation = stack.pop()
        choices[(consumer, concept)] = derivation.producer
        for inner, sub in derivation.inputs:
            stack.append((derivation.producer, inner, sub))
    return buildPlan(dg, choices, specs)


def _consistentTree(tree: PlanTree) -> bool:
    seen: Dict[str, Derivation] = {}
    stack = [derivation for _, derivation in tree]
    while stack:
        derivation = stack.pop()
        if derivation.producer == SOURCE:
            continue
        other = seen.setdefault(derivation.producer, derivation)
        if other != derivation:
            return False
        stack.extend(sub for _, sub in derivation.inputs)
    return True


def distinctPlans(
    dg: DependencyGraph, query: Query, specs: Sequence[QoSSpec] = STANDARD_SPECS
) -> List[CompositionPlan]:
    """Every plan of ``dg`` as a DAG, each service derived one way. Brute force."""
    plans: Dict[Tuple[FrozenSet[str], FrozenSet[Edge]], CompositionPlan] = {}
    for tree in enumeratePlans(dg, query):
        plan = planFromTree(dg, tree, specs)
        if plan is not None:
            plans.setdefault((plan.nodes, plan.producerEdges), plan)
    return list(plans.values())


def _identity(spec: QoSSpec) -> float:
    if spec.aggregation == Aggregation.ADDITIVE:
        return 0.0
    if spec.aggregation == Aggregation.MULTIPLICATIVE:
        return 1.0
    return math.inf


def _serial(spec: QoSSpec, own: float, inputs: Sequence[float]) -> float:
    """Value of a service given the values of the derivations feeding it."""
    if spec.aggregation == Aggregation.ADDITIVE:
        return own + max(inputs, default=0.0)
    if spec.aggregation == Aggregation.MULTIPLICATIVE:
        return own * math.prod(inputs)
    return min([own, *inputs])


def _parallel(spec: QoSSpec, a: float, b: float) -> float:
    if spec.aggregation == Aggregation.ADDITIVE:
        return max(a, b)
    if spec.aggregation == Aggregation.MULTIPLICATIVE:
        return a * b
    return min(a, b)


def _subtreeBounds(
    space: _PlanSpace, specs: Iterable[QoSSpec]
) -> Dict[str, Dict[str, float]]:
    """Per service and parameter, the best value any derivation rooted at it can reach.

    For additive parameters this is the earliest finish; for bottleneck parameters the
    widest derivation; for multiplicative ones an upper bound on the product over the
    derivation's distinct services.
    """
    bounds: Dict[str, Dict[str, float]] = {sid: {} for sid in space.dg.nodes}
    for spec in specs:
        for sid in space.dg.serviceIds():
            own = space.dg.nodes[sid].qos[spec.name]
            perInput = []
            for concept in space.inputsOf(sid):
                options = [bounds[p][spec.name] for p in space.producers(concept, sid)]
                if space.sourceOffers(concept):
                    options.append(_identity(spec))
                perInput.append(spec.best(options))
            if spec.aggregation == Aggregation.MULTIPLICATIVE:
                # a shared node is counted once, so only the weakest input is safe
                bound = own * min(perInput, default=1.0)
            else:
                bound = _serial(spec, own, perInput)
            bounds[sid][spec.name] = bound
    return bounds


def _pickBest(spec: QoSSpec, options: Sequence[Tuple[str, float]]) -> Tuple[str, float]:
    best = options[0]
    for option in options[1:]:
        if spec.isBetter(option[1], best[1]):
            best = option
    return best


def _dynamicOptimum(
    space: _PlanSpace, query: Query, spec: QoSSpec, specs: Sequence[QoSSpec]
) -> CompositionPlan:
    value: Dict[str, float] = {}
    pick: Dict[Choice, str] = {}

    def options(concept: ConceptId, consumer: str) -> List[Tuple[str, float]]:
        found = [(SOURCE, _identity(spec))] if space.sourceOffers(concept) else []
        found += [(p, value[p]) for p in space.producers(concept, consumer)]
        return found

    for sid in space.dg.serviceIds():
        inputs = []
        for concept in space.inputsOf(sid):
            producer, best = _pickBest(spec, options(concept, sid))
            pick[(sid, concept)] = producer
            inputs.append(best)
        value[sid] = _serial(spec, space.dg.nodes[sid].qos[spec.name], inputs)

    required = space.required(query)
    states: Dict[FrozenSet[AtomId], Tuple[float, Tuple[Choice, ...], Tuple[str, ...]]]
    states = {frozenset(): (_identity(spec), (), ())}
    for concept in space.outputConcepts(query):
        groups: Dict[FrozenSet[AtomId], Tuple[str, float]] = {}
        for producer, score in options(concept, SINK):
            key = space.covered(producer, required)
            if key not in groups or spec.isBetter(score, groups[key][1]):
                groups[key] = (producer, score)
        if not groups:
            raise NoSolutionError("no producer for query output {}".format(concept))

        merged: Dict[FrozenSet[AtomId], Tuple[float, Tuple[Choice, ...], Tuple[str, ...]]]
        merged = {}
        for state, (score, keys, producers) in states.items():
            for group, (producer, groupScore) in groups.items():
                key = state | group
                combined = _parallel(spec, score, groupScore)
                if key not in merged or spec.isBetter(combined, merged[key][0]):
                    merged[key] = (
                        combined,
                        keys + ((SINK, concept),),
                        producers + (producer,),
                    )
        states = merged

    if required not in states:
        raise NoSolutionError("no plan meets the output requirement")

    _, keys, producers = states[required]
    choices: Dict[Choice, str] = dict(zip(keys, producers))
    frontier = [p for p in producers if p != SOURCE]
    expanded: Set[str] = set()
    while frontier:
        sid = frontier.pop()
        if sid in expanded:
            continue
        expanded.add(sid)
        for concept in space.inputsOf(sid):
            producer = pick[(sid, concept)]
            choices[(sid, concept)] = producer
            if producer != SOURCE:
                frontier.append(producer)

    return buildPlan(space.dg, choices, specs)


class _BranchAndBound:
    """Depth-first search over producer choices with optimistic-bound pruning.

    Services already in the partial plan are reused rather than derived again, so every
    candidate is a DAG plan. With no objective the first feasible plan wins.
    """

    def __init__(
        self,
        space: _PlanSpace,
        query: Query,
        specs: Sequence[QoSSpec],
        objective: Optional[QoSSpec],
        deadline: Deadline,
    ) -> None:
        self.space = space
        self.query = query
        self.specs = list(specs)
        self.declared = specsByName(specs)
        self.objective = objective
        self.deadline = deadline
        self.bounds = _subtreeBounds(space, specs)
        self.constraints = [(self.declared[c.qos], c.bound) for c in query.constraints]
        self.required = space.required(query)
        self.outputs = space.outputConcepts(query)

        self.choices: Dict[Choice, str] = {}
        self.chosen: Dict[str, None] = {}
        self.best: Optional[CompositionPlan] = None
        self.bestValue: Optional[float] = None
        self.done = False
        self.visited = 0
        self.pruned = 0

    def run(self, incumbent: Optional[CompositionPlan] = None) -> Optional[CompositionPlan]:
        if incumbent is not None and self.objective is not None:
            self.best = incumbent
            self.bestValue = incumbent.qos[self.objective.name]
        self._extend(tuple((SINK, concept) for concept in self.outputs))
        logger.debug(
            "branch and bound: %d nodes visited, %d pruned, found=%s",
            self.visited,
            self.pruned,
            self.best is not None,
        )
        return self.best

    def _rank(self, sid: str) -> Tuple[bool, float]:
        reused = sid in self.chosen
        if self.objective is None:
            return (not reused, 0.0)
        score = self.bounds[sid][self.objective.name]
        if self.objective.direction == Direction.MAXIMIZE:
            score = -score
        return (not reused, score)

    def _candidates(self, concept: ConceptId, consumer: str) -> List[str]:
        found = [SOURCE] if self.space.sourceOffers(concept) else []
        found += sorted(self.space.producers(concept, consumer), key=self._rank)
        return found

    def _optimistic(self, spec: QoSSpec) -> float:
        bounds = [self.bounds[sid][spec.name] for sid in self.chosen]
        if spec.aggregation == Aggregation.ADDITIVE:
            return max(bounds, default=0.0)
        if spec.aggregation == Aggregation.BOTTLENECK:
            return min(bounds, default=math.inf)
        product = math.prod(self.space.dg.nodes[sid].qos[spec.name] for sid in self.chosen)
        return min([product, *bounds])

    def _promising(self) -> bool:
        for spec, bound in self.constraints:
            if not spec.satisfies(spec.rounded(self._optimistic(spec)), bound):
                return False
        if self.objective is not None and self.bestValue is not None:
            optimistic = self.objective.rounded(self._optimistic(self.objective))
            if not self.objective.isBetter(optimistic, self.bestValue):
                return False
        return True

    def _meetsRequirement(self) -> bool:
        covered: FrozenSet[AtomId] = frozenset()
        for concept in self.outputs:
            covered |= self.space.covered(self.choices[(SINK, concept)], self.required)
        return covered == self.required

    def _extend(self, pending: Tuple[Choice, ...]) -> None:
        self.deadline.check()
        self.visited += 1
        if not pending:
            self._leaf()
            return

        (consumer, concept), rest = pending[0], pending[1:]
        lastOutput = consumer == SINK and (not rest or rest[0][0] != SINK)
        for producer in self._candidates(concept, consumer):
            self.choices[(consumer, concept)] = producer
            if lastOutput and not self._meetsRequirement():
                self.pruned += 1
            elif producer == SOURCE or producer in self.chosen:
                self._extend(rest)
            else:
                self.chosen[producer] = None
                if self._promising():
                    inputs = tuple((producer, c) for c in self.space.inputsOf(producer))
                    self._extend(rest + inputs)
                else:
                    self.pruned += 1
                del self.chosen[producer]
            if self.done:
                break
        del self.choices[(consumer, concept)]

    def _leaf(self) -> None:
        plan = buildPlan(self.space.dg, self.choices, self.specs)
        if not satisfiesConstraints(plan.qos, self.query.constraints, self.declared):
            return
        if self.objective is None:
            self.best = plan
            self.done = True
            return
        value = plan.qos[self.objective.name]
        if self.bestValue is None or self.objective.isBetter(value, self.bestValue):
            self.best = plan
            self.bestValue = value


def optimalSingleQos(
    dg: DependencyGraph,
    query: Query,
    qosName: str,
    specs: Sequence[QoSSpec] = STANDARD_SPECS,
    deadline: Optional[Deadline] = None,
    exact: bool = True,
) -> CompositionPlan:
    """The plan with the best aggregated value of one QoS parameter.

    Additive and bottleneck parameters are solved exactly by dynamic programming over
    the layers. For multiplicative parameters the same pass yields an incumbent that a
    branch-and-bound search then improves, since a service shared by two derivations
    contributes its factor once. With ``exact=False`` the incumbent is returned as is.

    Raises:
        NoSolutionError: If the query outputs cannot be produced within ``dg``.
    """
    declared = specsByName(specs)
    if qosName not in declared:
        raise ValueError("undeclared QoS parameter {}".format(qosName))
    spec = declared[qosName]
    space = _PlanSpace(dg)

    plan = _dynamicOptimum(space, query, spec, specs)
    if exact and spec.aggregation == Aggregation.MULTIPLICATIVE:
        search = _BranchAndBound(
            space, query.withConstraints(()), specs, spec, deadline or Deadline(None)
        )
        plan = search.run(plan) or plan

    logger.debug("optimal %s at level %d: %s", qosName, dg.level, plan.qos[qosName])
    return plan


def findConstrained(
    dg: DependencyGraph,
    query: Query,
    specs: Sequence[QoSSpec] = STANDARD_SPECS,
    deadline: Optional[Deadline] = None,
) -> Optional[CompositionPlan]:
    """A constraint-satisfying plan, best on the first objective, or None if none exists.

    Raises:
        DeadlineExceeded: If ``deadline`` expires before the search completes.
    """
    declared = specsByName(specs)
    objective = declared[query.objectives[0].qos] if query.objectives else None
    search = _BranchAndBound(
        _PlanSpace(dg), query, specs, objective, deadline or Deadline(None)
    )
    return search.run()


def rewireEdges(
    onto: Ontology,
    order: Sequence[str],
    nodes: Mapping[str, ServiceNode],
    sourceConcepts: FrozenSet[ConceptId],
    outputConcepts: Iterable[ConceptId],
    previous: Iterable[Edge],
) -> FrozenSet[Edge]:
    """Re-derive producer edges after services in a fixed topology were swapped.

    Each demanded concept keeps its previous producer when that producer still offers it;
    otherwise the query or the earliest plan node in ``order`` that offers it is used.
    Demands nobody can meet are left uncovered for plan validation to report.
    """
    sourceOffers = onto.upwardClosure(sourceConcepts)
    offers = {sid: onto.upwardClosure(nodes[sid].outputs) for sid in order}
    earlier: Dict[str, FrozenSet[str]] = {
        sid: frozenset(order[:position]) for position, sid in enumerate(order)
    }
    earlier[SINK] = frozenset(order)

    before: Dict[str, Dict[ConceptId, str]] = {}
    for producer, consumer, concept in previous:
        before.setdefault(consumer, {})[concept] = producer

    edges: Set[Edge] = set()
    for consumer in [*order, SINK]:
        demands = outputConcepts if consumer == SINK else nodes[consumer].inputs
        kept = before.get(consumer, {})
        for concept in sorted(demands):
            candidates = [kept[concept]] if concept in kept else []
            candidates += sorted(set(kept.values()) - set(candidates))
            candidates += [SOURCE, *order]
            for producer in candidates:
                if producer == SOURCE:
                    valid = concept in sourceOffers
                else:
                    valid = producer in earlier[consumer] and concept in offers[producer]
                if valid:
                    edges.add((producer, consumer, concept))
                    break
    return frozenset(edges)


def reconstruct(
    plan: CompositionPlan, hierarchy: "AbstractionHierarchy"
) -> CompositionPlan:
    """Replace every abstract node by the level-0 service its binding chain ends in.

    Raises:
        StaleHierarchyError: If the plan was solved against different bindings.
    """
    if plan.level == 0:
        return plan
    if plan.hierarchyDigest != hierarchy.digest:
        raise StaleHierarchyError("plan was solved against a different hierarchy")

    target: Dict[str, str] = {}
    for sid in plan.nodes:
        chain = plan.bindings.get(sid)
        if not chain or chain[0] != sid or not hierarchy.isValidChain(chain):
            raise StaleHierarchyError("binding of {} is no longer valid".format(sid))
        target[sid] = chain[-1]
    if len(set(target.values())) != len(target):
        raise StaleHierarchyError("two abstract services resolve to the same service")

    base = hierarchy.nodes(0)
    order = [target[sid] for sid in topologicalOrder(plan)]
    previous = [
        (target.get(p, p), target.get(c, c), concept)
        for p, c, concept in plan.producerEdges
    ]
    outputs = sorted({c for _, consumer, c in plan.producerEdges if consumer == SINK})
    edges = rewireEdges(
        hierarchy.onto, order, base, plan.sourceConcepts, outputs, previous
    )

    result = CompositionPlan(
        level=0,
        nodes=frozenset(order),
        producerEdges=edges,
        qos={},
        nodeQos={sid: base[sid].qos for sid in order},
        bindings={sid: (sid,) for sid in order},
        sourceConcepts=plan.sourceConcepts,
    )
    return replace(result, qos=aggregateQos(result, hierarchy.specs))


def _offered(
    onto: Ontology,
    producer: str,
    concept: ConceptId,
    nodes: Mapping[str, ServiceNode],
    queryOffers: FrozenSet[ConceptId],
) -> bool:
    if producer == SOURCE:
        return concept in queryOffers
    return concept in onto.upwardClosure(nodes[producer].outputs)


def validatePlan(
    plan: CompositionPlan,
    nodes: Mapping[str, ServiceNode],
    onto: Ontology,
    query: Query,
) -> List[Violation]:
    """Structural checks of a plan against the services it names and the query."""
    violations: List[Violation] = []
    for sid in sorted(plan.nodes - nodes.keys()):
        violations.append(Violation("unknown-service", sid, "not a known service"))
    if violations:
        return violations

    for producer, consumer, concept in sorted(plan.producerEdges):
        if producer != SOURCE and producer not in plan.nodes:
            violations.append(
                Violation(
                    "dangling-edge",
                    producer,
                    "produces {} outside the plan".format(concept),
                )
            )
        if consumer != SINK and consumer not in plan.nodes:
            violations.append(
                Violation(
                    "dangling-edge",
                    consumer,
                    "consumes {} outside the plan".format(concept),
                )
            )
    if violations:
        return violations

    if not nx.is_directed_acyclic_graph(_planGraph(plan)):
        violations.append(
            Violation("cyclic-plan", "plan", "producer edges contain a cycle")
        )

    queryOffers = onto.upwardClosure(conceptsOf(onto, query.inputs))
    demands: List[Tuple[str, FrozenSet[ConceptId]]] = [
        (sid, nodes[sid].inputs) for sid in sorted(plan.nodes)
    ]
    demands.append((SINK, conceptsOf(onto, query.outputs)))
    for consumer, concepts in demands:
        producers = plan.producersOf(consumer)
        for concept in sorted(concepts):
            producer = producers.get(concept)
            subject = "query" if consumer == SINK else consumer
            if producer is None:
                kind = "uncovered-output" if consumer == SINK else "uncovered-input"
                violations.append(Violation(kind, subject, "nothing produces " + concept))
            elif not _offered(onto, producer, concept, nodes, queryOffers):
                violations.append(
                    Violation(
                        "bad-edge",
                        subject,
                        "{} does not offer {}".format(producer, concept),
                    )
                )

    knowledge = Condition()
    for producer in set(plan.outputProducers().values()):
        knowledge = knowledge.conjoin(
            query.inputSpec if producer == SOURCE else nodes[producer].post
        )
    if not implies(onto, knowledge, query.outputReq):
        violations.append(
            Violation(
                "unmet-output-requirement",
                "query",
                "output producers do not imply {}".format(query.outputReq),
            )
        )
    return violations
