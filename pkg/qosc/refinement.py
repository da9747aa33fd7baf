"""Partial and complete refinement, and the orchestrator that ties the levels together.

Partial refinement keeps an abstract plan's topology and re-selects representatives with
weights derived from the violated constraints. Complete refinement drops one abstraction
level and composes again. The orchestrator only returns plans it has verified at level 0.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple
import logging

from .abstraction import (
    LEVELS,
    AbstractionHierarchy,
    dependencyGraphAt,
    selectRepresentative,
)
from .composition import (
    DependencyGraph,
    aggregateQos,
    findConstrained,
    optimalSingleQos,
    reconstruct,
    topologicalOrder,
    validatePlan,
)
from .errors import NoSolutionError, RefinementError, Violation
from .model import (
    SINK,
    SOURCE,
    CompositionPlan,
    Constraint,
    Polarity,
    QoSSpec,
    Query,
    ServiceNode,
    satisfiesConstraints,
    specsByName,
    violatedConstraints,
)
from .ontology import AtomId, ConceptId, Condition, implies
from .util import Deadline

logger = logging.getLogger(__name__)


class RefinementOutcome(Enum):
    SATISFIED = "satisfied"
    DECLINED = "declined"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class QoSBounds:
    """Extremes per pool and per plan.

    ``pools`` maps each plan node to ``(min, max)`` per QoS parameter over the services
    that may represent it; ``aggregated`` holds ``(Aggr_min, Aggr_max)`` per parameter.
    """

    pools: Mapping[str, Mapping[str, Tuple[float, float]]]
    aggregated: Mapping[str, Tuple[float, float]]

    def best(self, spec: QoSSpec) -> float:
        low, high = self.aggregated[spec.name]
        return high if spec.polarity == Polarity.POSITIVE else low

    def worst(self, spec: QoSSpec) -> float:
        low, high = self.aggregated[spec.name]
        return low if spec.polarity == Polarity.POSITIVE else high


@dataclass
class RefinementSession:
    """One partial-refinement attempt. Discarded after the query; never touches defaults."""

    plan: CompositionPlan
    violated: Tuple[Constraint, ...]
    bounds: Optional[QoSBounds] = None
    normalized: Dict[str, float] = field(default_factory=dict)
    recomputedWeights: Dict[str, float] = field(default_factory=dict)
    rebindings: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    outcome: RefinementOutcome = RefinementOutcome.DECLINED
    refined: Optional[CompositionPlan] = None

    def toDict(self) -> Dict[str, Any]:
        return {
            "violated": [{"qos": c.qos, "bound": c.bound} for c in self.violated],
            "aggregated_bounds": (
                {k: list(v) for k, v in sorted(self.bounds.aggregated.items())}
                if self.bounds is not None
                else None
            ),
            "normalized": dict(sorted(self.normalized.items())),
            "weights": dict(sorted(self.recomputedWeights.items())),
            "rebindings": {k: list(v) for k, v in sorted(self.rebindings.items())},
            "outcome": self.outcome.value,
            "qos": dict(self.refined.qos) if self.refined is not None else None,
        }


def _flatten(
    hierarchy: AbstractionHierarchy, chainPrefix: Tuple[str, ...]
) -> Dict[str, Tuple[str, ...]]:
    """Every level-0 service reachable below the last id of ``chainPrefix``, with its chain."""
    head = chainPrefix[-1]
    if hierarchy.levelOf(head) == 0:
        return {head: chainPrefix}
    result: Dict[str, Tuple[str, ...]] = {}
    for child in hierarchy.pool(head):
        for sid, chain in _flatten(hierarchy, chainPrefix + (child,)).items():
            result.setdefault(sid, chain)
    return result


def level2Candidates(
    node: str,
    plan: CompositionPlan,
    query: Query,
    hierarchy: AbstractionHierarchy,
    dg: DependencyGraph,
    members: Optional[Sequence[str]] = None,
) -> Set[str]:
    """Level-1 services that may stand in for a plan node without breaking the plan.

    A member qualifies when it is activated with what the node was activated with, it
    offers every concept the node alone supplies to its consumers, and its postcondition
    implies the atoms only this node's postcondition contributes to the output requirement
    or to its consumers' preconditions.

    Args:
        node: A plan node at level 2, or at level 3 when ``members`` is given.
        members: Level-1 ids to screen; the node's own group by default.
    """
    onto = hierarchy.onto
    if members is None:
        members = hierarchy.pool(node)
    level1 = hierarchy.nodes(1)
    abstract = dg.nodes[node]

    layer = dg.layerOf(node)
    offered = onto.upwardClosure(dg.availableConcepts[layer])
    knowledge = dg.knowledge[layer]

    order = topologicalOrder(plan)
    position = {sid: k for k, sid in enumerate(order)}
    position[SINK] = len(order)
    queryOffers = onto.upwardClosure(plan.sourceConcepts)
    offers = {sid: onto.upwardClosure(dg.nodes[sid].outputs) for sid in plan.nodes}

    demanded: Set[ConceptId] = set()
    consumers: Set[str] = set()
    for producer, consumer, concept in plan.producerEdges:
        if producer != node:
            continue
        consumers.add(consumer)
        if concept in queryOffers:
            continue
        others = [
            sid
            for sid in plan.nodes
            if sid != node and position[sid] < position[consumer] and concept in offers[sid]
        ]
        if not others:
            demanded.add(concept)

    wanted: Set[AtomId] = set(query.outputReq.atoms)
    for consumer in consumers:
        if consumer != SINK:
            wanted |= dg.nodes[consumer].pre.atoms
    elsewhere = Condition(query.inputSpec.atoms)
    for sid in plan.nodes:
        if sid != node:
            elsewhere = elsewhere.conjoin(dg.nodes[sid].post)
    contributed = onto.entailed(abstract.post) - onto.entailed(elsewhere)
    required = frozenset(wanted) & contributed

    eligible = set()
    for mid in members:
        member = level1[mid]
        if not member.inputs <= offered:
            continue
        if not implies(onto, knowledge, member.pre):
            continue
        if not required <= onto.entailed(member.post):
            continue
        if not demanded <= onto.upwardClosure(member.outputs):
            continue
        eligible.add(mid)
    return eligible


def refinementPools(
    plan: CompositionPlan,
    query: Query,
    hierarchy: AbstractionHierarchy,
    dg: Optional[DependencyGraph] = None,
) -> Dict[str, Dict[str, Tuple[str, ...]]]:
    """Per plan node, the level-0 services that may represent it, each with its chain.

    Services currently bound to another plan node are left out. Plans above level 1
    need the dependency graph they were solved in.
    """
    if plan.level >= 2 and dg is None:
        raise RefinementError("screening level-2 candidates needs the dependency graph")
    pools: Dict[str, Dict[str, Tuple[str, ...]]] = {}
    for node in sorted(plan.nodes):
        if plan.level == 1:
            pool = _flatten(hierarchy, (node,))
        elif plan.level == 2:
            assert dg is not None
            pool = {}
            for s1 in sorted(level2Candidates(node, plan, query, hierarchy, dg)):
                for sid, chain in _flatten(hierarchy, (node, s1)).items():
                    pool.setdefault(sid, chain)
        else:
            assert dg is not None
            pool = {}
            for s2 in hierarchy.pool(node):
                eligible = level2Candidates(
                    node, plan, query, hierarchy, dg, hierarchy.pool(s2)
                )
                for s1 in sorted(eligible):
                    for sid, chain in _flatten(hierarchy, (node, s2, s1)).items():
                        pool.setdefault(sid, chain)
        pools[node] = pool

    taken = {plan.bindings[node][-1]: node for node in plan.nodes if node in plan.bindings}
    for node, pool in pools.items():
        for sid in list(pool):
            if sid in taken and taken[sid] != node:
                del pool[sid]
        own = plan.bindings.get(node)
        if own is not None and own[-1] not in pool:
            pool[own[-1]] = own
    return pools


def planBounds(
    plan: CompositionPlan,
    hierarchy: AbstractionHierarchy,
    pools: Optional[Mapping[str, Sequence[str]]] = None,
) -> QoSBounds:
    """Aggregated best and worst QoS over every way of re-binding the plan's nodes.

    Args:
        plan: An abstract plan.
        hierarchy: The hierarchy the plan was solved against.
        pools: Level-0 candidates per node; all services below each node by default.
    """
    if plan.level < 1:
        raise RefinementError("bounds are only defined for abstract plans")
    base = hierarchy.nodes(0)
    perNode: Dict[str, Dict[str, Tuple[float, float]]] = {}
    for node in sorted(plan.nodes):
        members = pools[node] if pools is not None else list(_flatten(hierarchy, (node,)))
        perNode[node] = {
            spec.name: (
                min(base[sid].qos[spec.name] for sid in members),
                max(base[sid].qos[spec.name] for sid in members),
            )
            for spec in hierarchy.specs
        }

    # every aggregation operator is monotone in each node value
    lows = replace(
        plan,
        nodeQos={n: {k: v[0] for k, v in values.items()} for n, values in perNode.items()},
    )
    highs = replace(
        plan,
        nodeQos={n: {k: v[1] for k, v in values.items()} for n, values in perNode.items()},
    )
    low, high = aggregateQos(lows, hierarchy.specs), aggregateQos(highs, hierarchy.specs)
    return QoSBounds(
        pools=perNode,
        aggregated={spec.name: (low[spec.name], high[spec.name]) for spec in hierarchy.specs},
    )


def partialRefine(
    plan: CompositionPlan,
    query: Query,
    hierarchy: AbstractionHierarchy,
    dg: Optional[DependencyGraph] = None,
) -> RefinementSession:
    """Re-select the representatives of a constraint-violating abstract plan once.

    The session's ``refined`` plan is set only when the outcome is ``SATISFIED``.

    Raises:
        RefinementError: If the plan is concrete or already satisfies every constraint.
    """
    if plan.level < 1:
        raise RefinementError("only abstract plans can be refined")
    declared = specsByName(hierarchy.specs)
    violated = tuple(violatedConstraints(plan.qos, query.constraints, declared))
    if not violated:
        raise RefinementError("plan already satisfies every constraint")
    if plan.level >= 2 and dg is None:
        dg = dependencyGraphAt(hierarchy, query, plan.level)

    session = RefinementSession(plan=plan, violated=violated)
    chains = refinementPools(plan, query, hierarchy, dg)
    bounds = planBounds(plan, hierarchy, {n: list(p) for n, p in chains.items()})
    session.bounds = bounds

    for constraint in query.constraints:
        spec = declared[constraint.qos]
        if not spec.satisfies(bounds.best(spec), constraint.bound):
            logger.warning(
                "partial refinement declined: best %s %s cannot meet %s",
                spec.name,
                bounds.best(spec),
                constraint.bound,
            )
            return session

    normalized = {spec.name: 0.0 for spec in hierarchy.specs}
    for constraint in query.constraints:
        spec = declared[constraint.qos]
        if spec.satisfies(bounds.worst(spec), constraint.bound):
            continue
        low, high = bounds.aggregated[spec.name]
        if high == low:
            value = 1.0
        elif spec.polarity == Polarity.POSITIVE:
            value = (constraint.bound - low) / (high - low)
        else:
            value = (high - constraint.bound) / (high - low)
        # two bounds on one parameter: the tighter one decides
        normalized[spec.name] = max(normalized[spec.name], value)
    session.normalized = normalized

    total = sum(normalized.values())
    if total <= 0:
        logger.warning("partial refinement declined: every parameter is ignored")
        return session
    weights = {name: value / total for name, value in normalized.items()}
    session.recomputedWeights = weights

    base = hierarchy.nodes(0)
    used: Set[str] = set()
    standIns: Dict[str, ServiceNode] = {}
    for node in topologicalOrder(plan):
        pool = [
            base[sid]
            for sid in sorted(chains[node])
            if sid not in used and _fitsEdges(hierarchy, base[sid], node, plan, standIns)
        ]
        if not pool:
            logger.warning("partial refinement exhausted: no member of %s fits its edges", node)
            session.outcome = RefinementOutcome.EXHAUSTED
            session.rebindings = {}
            return session
        choice = selectRepresentative(pool, weights, hierarchy.specs)
        used.add(choice)
        standIns[node] = base[choice]
        session.rebindings[node] = chains[node][choice]

    refined = _rebind(plan, session.rebindings, hierarchy)
    if satisfiesConstraints(refined.qos, query.constraints, declared):
        session.outcome = RefinementOutcome.SATISFIED
        session.refined = refined
    else:
        session.outcome = RefinementOutcome.EXHAUSTED
    logger.info(
        "partial refinement %s with weights %s", session.outcome.value, weights
    )
    return session


def _fitsEdges(
    hierarchy: AbstractionHierarchy,
    member: ServiceNode,
    node: str,
    plan: CompositionPlan,
    standIns: Mapping[str, ServiceNode],
) -> bool:
    """Whether ``member`` can sit at ``node`` with the plan's edges left as they are.

    It must offer every concept the node hands on, and every input it needs must be
    offered by the producers already feeding the node. ``standIns`` holds the services
    chosen for those producers.
    """
    onto = hierarchy.onto
    offers = onto.upwardClosure(member.outputs)
    fed: Set[ConceptId] = set()
    for producer, consumer, concept in plan.producerEdges:
        if producer == node and concept not in offers:
            return False
        if consumer != node:
            continue
        if producer == SOURCE:
            fed |= onto.upwardClosure(plan.sourceConcepts)
        else:
            fed |= onto.upwardClosure(standIns[producer].outputs)
    return member.inputs <= fed


def _rebind(
    plan: CompositionPlan,
    rebindings: Mapping[str, Tuple[str, ...]],
    hierarchy: AbstractionHierarchy,
) -> CompositionPlan:
    base = hierarchy.nodes(0)
    bindings = dict(plan.bindings)
    bindings.update(rebindings)
    # nodes and producer edges stay; only bindings and node QoS change
    refined = replace(
        plan,
        nodeQos={node: base[bindings[node][-1]].qos for node in plan.nodes},
        bindings=bindings,
    )
    return replace(refined, qos=aggregateQos(refined, hierarchy.specs))


def completeRefine(level: int) -> int:
    """The level to compose at after abandoning ``level``."""
    if level <= 0:
        raise RefinementError("level 0 has nothing to revert to")
    if level > 3:
        raise RefinementError("unknown abstraction level {}".format(level))
    return level - 1


@dataclass(frozen=True)
class TraceStep:
    level: int
    action: str
    outcome: str
    details: Mapping[str, Any] = field(default_factory=dict, hash=False)

    def toDict(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "action": self.action,
            "outcome": self.outcome,
            "details": dict(self.details),
        }


@dataclass(frozen=True)
class CompositionResult:
    plan: CompositionPlan
    levelUsed: int
    abstractPlan: CompositionPlan
    trace: Tuple[TraceStep, ...]

    @property
    def refinement(self) -> str:
        """How the plan was reached: ``none``, ``partial`` or ``complete``."""
        if any(step.action == "complete-refinement" for step in self.trace):
            return "complete"
        if any(
            step.action == "partial-refinement" and step.outcome == "satisfied"
            for step in self.trace
        ):
            return "partial"
        return "none"


def verifyPlan(
    plan: CompositionPlan,
    dg0: DependencyGraph,
    query: Query,
    hierarchy: AbstractionHierarchy,
) -> List[Violation]:
    """Every check a returned level-0 plan must pass.

    Besides plan validation and the constraints, each service must be activated for the
    query and fed only by the query or by services activated before it.
    """
    violations = validatePlan(plan, hierarchy.nodes(0), hierarchy.onto, query)
    for sid in sorted(plan.nodes):
        if sid not in dg0.nodes:
            violations.append(
                Violation("not-activated", sid, "not activated by the query")
            )
    if violations:
        return violations
    for producer, consumer, concept in sorted(plan.producerEdges):
        if producer == SOURCE or consumer == SINK:
            continue
        if dg0.layerOf(producer) >= dg0.layerOf(consumer):
            violations.append(
                Violation(
                    "layer-order",
                    consumer,
                    "{} from {} is not activated earlier".format(concept, producer),
                )
            )
    declared = specsByName(hierarchy.specs)
    for constraint in violatedConstraints(plan.qos, query.constraints, declared):
        violations.append(
            Violation(
                "constraint",
                constraint.qos,
                "{} misses bound {}".format(plan.qos[constraint.qos], constraint.bound),
            )
        )
    return violations


def _refinementTarget(query: Query) -> Optional[str]:
    if query.objectives:
        return query.objectives[0].qos
    if query.constraints:
        return query.constraints[0].qos
    return None


def composeWithRefinement(
    hierarchy: AbstractionHierarchy,
    query: Query,
    startLevel: int = 3,
    deadline: Optional[Deadline] = None,
    refine: bool = True,
) -> CompositionResult:
    """Compose at ``startLevel`` and refine until a verified level-0 plan is found.

    At each level the constrained search runs first. When it finds nothing, the plan
    optimal on the first objective is partially refined. When that fails too, the next
    level down is tried. At level 0 the search is exhaustive. With ``refine=False`` only
    ``startLevel`` is searched.

    Raises:
        NoSolutionError: If no plan satisfies the query even at level 0.
        DeadlineExceeded: If ``deadline`` expires; never reported as no solution.
    """
    deadline = deadline or Deadline(None)
    if startLevel not in LEVELS:
        raise RefinementError("unknown abstraction level {}".format(startLevel))
    level = startLevel

    dg0 = dependencyGraphAt(hierarchy, query, 0)
    trace: List[TraceStep] = []
    while True:
        dg = dg0 if level == 0 else dependencyGraphAt(hierarchy, query, level)
        logger.info("composing at level %d over %d services", level, len(dg))

        found = findConstrained(dg, query, hierarchy.specs, deadline)
        if found is not None:
            final = reconstruct(found, hierarchy)
            problems = verifyPlan(final, dg0, query, hierarchy)
            trace.append(
                TraceStep(
                    level,
                    "solve",
                    "found" if not problems else "rejected",
                    {"qos": dict(found.qos), "violations": [str(v) for v in problems]},
                )
            )
            if not problems:
                return CompositionResult(final, level, found, tuple(trace))
        else:
            trace.append(TraceStep(level, "solve", "none"))

        if refine and level > 0 and found is None:
            result = _tryPartial(hierarchy, query, dg, dg0, deadline, level, trace)
            if result is not None:
                return result

        if level == 0 or not refine:
            raise NoSolutionError(
                "no plan satisfies the query at level {}".format(level), trace
            )
        trace.append(TraceStep(level, "complete-refinement", "reverted"))
        level = completeRefine(level)


def _tryPartial(
    hierarchy: AbstractionHierarchy,
    query: Query,
    dg: DependencyGraph,
    dg0: DependencyGraph,
    deadline: Deadline,
    level: int,
    trace: List[TraceStep],
) -> Optional[CompositionResult]:
    target = _refinementTarget(query)
    if target is None:
        return None
    try:
        candidate = optimalSingleQos(dg, query, target, hierarchy.specs, deadline)
    except NoSolutionError:
        trace.append(TraceStep(level, "partial-refinement", "no-candidate"))
        return None
    declared = specsByName(hierarchy.specs)
    if satisfiesConstraints(candidate.qos, query.constraints, declared):
        # the search already rejected it at level 0
        return None

    session = partialRefine(candidate, query, hierarchy, dg)
    trace.append(
        TraceStep(level, "partial-refinement", session.outcome.value, session.toDict())
    )
    if session.refined is None:
        return None
    final = reconstruct(session.refined, hierarchy)
    problems = verifyPlan(final, dg0, query, hierarchy)
    if problems:
        trace.append(
            TraceStep(
                level, "verify", "rejected", {"violations": [str(v) for v in problems]}
            )
        )
        return None
    return CompositionResult(final, level, session.refined, tuple(trace))
