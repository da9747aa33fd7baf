"""The three abstraction levels built at preprocessing time.

Level 1 partitions the repository into functionally equivalent classes, level 2 keeps
one group per non-dominated class, and level 3 turns the IIOE graph over level-2
services into trees. Every abstract service is backed by a representative one level
down; its binding chain ends at a concrete service whose QoS it lends.
"""

from dataclasses import dataclass, field, replace
from typing import (
    Any,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)
import logging

import networkx as nx
import numpy as np

from .composition import DependencyGraph, buildDependencyGraph
from .model import (
    Polarity,
    QoSSpec,
    Query,
    ServiceDescriptor,
    ServiceNode,
    nodeFromService,
)
from .ontology import (
    ConceptId,
    Ontology,
    canonicalCondition,
    equivalentConditions,
    implies,
)
from .util import stableDigest

logger = logging.getLogger(__name__)

LEVELS = (0, 1, 2, 3)

Service = Union[ServiceDescriptor, ServiceNode]


def _asNode(onto: Ontology, service: Service) -> ServiceNode:
    if isinstance(service, ServiceDescriptor):
        return nodeFromService(onto, service)
    return service


def _covers(onto: Ontology, specific: Iterable[ConceptId], general: ConceptId) -> bool:
    return any(general in onto.supersOf(c) for c in specific)


def equivalent(onto: Ontology, s1: Service, s2: Service) -> bool:
    """Same input and output concepts, equivalent pre- and postconditions."""
    a, b = _asNode(onto, s1), _asNode(onto, s2)
    return (
        a.inputs == b.inputs
        and a.outputs == b.outputs
        and equivalentConditions(onto, a.pre, b.pre)
        and equivalentConditions(onto, a.post, b.post)
    )


def _signatureKey(onto: Ontology, node: ServiceNode) -> Tuple[Any, ...]:
    return (
        node.inputs,
        node.outputs,
        canonicalCondition(onto, node.pre),
        canonicalCondition(onto, node.post),
    )


def _normalized(values: np.ndarray, polarity: Polarity) -> np.ndarray:
    low, high = values.min(), values.max()
    if high == low:
        return np.ones_like(values)
    if polarity == Polarity.POSITIVE:
        return (values - low) / (high - low)
    return (high - values) / (high - low)


def normalizeQos(
    members: Sequence[ServiceNode], specs: Sequence[QoSSpec]
) -> Dict[Tuple[str, str], float]:
    """Min-max normalise each parameter within ``members`` so that 1 is the best value.

    A parameter on which all members agree normalises to 1 for every member.
    """
    if not members:
        raise ValueError("cannot normalise an empty set of services")
    result: Dict[Tuple[str, str], float] = {}
    for spec in specs:
        values = np.array([m.qos[spec.name] for m in members], dtype=float)
        for member, value in zip(members, _normalized(values, spec.polarity)):
            result[(member.id, spec.name)] = float(value)
    return result


def defaultWeights(specs: Sequence[QoSSpec]) -> Dict[str, float]:
    return {spec.name: 1.0 / len(specs) for spec in specs} if specs else {}


def selectRepresentative(
    members: Sequence[ServiceNode],
    weights: Mapping[str, float],
    specs: Sequence[QoSSpec],
) -> str:
    """The member with the largest weighted sum of normalised QoS.

    Ties go to the smallest id.
    """
    if not members:
        raise ValueError("cannot select a representative of an empty set")
    for name, weight in weights.items():
        if not 0.0 <= weight <= 1.0:
            raise ValueError("weight of {} must lie in [0, 1], got {}".format(name, weight))

    ordered = sorted(members, key=lambda m: m.id)
    if not specs:
        return ordered[0].id
    matrix = np.column_stack(
        [
            _normalized(
                np.array([m.qos[spec.name] for m in ordered], dtype=float),
                spec.polarity,
            )
            for spec in specs
        ]
    )
    vector = np.array([weights.get(spec.name, 0.0) for spec in specs], dtype=float)
    scores = matrix @ vector
    return ordered[int(np.argmax(scores))].id


@dataclass(frozen=True)
class EquivalenceClass:
    abstractId: str
    members: Tuple[str, ...]
    signature: ServiceNode = field(repr=False)
    representative: str
    weightsUsed: Mapping[str, float] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class DominanceGroup:
    abstractId: str
    root: str
    members: Tuple[str, ...]


@dataclass(frozen=True)
class IioeTree:
    abstractId: str
    root: str
    treeMembers: Tuple[str, ...]
    representative: str


def partitionLevel1(
    onto: Ontology,
    services: Sequence[Service],
    specs: Sequence[QoSSpec],
    weights: Optional[Mapping[str, float]] = None,
) -> List[EquivalenceClass]:
    """Partition services into equivalence classes ``S1_0``, ``S1_1``, ...

    Classes are numbered by their smallest member id; the signature is taken from that
    member.
    """
    weights = dict(weights) if weights is not None else defaultWeights(specs)
    buckets: Dict[Tuple[Any, ...], List[ServiceNode]] = {}
    for service in services:
        node = _asNode(onto, service)
        buckets.setdefault(_signatureKey(onto, node), []).append(node)

    groups = sorted(
        (sorted(bucket, key=lambda n: n.id) for bucket in buckets.values()),
        key=lambda bucket: bucket[0].id,
    )
    classes = []
    for k, bucket in enumerate(groups):
        classes.append(
            EquivalenceClass(
                abstractId="S1_{}".format(k),
                members=tuple(n.id for n in bucket),
                signature=bucket[0],
                representative=selectRepresentative(bucket, weights, specs),
                weightsUsed=weights,
            )
        )
    logger.debug("level 1: %d services in %d classes", len(services), len(classes))
    return classes


def outputEquivalent(onto: Ontology, a: ServiceNode, b: ServiceNode) -> bool:
    """Each output set covers the other by sub-concepts and the postconditions agree."""
    return (
        all(_covers(onto, a.outputs, o) for o in b.outputs)
        and all(_covers(onto, b.outputs, o) for o in a.outputs)
        and equivalentConditions(onto, a.post, b.post)
    )


def dominates(onto: Ontology, a: ServiceNode, b: ServiceNode) -> bool:
    """Whether ``a`` is usable whenever ``b`` is and produces at least as much.

    Every input of ``a`` is a super-concept of some input of ``b``; every output of ``b``
    has a sub-concept among ``a``'s outputs; ``b``'s precondition implies ``a``'s and
    ``a``'s postcondition implies ``b``'s; and the two are not output equivalent.
    """
    return (
        all(_covers(onto, b.inputs, i) for i in a.inputs)
        and all(_covers(onto, a.outputs, o) for o in b.outputs)
        and implies(onto, b.pre, a.pre)
        and implies(onto, a.post, b.post)
        and not outputEquivalent(onto, a, b)
    )


def _outputIndex(onto: Ontology, nodes: Sequence[ServiceNode]) -> Dict[ConceptId, Set[str]]:
    # concept -> services with an output subsumed by it
    index: Dict[ConceptId, Set[str]] = {}
    for node in nodes:
        for concept in onto.upwardClosure(node.outputs):
            index.setdefault(concept, set()).add(node.id)
    return index


def buildLevel2(onto: Ontology, level1: Sequence[ServiceNode]) -> List[DominanceGroup]:
    """One group ``S2_k`` per non-dominated level-1 service, with what it dominates."""
    byId = {node.id: node for node in level1}
    index = _outputIndex(onto, level1)

    dominators: Dict[str, List[str]] = {node.id: [] for node in level1}
    for b in level1:
        candidates: Optional[Set[str]] = None
        for concept in b.outputs:
            found = index.get(concept, set())
            candidates = set(found) if candidates is None else candidates & found
        for aid in sorted(candidates or ()):
            if aid != b.id and dominates(onto, byId[aid], b):
                dominators[b.id].append(aid)

    roots = [node.id for node in level1 if not dominators[node.id]]
    groups = []
    for k, root in enumerate(roots):
        dominated = [sid for sid, above in dominators.items() if root in above]
        groups.append(
            DominanceGroup(
                abstractId="S2_{}".format(k),
                root=root,
                members=(root, *sorted(dominated, key=_idOrder)),
            )
        )
    logger.debug("level 2: %d groups from %d services", len(groups), len(level1))
    return groups


def _idOrder(abstractId: str) -> Tuple[str, int]:
    prefix, _, index = abstractId.rpartition("_")
    if index.isdigit():
        return (prefix, int(index))
    return (abstractId, -1)


def iioe(onto: Ontology, a: ServiceNode, b: ServiceNode) -> bool:
    """Whether activating ``a`` always activates ``b``, which produces the same outputs."""
    return (
        outputEquivalent(onto, a, b)
        and all(_covers(onto, a.inputs, i) for i in b.inputs)
        and implies(onto, a.pre, b.pre)
    )


def _minimalConcepts(onto: Ontology, concepts: FrozenSet[ConceptId]) -> FrozenSet[ConceptId]:
    return frozenset(
        c
        for c in concepts
        if not any(o != c and c in onto.supersOf(o) for o in concepts)
    )


def buildIioeGraph(
    onto: Ontology,
    level2: Sequence[ServiceNode],
    specs: Sequence[QoSSpec],
    weights: Optional[Mapping[str, float]] = None,
) -> Tuple["nx.DiGraph[str]", List[IioeTree]]:
    """IIOE graph over level-2 services and one tree ``S3_k`` per service.

    Mutually IIOE services collapse into one graph node named by the first of them;
    the node's ``members`` attribute lists them all. Transitive edges are removed. A
    tree holds its root and everything reachable from it.
    """
    weights = dict(weights) if weights is not None else defaultWeights(specs)
    byId = {node.id: node for node in level2}

    buckets: Dict[Tuple[Any, ...], List[ServiceNode]] = {}
    for node in level2:
        key = (_minimalConcepts(onto, node.outputs), canonicalCondition(onto, node.post))
        buckets.setdefault(key, []).append(node)

    raw: "nx.DiGraph[str]" = nx.DiGraph()
    raw.add_nodes_from(byId)
    for bucket in buckets.values():
        for a in bucket:
            for b in bucket:
                if a.id != b.id and iioe(onto, a, b):
                    raw.add_edge(a.id, b.id)

    condensed = nx.condensation(raw)
    members = {
        scc: sorted(data["members"], key=_idOrder)
        for scc, data in condensed.nodes(data=True)
    }
    reduced = nx.transitive_reduction(condensed)

    graph: "nx.DiGraph[str]" = nx.DiGraph()
    for scc in reduced.nodes:
        graph.add_node(members[scc][0], members=tuple(members[scc]))
    graph.add_edges_from((members[u][0], members[v][0]) for u, v in reduced.edges)

    sccOf = condensed.graph["mapping"]
    trees = []
    for k, node in enumerate(level2):
        scc = sccOf[node.id]
        reach = {scc} | nx.descendants(condensed, scc)
        treeMembers = sorted((m for s in reach for m in members[s]), key=_idOrder)
        trees.append(
            IioeTree(
                abstractId="S3_{}".format(k),
                root=node.id,
                treeMembers=tuple(treeMembers),
                representative=selectRepresentative(
                    [byId[m] for m in treeMembers], weights, specs
                ),
            )
        )
    logger.debug(
        "level 3: %d trees, %d IIOE edges after reduction",
        len(trees),
        graph.number_of_edges(),
    )
    return graph, trees


@dataclass(frozen=True)
class AbstractionHierarchy:
    """Immutable result of preprocessing a repository.

    Representatives chosen here are the defaults; per-query rebinding lives in plan
    bindings and never mutates the hierarchy.
    """

    onto: Ontology = field(repr=False, compare=False)
    specs: Tuple[QoSSpec, ...]
    weights: Mapping[str, float] = field(hash=False)
    level0: Mapping[str, ServiceNode] = field(repr=False, hash=False)
    level1: Tuple[EquivalenceClass, ...]
    level2: Tuple[DominanceGroup, ...]
    level3: Tuple[IioeTree, ...]
    iioeGraph: "nx.DiGraph[str]" = field(repr=False, compare=False, hash=False)
    digest: str = ""

    _nodes: Dict[int, Dict[str, ServiceNode]] = field(
        default_factory=dict, init=False, repr=False, compare=False, hash=False
    )
    _pools: Dict[str, Tuple[str, ...]] = field(
        default_factory=dict, init=False, repr=False, compare=False, hash=False
    )
    _defaults: Dict[str, str] = field(
        default_factory=dict, init=False, repr=False, compare=False, hash=False
    )
    _treeByRoot: Dict[str, IioeTree] = field(
        default_factory=dict, init=False, repr=False, compare=False, hash=False
    )
    _treeById: Dict[str, IioeTree] = field(
        default_factory=dict, init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self) -> None:
        self._nodes[0] = dict(self.level0)
        self._nodes[1] = {
            c.abstractId: replace(
                c.signature,
                id=c.abstractId,
                level=1,
                qos=self.level0[c.representative].qos,
            )
            for c in self.level1
        }
        self._nodes[2] = {
            g.abstractId: replace(self._nodes[1][g.root], id=g.abstractId, level=2)
            for g in self.level2
        }
        self._nodes[3] = {
            t.abstractId: replace(
                self._nodes[2][t.root],
                id=t.abstractId,
                level=3,
                qos=self._nodes[2][t.representative].qos,
            )
            for t in self.level3
        }
        self._pools.update({c.abstractId: c.members for c in self.level1})
        self._pools.update({g.abstractId: g.members for g in self.level2})
        self._pools.update({t.abstractId: t.treeMembers for t in self.level3})
        self._defaults.update({c.abstractId: c.representative for c in self.level1})
        self._defaults.update({g.abstractId: g.root for g in self.level2})
        self._defaults.update({t.abstractId: t.representative for t in self.level3})
        self._treeByRoot.update({t.root: t for t in self.level3})
        self._treeById.update({t.abstractId: t for t in self.level3})

    def nodes(self, level: int) -> Dict[str, ServiceNode]:
        if level not in LEVELS:
            raise ValueError("abstraction level must be one of 0..3, got {}".format(level))
        return self._nodes[level]

    def levelOf(self, sid: str) -> int:
        for level in LEVELS:
            if sid in self._nodes[level]:
                return level
        raise KeyError(sid)

    def pool(self, abstractId: str) -> Tuple[str, ...]:
        """The ids one level down that may represent ``abstractId``."""
        return self._pools[abstractId]

    def defaultChain(self, sid: str) -> Tuple[str, ...]:
        chain = [sid]
        while chain[-1] in self._defaults:
            chain.append(self._defaults[chain[-1]])
        return tuple(chain)

    def rootChain(self, abstractId: str) -> Tuple[str, ...]:
        """Chain of a final-level service through its own tree root."""
        return (abstractId, *self.defaultChain(self._treeById[abstractId].root))

    def isValidChain(self, chain: Sequence[str]) -> bool:
        if not chain or chain[-1] not in self._nodes[0]:
            return False
        for upper, lower in zip(chain, chain[1:]):
            if lower not in self._pools.get(upper, ()):
                return False
        return True

    def trees(self) -> Dict[str, FrozenSet[str]]:
        """Per final-level service, the other final-level services its tree covers.

        Of two mutually IIOE services only the first covers the other.
        """
        result = {}
        for tree in self.level3:
            covered = set()
            for member in tree.treeMembers:
                if member == tree.root:
                    continue
                other = self._treeByRoot[member]
                mutual = tree.root in other.treeMembers
                if not mutual or _idOrder(tree.root) < _idOrder(member):
                    covered.add(other.abstractId)
            result[tree.abstractId] = frozenset(covered)
        return result

    def counts(self) -> Dict[int, int]:
        return {level: len(self._nodes[level]) for level in LEVELS}


def _hierarchyPayload(
    level0: Mapping[str, ServiceNode],
    level1: Sequence[EquivalenceClass],
    level2: Sequence[DominanceGroup],
    level3: Sequence[IioeTree],
    graph: "nx.DiGraph[str]",
    weights: Mapping[str, float],
) -> Dict[str, Any]:
    return {
        "counts": {
            "level0": len(level0),
            "level1": len(level1),
            "level2": len(level2),
            "level3": len(level3),
        },
        "weights": dict(sorted(weights.items())),
        "level1": [
            {
                "id": c.abstractId,
                "members": list(c.members),
                "representative": c.representative,
            }
            for c in level1
        ],
        "level2": [
            {"id": g.abstractId, "root": g.root, "members": list(g.members)}
            for g in level2
        ],
        "level3": [
            {
                "id": t.abstractId,
                "root": t.root,
                "tree_members": list(t.treeMembers),
                "representative": t.representative,
            }
            for t in level3
        ],
        "iioe_edges": sorted([list(edge) for edge in graph.edges]),
    }


def buildHierarchy(
    onto: Ontology,
    services: Sequence[Service],
    specs: Sequence[QoSSpec],
    weights: Optional[Mapping[str, float]] = None,
) -> AbstractionHierarchy:
    """Build all three levels for a repository.

    Args:
        onto: The repository ontology.
        services: Level-0 services.
        specs: The declared QoS parameters.
        weights: Representative-selection weights; equal weights when omitted.
    """
    weights = dict(weights) if weights is not None else defaultWeights(specs)
    level0 = {node.id: node for node in (_asNode(onto, s) for s in services)}

    level1 = partitionLevel1(onto, list(level0.values()), specs, weights)
    level1Nodes = [
        replace(
            c.signature,
            id=c.abstractId,
            level=1,
            qos=level0[c.representative].qos,
        )
        for c in level1
    ]
    level2 = buildLevel2(onto, level1Nodes)
    byL1 = {node.id: node for node in level1Nodes}
    level2Nodes = [
        replace(byL1[g.root], id=g.abstractId, level=2) for g in level2
    ]
    graph, level3 = buildIioeGraph(onto, level2Nodes, specs, weights)

    payload = _hierarchyPayload(level0, level1, level2, level3, graph, weights)
    hierarchy = AbstractionHierarchy(
        onto=onto,
        specs=tuple(specs),
        weights=weights,
        level0=level0,
        level1=tuple(level1),
        level2=tuple(level2),
        level3=tuple(level3),
        iioeGraph=graph,
        digest=stableDigest(payload),
    )
    logger.info("abstraction counts: %s", hierarchy.counts())
    return hierarchy


def hierarchyReport(hierarchy: AbstractionHierarchy) -> Dict[str, Any]:
    """Class rosters, group rosters, trees and representatives, ready for JSON."""
    report = _hierarchyPayload(
        hierarchy.level0,
        hierarchy.level1,
        hierarchy.level2,
        hierarchy.level3,
        hierarchy.iioeGraph,
        hierarchy.weights,
    )
    report["digest"] = hierarchy.digest
    return report


def dependencyGraphAt(
    hierarchy: AbstractionHierarchy, query: Query, level: int
) -> DependencyGraph:
    """Dependency graph for ``query`` over the services of one level, with bindings.

    At the final level two services may default to the same level-2 representative;
    the later one then binds through its own tree root.
    """
    nodes = hierarchy.nodes(level)
    trees = hierarchy.trees() if level == 3 else None
    dg = buildDependencyGraph(hierarchy.onto, nodes.values(), query, level, trees)

    bindings: Dict[str, Tuple[str, ...]] = {}
    boundNodes: Dict[str, ServiceNode] = {}
    used: Set[str] = set()
    for sid in dg.serviceIds():
        chain = hierarchy.defaultChain(sid)
        if chain[-1] in used:
            chain = hierarchy.rootChain(sid)
        used.add(chain[-1])
        bindings[sid] = chain
        boundNodes[sid] = replace(dg.nodes[sid], qos=hierarchy.level0[chain[-1]].qos)

    return replace(
        dg, nodes=boundNodes, bindings=bindings, hierarchyDigest=hierarchy.digest
    )
