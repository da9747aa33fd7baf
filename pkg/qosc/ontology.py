"""Concepts, subsumption, the parameter-to-concept mapping and the condition language.

Conditions are conjunctions of named atoms. An atom may be declared stronger than
another (``size<50KB`` ⇒ ``size<100KB``); ``implies`` is subsumption over the closure of
those declarations. Concept subsumption and atom implication are independent lattices.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Tuple
import logging

import networkx as nx

from .errors import (
    UnknownAtomError,
    UnknownConceptError,
    UnknownParameterError,
    ValidationError,
    Violation,
)

logger = logging.getLogger(__name__)

ConceptId = str
AtomId = str


class Relation(Enum):
    EQUAL = "equal"
    SUB = "sub"
    SUPER = "super"
    UNRELATED = "unrelated"


@dataclass(frozen=True)
class Condition:
    """A conjunction of atoms. The empty condition is logically true."""

    atoms: FrozenSet[AtomId] = frozenset()

    @classmethod
    def of(cls, *atoms: AtomId) -> "Condition":
        return cls(frozenset(atoms))

    def conjoin(self, other: "Condition") -> "Condition":
        return Condition(self.atoms | other.atoms)

    def __str__(self) -> str:
        if not self.atoms:
            return "true"
        return " & ".join(sorted(self.atoms))


TRUE = Condition()


def _closure(graph: "nx.DiGraph[str]") -> Dict[str, FrozenSet[str]]:
    # edges point from a node to the nodes it entails (child -> parent, stronger -> weaker)
    return {
        node: frozenset(nx.descendants(graph, node)) | {node} for node in graph.nodes
    }


@dataclass(frozen=True)
class Ontology:
    """Immutable ontology. Build with ``Ontology.build`` so the invariants are checked."""

    concepts: FrozenSet[ConceptId]
    subsumptionEdges: FrozenSet[Tuple[ConceptId, ConceptId]]
    parameterMap: Mapping[str, ConceptId]
    atoms: FrozenSet[AtomId] = frozenset()
    atomImplications: FrozenSet[Tuple[AtomId, AtomId]] = frozenset()

    _supers: Dict[ConceptId, FrozenSet[ConceptId]] = field(
        default_factory=dict, init=False, repr=False, compare=False, hash=False
    )
    _weaker: Dict[AtomId, FrozenSet[AtomId]] = field(
        default_factory=dict, init=False, repr=False, compare=False, hash=False
    )

    @classmethod
    def build(
        cls,
        concepts: Iterable[ConceptId],
        subsumptionEdges: Iterable[Tuple[ConceptId, ConceptId]],
        parameterMap: Mapping[str, ConceptId],
        atoms: Iterable[AtomId] = (),
        atomImplications: Iterable[Tuple[AtomId, AtomId]] = (),
    ) -> "Ontology":
        """Create an ontology, raising ``ValidationError`` listing every violation."""
        onto = cls(
            concepts=frozenset(concepts),
            subsumptionEdges=frozenset(tuple(e) for e in subsumptionEdges),  # type: ignore
            parameterMap=dict(parameterMap),
            atoms=frozenset(atoms),
            atomImplications=frozenset(tuple(e) for e in atomImplications),  # type: ignore
        )
        violations = ontologyViolations(onto)
        if violations:
            raise ValidationError(violations)
        onto._index()
        return onto

    def _index(self) -> None:
        concepts: "nx.DiGraph[str]" = nx.DiGraph()
        concepts.add_nodes_from(self.concepts)
        concepts.add_edges_from(self.subsumptionEdges)
        self._supers.update(_closure(concepts))

        atoms: "nx.DiGraph[str]" = nx.DiGraph()
        atoms.add_nodes_from(self.atoms)
        atoms.add_edges_from(self.atomImplications)
        self._weaker.update(_closure(atoms))

        logger.debug(
            "indexed ontology: %d concepts, %d parameters, %d atoms",
            len(self.concepts),
            len(self.parameterMap),
            len(self.atoms),
        )

    def supersOf(self, concept: ConceptId) -> FrozenSet[ConceptId]:
        """All concepts ``c`` with ``concept ⊑ c``, including ``concept`` itself."""
        try:
            return self._supers[concept]
        except KeyError:
            raise UnknownConceptError(concept) from None

    def weakerAtoms(self, atom: AtomId) -> FrozenSet[AtomId]:
        """All atoms implied by ``atom``, including ``atom`` itself."""
        try:
            return self._weaker[atom]
        except KeyError:
            raise UnknownAtomError(atom) from None

    def entailed(self, condition: Condition) -> FrozenSet[AtomId]:
        """The closure of a condition: every atom it implies."""
        result: FrozenSet[AtomId] = frozenset()
        for atom in condition.atoms:
            result |= self.weakerAtoms(atom)
        return result

    def upwardClosure(self, concepts: Iterable[ConceptId]) -> FrozenSet[ConceptId]:
        """Every concept that some member of ``concepts`` is subsumed by."""
        result: FrozenSet[ConceptId] = frozenset()
        for concept in concepts:
            result |= self.supersOf(concept)
        return result


def ontologyViolations(onto: Ontology) -> List[Violation]:
    violations: List[Violation] = []

    for concept in sorted(onto.concepts):
        if not concept:
            violations.append(Violation("empty-id", "concept", "concept id is empty"))

    for child, parent in sorted(onto.subsumptionEdges):
        for end in (child, parent):
            if end not in onto.concepts:
                violations.append(
                    Violation(
                        "unknown-concept",
                        "{} ⊑ {}".format(child, parent),
                        "subsumption references undeclared concept {}".format(end),
                    )
                )

    concepts: "nx.DiGraph[str]" = nx.DiGraph(list(onto.subsumptionEdges))
    if not nx.is_directed_acyclic_graph(concepts):
        cycle = nx.find_cycle(concepts)
        violations.append(
            Violation(
                "cyclic-subsumption",
                " -> ".join(edge[0] for edge in cycle),
                "subsumption must be a strict partial order",
            )
        )

    for param, concept in sorted(onto.parameterMap.items()):
        if concept not in onto.concepts:
            violations.append(
                Violation(
                    "unknown-concept",
                    param,
                    "parameter maps to undeclared concept {}".format(concept),
                )
            )

    for stronger, weaker in sorted(onto.atomImplications):
        for end in (stronger, weaker):
            if end not in onto.atoms:
                violations.append(
                    Violation(
                        "unknown-atom",
                        "{} => {}".format(stronger, weaker),
                        "implication references undeclared atom {}".format(end),
                    )
                )

    atoms: "nx.DiGraph[str]" = nx.DiGraph(list(onto.atomImplications))
    if not nx.is_directed_acyclic_graph(atoms):
        cycle = nx.find_cycle(atoms)
        violations.append(
            Violation(
                "cyclic-implication",
                " -> ".join(edge[0] for edge in cycle),
                "atom implications must form a DAG",
            )
        )

    return violations


def subsumes(onto: Ontology, sub: ConceptId, sup: ConceptId) -> bool:
    """Whether ``sub ⊑ sup`` in the reflexive-transitive closure of subsumption."""
    if sup not in onto.concepts:
        raise UnknownConceptError(sup)
    return sup in onto.supersOf(sub)


def relate(onto: Ontology, c1: ConceptId, c2: ConceptId) -> Relation:
    if c1 == c2:
        if c1 not in onto.concepts:
            raise UnknownConceptError(c1)
        return Relation.EQUAL
    if subsumes(onto, c1, c2):
        return Relation.SUB
    if subsumes(onto, c2, c1):
        return Relation.SUPER
    return Relation.UNRELATED


def conceptOf(onto: Ontology, param: str) -> ConceptId:
    try:
        return onto.parameterMap[param]
    except KeyError:
        raise UnknownParameterError(param) from None


def conceptsOf(onto: Ontology, params: Iterable[str]) -> FrozenSet[ConceptId]:
    return frozenset(conceptOf(onto, p) for p in params)


def implies(onto: Ontology, a: Condition, b: Condition) -> bool:
    """Whether ``a → b``: every atom of ``b`` is entailed by some atom of ``a``."""
    for atom in b.atoms:
        if atom not in onto.atoms:
            raise UnknownAtomError(atom)
    return b.atoms <= onto.entailed(a)


def equivalentConditions(onto: Ontology, a: Condition, b: Condition) -> bool:
    return implies(onto, a, b) and implies(onto, b, a)


def canonicalCondition(onto: Ontology, condition: Condition) -> FrozenSet[AtomId]:
    """A key equal for two conditions exactly when they are equivalent."""
    return onto.entailed(condition)
