"""Core value types: QoS specifications, services, queries and composition plans."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple
import math

from .errors import Violation
from .ontology import (
    TRUE,
    ConceptId,
    Condition,
    Ontology,
    conceptsOf,
)

QoSVector = Mapping[str, float]

SOURCE = "@query"
SINK = "@goal"


class Polarity(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Aggregation(Enum):
    ADDITIVE = "additive_critical_path"
    MULTIPLICATIVE = "multiplicative"
    BOTTLENECK = "min_bottleneck"


class Direction(Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


@dataclass(frozen=True)
class QoSSpec:
    name: str
    polarity: Polarity
    aggregation: Aggregation
    # precision aggregated values are reported with; None keeps full precision
    decimals: Optional[int] = None

    @property
    def direction(self) -> Direction:
        if self.polarity == Polarity.POSITIVE:
            return Direction.MAXIMIZE
        return Direction.MINIMIZE

    def isBetter(self, a: float, b: float) -> bool:
        """Whether ``a`` is strictly better than ``b`` for this parameter."""
        if self.polarity == Polarity.POSITIVE:
            return a > b
        return a < b

    def best(self, values: Iterable[float]) -> float:
        if self.polarity == Polarity.POSITIVE:
            return max(values)
        return min(values)

    def worst(self, values: Iterable[float]) -> float:
        if self.polarity == Polarity.POSITIVE:
            return min(values)
        return max(values)

    def satisfies(self, value: float, bound: float) -> bool:
        """Non-strict: an upper bound for negative parameters, a lower bound for positive ones."""
        if self.polarity == Polarity.POSITIVE:
            return value >= bound
        return value <= bound

    def rounded(self, value: float) -> float:
        if self.decimals is None:
            return value
        return round(value, self.decimals)


RESPONSE_TIME = QoSSpec("responseTime", Polarity.NEGATIVE, Aggregation.ADDITIVE)
THROUGHPUT = QoSSpec("throughput", Polarity.POSITIVE, Aggregation.BOTTLENECK)
RELIABILITY = QoSSpec("reliability", Polarity.POSITIVE, Aggregation.MULTIPLICATIVE)
AVAILABILITY = QoSSpec("availability", Polarity.POSITIVE, Aggregation.MULTIPLICATIVE)

STANDARD_SPECS: Tuple[QoSSpec, ...] = (
    RESPONSE_TIME,
    THROUGHPUT,
    RELIABILITY,
    AVAILABILITY,
)

# the declaration each well-known parameter must use
_REQUIRED_SHAPE: Dict[str, Tuple[Polarity, Aggregation]] = {
    spec.name: (spec.polarity, spec.aggregation) for spec in STANDARD_SPECS
}


def specsByName(specs: Iterable[QoSSpec]) -> Dict[str, QoSSpec]:
    return {spec.name: spec for spec in specs}


@dataclass(frozen=True)
class ServiceDescriptor:
    id: str
    inputs: FrozenSet[str]
    outputs: FrozenSet[str]
    method: str
    qos: QoSVector = field(hash=False)
    pre: Condition = TRUE
    post: Condition = TRUE


@dataclass(frozen=True)
class Objective:
    qos: str
    direction: Direction


@dataclass(frozen=True)
class Constraint:
    qos: str
    bound: float


@dataclass(frozen=True)
class Query:
    inputs: FrozenSet[str]
    outputs: FrozenSet[str]
    inputSpec: Condition = TRUE
    outputReq: Condition = TRUE
    objectives: Tuple[Objective, ...] = ()
    constraints: Tuple[Constraint, ...] = ()

    def withConstraints(self, constraints: Sequence[Constraint]) -> "Query":
        return Query(
            self.inputs,
            self.outputs,
            self.inputSpec,
            self.outputReq,
            self.objectives,
            tuple(constraints),
        )


@dataclass(frozen=True)
class ServiceNode:
    """A service as the composition engine sees it, at any abstraction level.

    Parameters are already mapped to concepts. Level-0 nodes are built from descriptors
    with ``nodeFromService``; abstract nodes are minted by the abstraction module.
    """

    id: str
    level: int
    inputs: FrozenSet[ConceptId]
    outputs: FrozenSet[ConceptId]
    pre: Condition
    post: Condition
    qos: QoSVector = field(hash=False, compare=False)


def nodeFromService(onto: Ontology, service: ServiceDescriptor) -> ServiceNode:
    return ServiceNode(
        id=service.id,
        level=0,
        inputs=conceptsOf(onto, service.inputs),
        outputs=conceptsOf(onto, service.outputs),
        pre=service.pre,
        post=service.post,
        qos=dict(service.qos),
    )


@dataclass(frozen=True)
class CompositionPlan:
    """One selected sub-DAG of a dependency graph.

    ``producerEdges`` holds ``(producer, consumer, concept)`` triples; query inputs
    produce from ``SOURCE`` and query outputs are consumed by ``SINK``. For abstract
    plans ``bindings`` maps each node to its chain of representatives down to a
    level-0 service, and ``nodeQos`` holds the QoS each node contributes.
    ``sourceConcepts`` are the concepts the query supplied.
    """

    level: int
    nodes: FrozenSet[str]
    producerEdges: FrozenSet[Tuple[str, str, ConceptId]]
    qos: QoSVector = field(hash=False)
    nodeQos: Mapping[str, QoSVector] = field(default_factory=dict, hash=False)
    bindings: Mapping[str, Tuple[str, ...]] = field(default_factory=dict, hash=False)
    hierarchyDigest: Optional[str] = None
    sourceConcepts: FrozenSet[ConceptId] = frozenset()

    def producersOf(self, consumer: str) -> Dict[ConceptId, str]:
        return {
            concept: producer
            for producer, target, concept in self.producerEdges
            if target == consumer
        }

    def outputProducers(self) -> Dict[ConceptId, str]:
        return self.producersOf(SINK)


def _checkAtoms(
    onto: Ontology, condition: Condition, subject: str, where: str
) -> List[Violation]:
    violations = []
    for atom in sorted(condition.atoms):
        if atom not in onto.atoms:
            violations.append(
                Violation(
                    "unknown-atom",
                    subject,
                    "{} references undeclared atom {}".format(where, atom),
                )
            )
    return violations


def _checkParameters(
    onto: Ontology, params: FrozenSet[str], subject: str, where: str
) -> List[Violation]:
    violations = []
    if not params:
        violations.append(Violation("empty-" + where, subject, where + " are empty"))
    for param in sorted(params):
        if param not in onto.parameterMap:
            violations.append(
                Violation(
                    "unknown-parameter",
                    subject,
                    "{} parameter {} is not registered".format(where[:-1], param),
                )
            )
    return violations


def specViolations(specs: Sequence[QoSSpec]) -> List[Violation]:
    violations = []
    seen = set()
    for spec in specs:
        if spec.name in seen:
            violations.append(
                Violation("duplicate-qos", spec.name, "QoS name declared twice")
            )
        seen.add(spec.name)
        shape = _REQUIRED_SHAPE.get(spec.name)
        if shape is not None and shape != (spec.polarity, spec.aggregation):
            violations.append(
                Violation(
                    "qos-shape",
                    spec.name,
                    "must be declared {} and {}".format(shape[0].value, shape[1].value),
                )
            )
        if spec.decimals is not None and spec.decimals < 0:
            violations.append(
                Violation("range", spec.name, "decimals must be non-negative")
            )
    return violations


def validateService(
    onto: Ontology,
    service: ServiceDescriptor,
    specs: Sequence[QoSSpec] = STANDARD_SPECS,
) -> List[Violation]:
    """Check one service against the ontology and the declared QoS parameters.

    Returns:
        Every violation found; an empty list for a well-formed service.
    """
    subject = service.id or "<service>"
    violations: List[Violation] = []
    if not service.id:
        violations.append(Violation("empty-id", subject, "service id is empty"))

    violations += _checkParameters(onto, service.inputs, subject, "inputs")
    violations += _checkParameters(onto, service.outputs, subject, "outputs")
    violations += _checkAtoms(onto, service.pre, subject, "precondition")
    violations += _checkAtoms(onto, service.post, subject, "postcondition")

    declared = specsByName(specs)
    for name in sorted(service.qos):
        if name not in declared:
            violations.append(
                Violation("unknown-qos", subject, "undeclared QoS parameter " + name)
            )
    for name, spec in sorted(declared.items()):
        if name not in service.qos:
            violations.append(Violation("missing-qos", subject, "no value for " + name))
            continue
        value = service.qos[name]
        if not isinstance(value, (int, float)) or math.isnan(value):
            violations.append(
                Violation("range", subject, "{} is not a number".format(name))
            )
        elif spec.aggregation == Aggregation.MULTIPLICATIVE:
            if not 0.0 <= value <= 1.0:
                violations.append(
                    Violation(
                        "range", subject, "{}={} is outside [0, 1]".format(name, value)
                    )
                )
        elif value <= 0:
            violations.append(
                Violation("range", subject, "{}={} must be positive".format(name, value))
            )

    return violations


def validateQuery(
    onto: Ontology,
    query: Query,
    specs: Sequence[QoSSpec] = STANDARD_SPECS,
    subject: str = "query",
) -> List[Violation]:
    violations: List[Violation] = []
    violations += _checkParameters(onto, query.inputs, subject, "inputs")
    violations += _checkParameters(onto, query.outputs, subject, "outputs")
    violations += _checkAtoms(onto, query.inputSpec, subject, "input spec")
    violations += _checkAtoms(onto, query.outputReq, subject, "output requirement")

    declared = specsByName(specs)
    for objective in query.objectives:
        spec = declared.get(objective.qos)
        if spec is None:
            violations.append(
                Violation("unknown-qos", subject, "objective on " + objective.qos)
            )
        elif spec.direction != objective.direction:
            violations.append(
                Violation(
                    "objective-direction",
                    subject,
                    "{} can only be {}d".format(spec.name, spec.direction.value[:-1]),
                )
            )
    for constraint in query.constraints:
        if constraint.qos not in declared:
            violations.append(
                Violation("unknown-qos", subject, "constraint on " + constraint.qos)
            )
    return violations


def violatedConstraints(
    qos: QoSVector, constraints: Iterable[Constraint], specs: Mapping[str, QoSSpec]
) -> List[Constraint]:
    return [
        c
        for c in constraints
        if not specs[c.qos].satisfies(qos[c.qos], c.bound)
    ]


def satisfiesConstraints(
    qos: QoSVector, constraints: Iterable[Constraint], specs: Mapping[str, QoSSpec]
) -> bool:
    return not violatedConstraints(qos, constraints, specs)
