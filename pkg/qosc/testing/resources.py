from dataclasses import replace
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import pytest
from hypothesis import strategies as st

from ..abstraction import AbstractionHierarchy, buildHierarchy
from ..datagen import GeneratorConfig, generate
from ..model import (
    RELIABILITY,
    RESPONSE_TIME,
    Constraint,
    Direction,
    Objective,
    QoSSpec,
    Query,
    ServiceDescriptor,
    ServiceNode,
)
from ..ontology import Condition, Ontology
from ..repository import RepositoryDocument

# reliability is reported with two decimals, as in the worked example
WORKED_SPECS: Tuple[QoSSpec, ...] = (RESPONSE_TIME, replace(RELIABILITY, decimals=2))
WORKED_WEIGHTS = {"responseTime": 1.0, "reliability": 0.0}

CLASS_ONE = ((30.0, 0.8), (70.0, 0.95), (50.0, 0.9))
CLASS_TWO = ((30.0, 0.7), (90.0, 0.99), (60.0, 0.9))


def workedExampleOntology() -> Ontology:
    return Ontology.build(["X", "Y", "Z"], [], {"X": "X", "Y": "Y", "Z": "Z"})


def workedExampleServices() -> List[ServiceDescriptor]:
    services = []
    for prefix, (inputs, outputs), members in (
        ("a", ("X", "Y"), CLASS_ONE),
        ("b", ("Y", "Z"), CLASS_TWO),
    ):
        for k, (rt, rel) in enumerate(members, start=1):
            services.append(
                ServiceDescriptor(
                    id="{}{}".format(prefix, k),
                    inputs=frozenset([inputs]),
                    outputs=frozenset([outputs]),
                    method="step",
                    qos={"responseTime": rt, "reliability": rel},
                )
            )
    return services


def workedExampleQuery(maxResponseTime: float, minReliability: float) -> Query:
    return Query(
        inputs=frozenset(["X"]),
        outputs=frozenset(["Z"]),
        objectives=(Objective("responseTime", Direction.MINIMIZE),),
        constraints=(
            Constraint("responseTime", maxResponseTime),
            Constraint("reliability", minReliability),
        ),
    )


def workedExampleHierarchy() -> AbstractionHierarchy:
    return buildHierarchy(
        workedExampleOntology(), workedExampleServices(), WORKED_SPECS, WORKED_WEIGHTS
    )


def workedExampleDocument() -> RepositoryDocument:
    return RepositoryDocument(
        ontology=workedExampleOntology(),
        qosSpecs=WORKED_SPECS,
        services=tuple(workedExampleServices()),
        queries=(workedExampleQuery(200, 0.8), workedExampleQuery(50, 0.8)),
        metadata={"name": "worked_example"},
    )


def withServices(
    doc: RepositoryDocument, services: Iterable[ServiceDescriptor]
) -> RepositoryDocument:
    return RepositoryDocument(
        doc.ontology, doc.qosSpecs, tuple(services), doc.queries, doc.metadata
    )


def node(
    sid: str,
    inputs: Iterable[str],
    outputs: Iterable[str],
    pre: Iterable[str] = (),
    post: Iterable[str] = (),
    level: int = 0,
    **qos: float
) -> ServiceNode:
    """A service node written directly over concepts."""
    return ServiceNode(
        id=sid,
        level=level,
        inputs=frozenset(inputs),
        outputs=frozenset(outputs),
        pre=Condition(frozenset(pre)),
        post=Condition(frozenset(post)),
        qos=qos or {"responseTime": 10.0, "reliability": 0.9},
    )


def identityMap(concepts: Iterable[str]) -> Dict[str, str]:
    return {c: c for c in concepts}


def smallConfig(
    seed: int,
    nServices: int = 10,
    specs: Sequence[QoSSpec] = (RESPONSE_TIME, RELIABILITY),
    tightness: float = 0.5,
) -> GeneratorConfig:
    """A generator configuration whose plan spaces stay small enough to exhaust."""
    return GeneratorConfig(
        seed=seed,
        nConcepts=6,
        subsumptionDensity=0.3,
        nParameters=8,
        nAtoms=3,
        nServices=nServices,
        redundancy=(0.3, 0.2, 0.2, 0.3),
        nQueries=1,
        constraintTightness=tightness,
        qosSpecs=tuple(specs),
    )


def randomInstance(
    seed: int,
    nServices: int = 10,
    specs: Sequence[QoSSpec] = (RESPONSE_TIME, RELIABILITY),
) -> RepositoryDocument:
    # tightness cycles so that some instances have no satisfying plan
    return generate(smallConfig(seed, nServices, specs, tightness=(seed % 5) / 4))


def seeds(count: int, quick: Iterable[int] = range(20)) -> List[Any]:
    """``range(count)`` as pytest parameters; seeds outside ``quick`` are marked slow."""
    fast = set(quick)
    return [
        seed if seed in fast else pytest.param(seed, marks=pytest.mark.slow)
        for seed in range(count)
    ]


CONCEPTS = ("c0", "c1", "c2", "c3", "c4", "c5")
ATOMS = ("a0", "a1", "a2", "a3")


def _forwardPairs(items: Sequence[str]) -> List[Tuple[str, str]]:
    # (later, earlier) pairs can never close a cycle
    return [(items[j], items[i]) for j in range(len(items)) for i in range(j)]


@st.composite
def ontologies(draw: Any) -> Ontology:
    edges = draw(st.lists(st.sampled_from(_forwardPairs(CONCEPTS)), unique=True, max_size=8))
    implications = draw(
        st.lists(st.sampled_from(_forwardPairs(ATOMS)), unique=True, max_size=4)
    )
    return Ontology.build(CONCEPTS, edges, identityMap(CONCEPTS), ATOMS, implications)


@st.composite
def serviceNodes(draw: Any, minSize: int = 1, maxSize: int = 8) -> List[ServiceNode]:
    """Nodes over ``CONCEPTS`` and ``ATOMS`` with ids ``s0``, ``s1``, ..."""
    concepts = st.frozensets(st.sampled_from(CONCEPTS), min_size=1, max_size=2)
    atoms = st.frozensets(st.sampled_from(ATOMS), max_size=2)
    count = draw(st.integers(min_value=minSize, max_value=maxSize))
    nodes = []
    for k in range(count):
        nodes.append(
            ServiceNode(
                id="s{}".format(k),
                level=0,
                inputs=draw(concepts),
                outputs=draw(concepts),
                pre=Condition(draw(atoms)),
                post=Condition(draw(atoms)),
                qos={
                    "responseTime": draw(st.integers(min_value=1, max_value=100)) * 1.0,
                    "reliability": draw(st.integers(min_value=50, max_value=100)) / 100,
                },
            )
        )
    return nodes
