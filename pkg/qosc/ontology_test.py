import pytest
from hypothesis import given, settings, strategies as st

from .errors import (
    UnknownAtomError,
    UnknownConceptError,
    UnknownParameterError,
    ValidationError,
)
from .ontology import (
    TRUE,
    Condition,
    Ontology,
    Relation,
    canonicalCondition,
    conceptOf,
    equivalentConditions,
    implies,
    relate,
    subsumes,
)
from .testing.resources import CONCEPTS, ontologies


def imageOntology() -> Ontology:
    return Ontology.build(
        concepts=["Image", "grayImage", "binaryImage", "RGBImage", "GPS"],
        subsumptionEdges=[
            ("binaryImage", "grayImage"),
            ("grayImage", "Image"),
            ("RGBImage", "Image"),
        ],
        parameterMap={"BinaryImage": "binaryImage", "Photo": "Image", "GPS": "GPS"},
        atoms=["jpeg", "jpeg|png", "size<50KB", "size<100KB"],
        atomImplications=[("jpeg", "jpeg|png"), ("size<50KB", "size<100KB")],
    )


def test_subsumes():
    onto = imageOntology()

    assert subsumes(onto, "binaryImage", "Image")
    assert subsumes(onto, "Image", "Image")
    assert not subsumes(onto, "Image", "binaryImage")
    assert not subsumes(onto, "RGBImage", "grayImage")


def test_subsumes_unknown():
    onto = imageOntology()

    with pytest.raises(UnknownConceptError):
        subsumes(onto, "Video", "Image")
    with pytest.raises(UnknownConceptError):
        subsumes(onto, "Image", "Video")


def test_relate():
    onto = imageOntology()

    assert relate(onto, "Image", "Image") == Relation.EQUAL
    assert relate(onto, "binaryImage", "Image") == Relation.SUB
    assert relate(onto, "Image", "grayImage") == Relation.SUPER
    assert relate(onto, "RGBImage", "binaryImage") == Relation.UNRELATED
    assert relate(onto, "GPS", "Image") == Relation.UNRELATED


def test_conceptOf():
    onto = imageOntology()

    assert conceptOf(onto, "BinaryImage") == "binaryImage"
    with pytest.raises(UnknownParameterError):
        conceptOf(onto, "Sound")


def test_implies():
    onto = imageOntology()

    assert implies(onto, Condition.of("jpeg", "size<50KB"), Condition.of("jpeg|png"))
    assert implies(onto, Condition.of("jpeg"), TRUE)
    assert implies(onto, TRUE, TRUE)
    assert not implies(onto, Condition.of("jpeg|png"), Condition.of("jpeg"))
    assert not implies(onto, TRUE, Condition.of("jpeg"))


def test_implies_unknownAtom():
    onto = imageOntology()

    with pytest.raises(UnknownAtomError):
        implies(onto, TRUE, Condition.of("gif"))


def test_equivalentConditions():
    onto = imageOntology()
    redundant = Condition.of("jpeg", "jpeg|png")

    assert equivalentConditions(onto, redundant, Condition.of("jpeg"))
    assert canonicalCondition(onto, redundant) == canonicalCondition(
        onto, Condition.of("jpeg")
    )
    assert not equivalentConditions(onto, Condition.of("jpeg"), Condition.of("jpeg|png"))


def test_build_cyclicSubsumption():
    with pytest.raises(ValidationError) as info:
        Ontology.build(["A", "B", "C"], [("A", "B"), ("B", "C"), ("C", "A")], {})

    kinds = [v.kind for v in info.value.violations]
    assert "cyclic-subsumption" in kinds


def test_build_reportsEveryViolation():
    with pytest.raises(ValidationError) as info:
        Ontology.build(
            ["A"],
            [("A", "B")],
            {"p": "Missing"},
            ["x"],
            [("x", "y")],
        )

    kinds = sorted(v.kind for v in info.value.violations)
    assert kinds == ["unknown-atom", "unknown-concept", "unknown-concept"]


@settings(max_examples=1000, deadline=None)
@given(
    ontologies(),
    st.sampled_from(CONCEPTS),
    st.sampled_from(CONCEPTS),
    st.sampled_from(CONCEPTS),
)
def test_subsumption_isPartialOrder(onto, a, b, c):
    assert subsumes(onto, a, a)
    if a != b and subsumes(onto, a, b):
        assert not subsumes(onto, b, a)
    if subsumes(onto, a, b) and subsumes(onto, b, c):
        assert subsumes(onto, a, c)


@settings(max_examples=1000, deadline=None)
@given(ontologies(), st.data())
def test_implies_isPreorder(onto, data):
    atoms = st.frozensets(st.sampled_from(sorted(onto.atoms)), max_size=3)
    a, b, c = (Condition(data.draw(atoms)) for _ in range(3))

    assert implies(onto, a, a)
    assert implies(onto, a.conjoin(b), a)
    if implies(onto, a, b) and implies(onto, b, c):
        assert implies(onto, a, c)
