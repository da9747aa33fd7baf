import math

from .model import (
    RELIABILITY,
    RESPONSE_TIME,
    STANDARD_SPECS,
    THROUGHPUT,
    Aggregation,
    Constraint,
    Direction,
    Objective,
    Polarity,
    QoSSpec,
    Query,
    ServiceDescriptor,
    nodeFromService,
    satisfiesConstraints,
    specViolations,
    specsByName,
    validateQuery,
    validateService,
    violatedConstraints,
)
from .ontology import Condition, Ontology


def shopOntology() -> Ontology:
    return Ontology.build(
        ["Image", "binaryImage", "ProductName"],
        [("binaryImage", "Image")],
        {"BinaryImage": "binaryImage", "Photo": "Image", "PName": "ProductName"},
        ["jpeg"],
    )


def service(**overrides) -> ServiceDescriptor:
    fields = dict(
        id="s1",
        inputs=frozenset(["BinaryImage"]),
        outputs=frozenset(["PName"]),
        method="recognize",
        qos={"responseTime": 30, "throughput": 5, "reliability": 0.9, "availability": 1.0},
        pre=Condition.of("jpeg"),
    )
    fields.update(overrides)
    return ServiceDescriptor(**fields)  # type: ignore


def test_spec_direction():
    assert RESPONSE_TIME.direction == Direction.MINIMIZE
    assert RELIABILITY.direction == Direction.MAXIMIZE
    assert RESPONSE_TIME.isBetter(10, 20)
    assert THROUGHPUT.isBetter(20, 10)
    assert RESPONSE_TIME.satisfies(200, 200)
    assert RELIABILITY.satisfies(0.8, 0.8)
    assert not RELIABILITY.satisfies(0.79, 0.8)


def test_spec_rounded():
    twoDecimals = QoSSpec("reliability", Polarity.POSITIVE, Aggregation.MULTIPLICATIVE, 2)

    assert twoDecimals.rounded(0.95 * 0.99) == 0.94
    assert RELIABILITY.rounded(0.95 * 0.99) == 0.95 * 0.99


def test_specViolations():
    assert specViolations(STANDARD_SPECS) == []

    wrong = QoSSpec("reliability", Polarity.POSITIVE, Aggregation.ADDITIVE)
    kinds = [v.kind for v in specViolations([RESPONSE_TIME, RESPONSE_TIME, wrong])]
    assert kinds == ["duplicate-qos", "qos-shape"]


def test_validateService_valid():
    assert validateService(shopOntology(), service()) == []


def test_validateService_unknownParameter():
    violations = validateService(shopOntology(), service(inputs=frozenset(["Sound"])))

    assert [v.kind for v in violations] == ["unknown-parameter"]
    assert violations[0].subject == "s1"


def test_validateService_qosRanges():
    qos = {"responseTime": -1, "throughput": 5, "reliability": 1.5, "extra": 1}
    kinds = sorted(v.kind for v in validateService(shopOntology(), service(qos=qos)))

    assert kinds == ["missing-qos", "range", "range", "unknown-qos"]


def test_validateService_nan():
    qos = {"responseTime": math.nan, "throughput": 5, "reliability": 0.9, "availability": 1}
    violations = validateService(shopOntology(), service(qos=qos))

    assert [v.kind for v in violations] == ["range"]


def test_validateService_emptyOutputs():
    violations = validateService(shopOntology(), service(outputs=frozenset()))

    assert [v.kind for v in violations] == ["empty-outputs"]


def test_nodeFromService():
    node = nodeFromService(shopOntology(), service())

    assert node.inputs == frozenset(["binaryImage"])
    assert node.outputs == frozenset(["ProductName"])
    assert node.level == 0


def test_validateQuery():
    onto = shopOntology()
    good = Query(
        frozenset(["Photo"]),
        frozenset(["PName"]),
        objectives=(Objective("responseTime", Direction.MINIMIZE),),
        constraints=(Constraint("reliability", 0.8),),
    )
    bad = Query(
        frozenset(["Photo"]),
        frozenset(["PName"]),
        outputReq=Condition.of("png"),
        objectives=(Objective("responseTime", Direction.MAXIMIZE),),
        constraints=(Constraint("cost", 3),),
    )

    assert validateQuery(onto, good) == []
    kinds = sorted(v.kind for v in validateQuery(onto, bad))
    assert kinds == ["objective-direction", "unknown-atom", "unknown-qos"]


def test_violatedConstraints():
    specs = specsByName(STANDARD_SPECS)
    constraints = [Constraint("responseTime", 200), Constraint("reliability", 0.8)]

    assert satisfiesConstraints({"responseTime": 160, "reliability": 0.94}, constraints, specs)
    assert violatedConstraints(
        {"responseTime": 60, "reliability": 0.56}, constraints, specs
    ) == [Constraint("reliability", 0.8)]
