import json
import os

import pytest

from .errors import ParseError, ValidationError
from .repository import (
    RepositoryDocument,
    dumps,
    encodeDocument,
    load,
    loadQuery,
    parseDocument,
    save,
    summarize,
)
from .testing.resources import withServices, workedExampleDocument
from .testing.setup import RUNNING_EXAMPLE_PATH, getRunningExample


def test_load_runningExample():
    doc = load(RUNNING_EXAMPLE_PATH)

    assert len(doc.services) == 32
    assert [spec.name for spec in doc.qosSpecs] == ["responseTime", "reliability"]
    assert doc.ontology.parameterMap["BWImage"] == "binaryImage"
    assert doc.queries[0].outputReq.atoms == frozenset(["reviewEnglish"])


def test_summarize_runningExample():
    stats = summarize(getRunningExample())

    assert stats.services == 32
    assert stats.concepts == 12
    assert stats.atoms == 7
    assert stats.parameters == 20
    assert stats.queries == 1


def test_saveLoad_roundTrip(tmp_path):
    for doc in (getRunningExample(), workedExampleDocument()):
        path = str(tmp_path / "copy.repo.json")
        save(doc, path)

        assert load(path) == doc


def test_save_isDeterministic(tmp_path):
    doc = getRunningExample()
    first, second = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    save(doc, first)
    save(doc, second)

    with open(first) as a, open(second) as b:
        assert a.read() == b.read()


def test_save_unwritablePath(tmp_path):
    with pytest.raises(OSError):
        save(getRunningExample(), str(tmp_path / "missing" / "dir" / "out.json"))


def test_emptyServices():
    doc = withServices(workedExampleDocument(), [])
    raw = encodeDocument(doc)
    raw["queries"] = []

    loaded = parseDocument(json.dumps(raw))
    assert loaded.services == ()
    assert summarize(loaded).services == 0


def test_parse_malformed():
    with pytest.raises(ParseError) as info:
        parseDocument('{"version": "v1",\n  "ontology": }', "broken.json")

    assert info.value.path == "broken.json"
    assert info.value.line == 2


def test_parse_cyclicSubsumption():
    raw = encodeDocument(workedExampleDocument())
    raw["ontology"]["subsumption_edges"] = [
        {"child": "X", "parent": "Y"},
        {"child": "Y", "parent": "X"},
    ]

    with pytest.raises(ValidationError) as info:
        parseDocument(json.dumps(raw))
    assert "cyclic-subsumption" in [v.kind for v in info.value.violations]


def test_parse_collectsEveryViolation():
    raw = encodeDocument(workedExampleDocument())
    raw["version"] = "v0"
    raw["services"][0]["inputs"] = ["X", "X"]
    raw["services"][1]["id"] = raw["services"][0]["id"]
    raw["services"][2]["id"] = "S1_4"
    raw["services"][3]["qos"]["reliability"] = 2
    raw["services"][4]["outputs"] = ["Nowhere"]
    raw["queries"][0]["objectives"][0]["direction"] = "sideways"

    with pytest.raises(ValidationError) as info:
        parseDocument(json.dumps(raw))

    kinds = sorted(v.kind for v in info.value.violations)
    assert kinds == [
        "duplicate",
        "duplicate-id",
        "range",
        "reserved-id",
        "schema",
        "unknown-parameter",
        "version",
    ]


@pytest.mark.parametrize("value", [5, "all", {"qos": "responseTime"}])
def test_parse_queryListsMustBeArrays(value):
    raw = encodeDocument(workedExampleDocument())
    raw["queries"][0]["objectives"] = value
    raw["queries"][1]["constraints"] = value

    with pytest.raises(ValidationError) as info:
        parseDocument(json.dumps(raw))

    assert [(v.kind, v.subject) for v in info.value.violations] == [
        ("schema", "queries[0].objectives"),
        ("schema", "queries[1].constraints"),
    ]


def test_parse_missingOntology():
    with pytest.raises(ValidationError) as info:
        parseDocument(json.dumps({"version": "v1", "services": []}))

    assert [v.kind for v in info.value.violations] == ["schema"]


def test_dumps_sortsSets():
    text = dumps(getRunningExample())
    raw = json.loads(text)

    assert raw["ontology"]["concepts"] == sorted(raw["ontology"]["concepts"])
    assert text.endswith("\n")


def test_loadQuery(tmp_path):
    doc = workedExampleDocument()
    path = str(tmp_path / "query.json")
    with open(path, "w") as f:
        json.dump(encodeDocument(doc)["queries"][0], f)

    assert loadQuery(path, doc) == doc.queries[0]


def test_loadQuery_unknownParameter(tmp_path):
    doc = workedExampleDocument()
    path = str(tmp_path / "query.json")
    with open(path, "w") as f:
        json.dump({"inputs": ["Nope"], "outputs": ["Z"]}, f)

    with pytest.raises(ValidationError):
        loadQuery(path, doc)


def test_fixtureIsCanonicalJson():
    with open(RUNNING_EXAMPLE_PATH, encoding="utf-8") as f:
        raw = json.load(f)

    assert raw["version"] == "v1"
    assert os.path.basename(RUNNING_EXAMPLE_PATH).endswith(".repo.json")
    assert isinstance(load(RUNNING_EXAMPLE_PATH), RepositoryDocument)
