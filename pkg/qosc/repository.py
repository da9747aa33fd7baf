"""Load, save, validate and summarize ``.repo.json`` repository documents.

The document format is described in ``docs/format.md``. Set-valued fields are JSON
arrays; a repeated element is reported as a ``duplicate`` violation.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple
import json
import logging
import re

from .errors import ParseError, QoscError, ValidationError, Violation
from .model import (
    Aggregation,
    Constraint,
    Direction,
    Objective,
    Polarity,
    QoSSpec,
    Query,
    ServiceDescriptor,
    specViolations,
    validateQuery,
    validateService,
)
from .ontology import TRUE, Condition, Ontology

logger = logging.getLogger(__name__)

VERSION = "v1"

# abstract ids are minted as S1_k, S2_k and S3_k
_RESERVED_ID = re.compile(r"^S[123]_\d+$")


@dataclass(frozen=True)
class RepositoryDocument:
    ontology: Ontology
    qosSpecs: Tuple[QoSSpec, ...]
    services: Tuple[ServiceDescriptor, ...]
    queries: Tuple[Query, ...] = ()
    metadata: Mapping[str, str] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class RepositoryStats:
    concepts: int
    parameters: int
    atoms: int
    services: int
    queries: int
    qosSpecs: int

    def toDict(self) -> Dict[str, int]:
        return {
            "concepts": self.concepts,
            "parameters": self.parameters,
            "atoms": self.atoms,
            "services": self.services,
            "queries": self.queries,
            "qos_specs": self.qosSpecs,
        }


class _SchemaError(QoscError):
    """Internal: aborts decoding of one section, recorded as a violation."""

    def __init__(self, where: str, message: str) -> None:
        super().__init__(message)
        self.where = where
        self.message = message


def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if not isinstance(obj, Mapping):
        raise _SchemaError(where, "expected an object")
    if key not in obj:
        raise _SchemaError(where, "missing field " + key)
    return obj[key]


def _stringList(
    value: Any, where: str, violations: List[Violation]
) -> Tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise _SchemaError(where, "expected an array of strings")
    seen = set()
    for item in value:
        if item in seen:
            violations.append(
                Violation("duplicate", where, "{} listed twice".format(item))
            )
        seen.add(item)
    return tuple(value)


def _pairs(
    value: Any, first: str, second: str, where: str, violations: List[Violation]
) -> List[Tuple[str, str]]:
    if not isinstance(value, list):
        raise _SchemaError(where, "expected an array")
    result: List[Tuple[str, str]] = []
    for i, item in enumerate(value):
        pair = (
            str(_require(item, first, "{}[{}]".format(where, i))),
            str(_require(item, second, "{}[{}]".format(where, i))),
        )
        if pair in result:
            violations.append(
                Violation("duplicate", where, "{} -> {} listed twice".format(*pair))
            )
        result.append(pair)
    return result


def _condition(value: Any, where: str, violations: List[Violation]) -> Condition:
    if value is None:
        return TRUE
    return Condition(frozenset(_stringList(value, where, violations)))


def _decodeOntology(raw: Any, violations: List[Violation]) -> Optional[Ontology]:
    where = "ontology"
    concepts = _stringList(_require(raw, "concepts", where), where + ".concepts", violations)
    edges = _pairs(
        raw.get("subsumption_edges", []),
        "child",
        "parent",
        where + ".subsumption_edges",
        violations,
    )
    atoms = _stringList(raw.get("atoms", []), where + ".atoms", violations)
    implications = _pairs(
        raw.get("atom_implications", []),
        "stronger",
        "weaker",
        where + ".atom_implications",
        violations,
    )
    parameterMap = _require(raw, "parameter_map", where)
    if not isinstance(parameterMap, Mapping):
        raise _SchemaError(where + ".parameter_map", "expected an object")

    try:
        return Ontology.build(
            concepts,
            edges,
            {str(k): str(v) for k, v in parameterMap.items()},
            atoms,
            implications,
        )
    except ValidationError as e:
        violations.extend(v for v in e.violations if isinstance(v, Violation))
        return None


def _decodeSpec(raw: Any, where: str) -> QoSSpec:
    try:
        polarity = Polarity(_require(raw, "polarity", where))
        aggregation = Aggregation(_require(raw, "aggregation", where))
    except ValueError as e:
        raise _SchemaError(where, str(e)) from None
    decimals = raw.get("decimals")
    if decimals is not None and not isinstance(decimals, int):
        raise _SchemaError(where, "decimals must be an integer")
    return QoSSpec(str(_require(raw, "name", where)), polarity, aggregation, decimals)


def _decodeService(raw: Any, where: str, violations: List[Violation]) -> ServiceDescriptor:
    qos = _require(raw, "qos", where)
    if not isinstance(qos, Mapping):
        raise _SchemaError(where + ".qos", "expected an object")
    return ServiceDescriptor(
        id=str(_require(raw, "id", where)),
        inputs=frozenset(_stringList(_require(raw, "inputs", where), where + ".inputs", violations)),
        outputs=frozenset(
            _stringList(_require(raw, "outputs", where), where + ".outputs", violations)
        ),
        method=str(raw.get("method", "")),
        qos={str(k): v for k, v in qos.items()},
        pre=_condition(raw.get("pre"), where + ".pre", violations),
        post=_condition(raw.get("post"), where + ".post", violations),
    )


def _array(value: Any, where: str) -> List[Any]:
    if not isinstance(value, list):
        raise _SchemaError(where, "expected an array")
    return value


def _decodeQuery(raw: Any, where: str, violations: List[Violation]) -> Query:
    if not isinstance(raw, Mapping):
        raise _SchemaError(where, "expected an object")
    objectives = []
    for i, item in enumerate(_array(raw.get("objectives", []), where + ".objectives")):
        at = "{}.objectives[{}]".format(where, i)
        try:
            direction = Direction(_require(item, "direction", at))
        except ValueError as e:
            raise _SchemaError(at, str(e)) from None
        objectives.append(Objective(str(_require(item, "qos", at)), direction))

    constraints = []
    for i, item in enumerate(_array(raw.get("constraints", []), where + ".constraints")):
        at = "{}.constraints[{}]".format(where, i)
        bound = _require(item, "bound", at)
        if not isinstance(bound, (int, float)):
            raise _SchemaError(at, "bound must be a number")
        constraints.append(Constraint(str(_require(item, "qos", at)), float(bound)))

    return Query(
        inputs=frozenset(_stringList(_require(raw, "inputs", where), where + ".inputs", violations)),
        outputs=frozenset(
            _stringList(_require(raw, "outputs", where), where + ".outputs", violations)
        ),
        inputSpec=_condition(raw.get("input_spec"), where + ".input_spec", violations),
        outputReq=_condition(raw.get("output_req"), where + ".output_req", violations),
        objectives=tuple(objectives),
        constraints=tuple(constraints),
    )


def _section(raw: Mapping[str, Any], key: str) -> List[Any]:
    return _array(raw.get(key, []), key)


def decodeDocument(raw: Any) -> RepositoryDocument:
    """Turn parsed JSON into a validated document.

    Raises:
        ValidationError: listing every schema and semantic violation found.
    """
    violations: List[Violation] = []
    if not isinstance(raw, Mapping):
        raise ValidationError([Violation("schema", "document", "expected an object")])

    version = raw.get("version")
    if version != VERSION:
        violations.append(
            Violation(
                "version", "document", "expected version {}, got {}".format(VERSION, version)
            )
        )

    onto: Optional[Ontology] = None
    specs: List[QoSSpec] = []
    services: List[ServiceDescriptor] = []
    queries: List[Query] = []

    try:
        onto = _decodeOntology(_require(raw, "ontology", "document"), violations)
    except _SchemaError as e:
        violations.append(Violation("schema", e.where, e.message))

    # each entry is decoded on its own so one bad record does not hide the others
    for key, decode, sink in (
        ("qos_specs", lambda item, at: _decodeSpec(item, at), specs),
        ("services", lambda item, at: _decodeService(item, at, violations), services),
        ("queries", lambda item, at: _decodeQuery(item, at, violations), queries),
    ):
        try:
            items = _section(raw, key)
        except _SchemaError as e:
            violations.append(Violation("schema", e.where, e.message))
            continue
        for i, item in enumerate(items):
            try:
                sink.append(decode(item, "{}[{}]".format(key, i)))  # type: ignore
            except _SchemaError as e:
                violations.append(Violation("schema", e.where, e.message))

    metadata = raw.get("metadata", {})
    if not isinstance(metadata, Mapping):
        violations.append(Violation("schema", "metadata", "expected an object"))
        metadata = {}

    if onto is None:
        raise ValidationError(violations)

    doc = RepositoryDocument(
        ontology=onto,
        qosSpecs=tuple(specs),
        services=tuple(services),
        queries=tuple(queries),
        metadata={str(k): str(v) for k, v in metadata.items()},
    )
    violations += validateDocument(doc)
    if violations:
        raise ValidationError(violations)
    return doc


def validateDocument(doc: RepositoryDocument) -> List[Violation]:
    """Every semantic violation in an already decoded document."""
    violations = specViolations(doc.qosSpecs)

    seen = set()
    for service in doc.services:
        if service.id in seen:
            violations.append(
                Violation("duplicate-id", service.id, "service id used twice")
            )
        seen.add(service.id)
        if _RESERVED_ID.match(service.id):
            violations.append(
                Violation(
                    "reserved-id", service.id, "ids of the form S<level>_<k> are reserved"
                )
            )
        violations += validateService(doc.ontology, service, doc.qosSpecs)

    for i, query in enumerate(doc.queries):
        violations += validateQuery(
            doc.ontology, query, doc.qosSpecs, subject="query[{}]".format(i)
        )
    return violations


def parseDocument(text: str, path: str = "<string>") -> RepositoryDocument:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(path, e.lineno, e.colno, e.msg) from None
    return decodeDocument(raw)


def load(path: str) -> RepositoryDocument:
    """Read and fully validate a repository document.

    Raises:
        OSError: the file cannot be read.
        ParseError: the file is not well-formed JSON.
        ValidationError: the document breaks the schema or any invariant.
    """
    with open(path, encoding="utf-8") as f:
        text = f.read()
    doc = parseDocument(text, path)
    logger.debug("loaded %s: %d services", path, len(doc.services))
    return doc


def _conditionList(condition: Condition) -> List[str]:
    return sorted(condition.atoms)


def encodeDocument(doc: RepositoryDocument) -> Dict[str, Any]:
    onto = doc.ontology
    return {
        "version": VERSION,
        "metadata": dict(sorted(doc.metadata.items())),
        "ontology": {
            "concepts": sorted(onto.concepts),
            "subsumption_edges": [
                {"child": c, "parent": p} for c, p in sorted(onto.subsumptionEdges)
            ],
            "atoms": sorted(onto.atoms),
            "atom_implications": [
                {"stronger": s, "weaker": w} for s, w in sorted(onto.atomImplications)
            ],
            "parameter_map": dict(sorted(onto.parameterMap.items())),
        },
        "qos_specs": [_encodeSpec(spec) for spec in doc.qosSpecs],
        "services": [
            {
                "id": s.id,
                "inputs": sorted(s.inputs),
                "outputs": sorted(s.outputs),
                "method": s.method,
                "qos": dict(sorted(s.qos.items())),
                "pre": _conditionList(s.pre),
                "post": _conditionList(s.post),
            }
            for s in doc.services
        ],
        "queries": [
            {
                "inputs": sorted(q.inputs),
                "outputs": sorted(q.outputs),
                "input_spec": _conditionList(q.inputSpec),
                "output_req": _conditionList(q.outputReq),
                "objectives": [
                    {"qos": o.qos, "direction": o.direction.value} for o in q.objectives
                ],
                "constraints": [{"qos": c.qos, "bound": c.bound} for c in q.constraints],
            }
            for q in doc.queries
        ],
    }


def _encodeSpec(spec: QoSSpec) -> Dict[str, Any]:
    encoded: Dict[str, Any] = {
        "name": spec.name,
        "polarity": spec.polarity.value,
        "aggregation": spec.aggregation.value,
    }
    if spec.decimals is not None:
        encoded["decimals"] = spec.decimals
    return encoded


def dumps(doc: RepositoryDocument) -> str:
    return json.dumps(encodeDocument(doc), indent=2, sort_keys=True) + "\n"


def save(doc: RepositoryDocument, path: str) -> None:
    """Write ``doc`` to ``path``. I/O failures propagate as ``OSError``."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(doc))
    logger.debug("saved %d services to %s", len(doc.services), path)


def summarize(doc: RepositoryDocument) -> RepositoryStats:
    return RepositoryStats(
        concepts=len(doc.ontology.concepts),
        parameters=len(doc.ontology.parameterMap),
        atoms=len(doc.ontology.atoms),
        services=len(doc.services),
        queries=len(doc.queries),
        qosSpecs=len(doc.qosSpecs),
    )


def loadQuery(path: str, doc: RepositoryDocument) -> Query:
    """Read one query object, in the format of a ``queries`` entry, checked against ``doc``.

    Raises:
        OSError: the file cannot be read.
        ParseError: the file is not well-formed JSON.
        ValidationError: the query breaks the schema or references unknown names.
    """
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(path, e.lineno, e.colno, e.msg) from None

    violations: List[Violation] = []
    try:
        query = _decodeQuery(raw, "query", violations)
    except _SchemaError as e:
        raise ValidationError([Violation("schema", e.where, e.message)]) from None
    violations += validateQuery(doc.ontology, query, doc.qosSpecs)
    if violations:
        raise ValidationError(violations)
    return query
