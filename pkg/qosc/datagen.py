"""Seeded synthetic repositories and queries.

Services are generated one at a time. Each one is either fresh or a variant of an
earlier service: an equivalent clone, a dominating variant, or an IIOE variant with more
specific inputs. The mix is fixed by ``GeneratorConfig.redundancy``; the kinds that
were actually realized are recorded in the document metadata.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple
import json
import logging

import numpy as np

from .composition import DependencyGraph, buildDependencyGraph, optimalSingleQos
from .errors import ConfigError, NoSolutionError
from .model import (
    STANDARD_SPECS,
    Aggregation,
    Constraint,
    Objective,
    Polarity,
    QoSSpec,
    Query,
    ServiceDescriptor,
    nodeFromService,
)
from .ontology import Condition, ConceptId, Ontology, canonicalCondition
from .repository import VERSION, RepositoryDocument

logger = logging.getLogger(__name__)

KINDS = ("equivalent", "dominant", "iioe", "unrelated")

# attempts at drawing a fresh service whose signature is not taken yet
_FRESH_ATTEMPTS = 20
_QUERY_ATTEMPTS = 10


@dataclass(frozen=True)
class QoSDistribution:
    mean: float
    std: float
    low: float
    high: float


DEFAULT_DISTRIBUTIONS: Dict[str, QoSDistribution] = {
    "responseTime": QoSDistribution(100.0, 40.0, 1.0, 1000.0),
    "throughput": QoSDistribution(50.0, 20.0, 1.0, 500.0),
    "reliability": QoSDistribution(0.9, 0.05, 0.5, 1.0),
    "availability": QoSDistribution(0.9, 0.05, 0.5, 1.0),
}


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 1
    nConcepts: int = 40
    subsumptionDensity: float = 0.05
    nParameters: int = 60
    nAtoms: int = 10
    nServices: int = 200
    # fractions of equivalent, dominant, iioe and unrelated services
    redundancy: Tuple[float, float, float, float] = (0.4, 0.2, 0.2, 0.2)
    qosDistributions: Mapping[str, QoSDistribution] = field(
        default_factory=lambda: dict(DEFAULT_DISTRIBUTIONS), hash=False
    )
    nQueries: int = 5
    constraintTightness: float = 0.5
    qosSpecs: Tuple[QoSSpec, ...] = STANDARD_SPECS


_KEYS = {
    "seed": "seed",
    "n_concepts": "nConcepts",
    "subsumption_density": "subsumptionDensity",
    "n_parameters": "nParameters",
    "n_atoms": "nAtoms",
    "n_services": "nServices",
    "redundancy": "redundancy",
    "qos_distributions": "qosDistributions",
    "n_queries": "nQueries",
    "constraint_tightness": "constraintTightness",
}


def configFromDict(raw: Mapping[str, Any]) -> GeneratorConfig:
    """Map a JSON object with snake_case keys onto ``GeneratorConfig``.

    Raises:
        ConfigError: On unknown keys or values of the wrong shape.
    """
    unknown = sorted(set(raw) - set(_KEYS))
    if unknown:
        raise ConfigError("unknown generator config key(s): " + ", ".join(unknown))

    values: Dict[str, Any] = {}
    for key, name in _KEYS.items():
        if key not in raw:
            continue
        value = raw[key]
        if key == "redundancy":
            try:
                value = (
                    float(value["equivalent"]),
                    float(value["dominant"]),
                    float(value["iioe"]),
                    float(value["unrelated"]),
                )
            except (KeyError, TypeError, ValueError):
                raise ConfigError(
                    "redundancy needs equivalent, dominant, iioe and unrelated fractions"
                ) from None
        elif key == "qos_distributions":
            try:
                value = {
                    **DEFAULT_DISTRIBUTIONS,
                    **{
                        str(name): QoSDistribution(
                            float(d["mean"]), float(d["std"]), float(d["low"]), float(d["high"])
                        )
                        for name, d in value.items()
                    },
                }
            except (KeyError, TypeError, ValueError, AttributeError):
                raise ConfigError(
                    "each qos distribution needs mean, std, low and high"
                ) from None
        values[name] = value

    config = GeneratorConfig(**values)
    checkConfig(config)
    return config


def loadConfig(path: str) -> GeneratorConfig:
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(
                "{}:{}:{}: {}".format(path, e.lineno, e.colno, e.msg)
            ) from None
    if not isinstance(raw, dict):
        raise ConfigError("{}: expected a JSON object".format(path))
    return configFromDict(raw)


def checkConfig(config: GeneratorConfig) -> None:
    """Raise ``ConfigError`` if the configuration cannot be realized."""
    if config.nConcepts < 1 or config.nServices < 0 or config.nQueries < 0:
        raise ConfigError("counts must be non-negative and n_concepts at least 1")
    if config.nParameters < config.nConcepts:
        raise ConfigError("every concept needs a parameter: n_parameters < n_concepts")
    if config.nAtoms < 0:
        raise ConfigError("n_atoms must be non-negative")
    for name, value in (
        ("subsumption_density", config.subsumptionDensity),
        ("constraint_tightness", config.constraintTightness),
        *zip(KINDS, config.redundancy),
    ):
        if not 0.0 <= value <= 1.0:
            raise ConfigError("{}={} is outside [0, 1]".format(name, value))
    if abs(sum(config.redundancy) - 1.0) > 1e-9:
        raise ConfigError("redundancy fractions must sum to 1")
    if config.nConcepts < 2 and (config.redundancy[1] > 0 or config.redundancy[2] > 0):
        raise ConfigError("dominant and IIOE variants need at least two concepts")

    for spec in config.qosSpecs:
        dist = config.qosDistributions.get(spec.name)
        if dist is None:
            raise ConfigError("no distribution for QoS parameter " + spec.name)
        if dist.low > dist.high or dist.std < 0:
            raise ConfigError("bad distribution for " + spec.name)
        if spec.aggregation == Aggregation.MULTIPLICATIVE:
            if dist.low < 0.0 or dist.high > 1.0:
                raise ConfigError(spec.name + " must be truncated within [0, 1]")
        elif dist.low <= 0.0:
            raise ConfigError(spec.name + " must be truncated above 0")


def _between(worst: float, best: float, tightness: float) -> float:
    """The point ``tightness`` of the way from ``worst`` to ``best``, kept inside both."""
    if tightness >= 1.0:
        return best
    if tightness <= 0.0:
        return worst
    value = worst + tightness * (best - worst)
    return min(max(value, min(worst, best)), max(worst, best))


class _Generator:
    def __init__(self, config: GeneratorConfig) -> None:
        self.config = config
        self.rng = np.random.RandomState(config.seed)
        self.concepts = ["C{}".format(i) for i in range(config.nConcepts)]
        self.atoms = ["a{}".format(i) for i in range(config.nAtoms)]
        self.edges: List[Tuple[str, str]] = []
        self.implications: List[Tuple[str, str]] = []
        self.parameterMap: Dict[str, ConceptId] = {}
        self.parametersOf: Dict[ConceptId, List[str]] = {c: [] for c in self.concepts}
        self.services: List[ServiceDescriptor] = []
        self.signatures: Set[Tuple[Any, ...]] = set()
        self.realized: Dict[str, int] = {kind: 0 for kind in KINDS}

    def ontology(self) -> Ontology:
        density = self.config.subsumptionDensity
        # lower index is the more general end, so edges never close a cycle
        for j in range(1, len(self.concepts)):
            for i in range(j):
                if self.rng.uniform() < density:
                    self.edges.append((self.concepts[j], self.concepts[i]))
        for j in range(1, len(self.atoms)):
            for i in range(j):
                if self.rng.uniform() < density:
                    self.implications.append((self.atoms[j], self.atoms[i]))

        for k in range(self.config.nParameters):
            param = "p{}".format(k)
            if k < len(self.concepts):
                concept = self.concepts[k]
            else:
                concept = self.concepts[self.rng.randint(len(self.concepts))]
            self.parameterMap[param] = concept
            self.parametersOf[concept].append(param)

        self.onto = Ontology.build(
            self.concepts, self.edges, self.parameterMap, self.atoms, self.implications
        )
        self.parents = {c: sorted(p for ch, p in self.edges if ch == c) for c in self.concepts}
        self.children = {c: sorted(ch for ch, p in self.edges if p == c) for c in self.concepts}
        return self.onto

    def _pick(self, items: Sequence[str]) -> str:
        return items[self.rng.randint(len(items))]

    def _sample(self, items: Sequence[str], low: int, high: int) -> List[str]:
        size = min(len(items), self.rng.randint(low, high + 1))
        return sorted(self.rng.choice(list(items), size=size, replace=False).tolist())

    def _param(self, concept: ConceptId) -> str:
        return self._pick(self.parametersOf[concept])

    def _truncatedNormal(self, dist: QoSDistribution) -> float:
        for _ in range(1000):
            value = float(self.rng.normal(dist.mean, dist.std))
            if dist.low <= value <= dist.high:
                return round(value, 4)
        return round(float(self.rng.uniform(dist.low, dist.high)), 4)

    def _qos(self) -> Dict[str, float]:
        return {
            spec.name: self._truncatedNormal(self.config.qosDistributions[spec.name])
            for spec in self.config.qosSpecs
        }

    def _conceptsOf(self, params: Sequence[str]) -> Set[ConceptId]:
        return {self.parameterMap[p] for p in params}

    def _signature(self, service: ServiceDescriptor) -> Tuple[Any, ...]:
        node = nodeFromService(self.onto, service)
        return (
            node.inputs,
            node.outputs,
            canonicalCondition(self.onto, node.pre),
            canonicalCondition(self.onto, node.post),
        )

    def _service(
        self,
        inputs: Sequence[str],
        outputs: Sequence[str],
        pre: Sequence[str],
        post: Sequence[str],
    ) -> ServiceDescriptor:
        index = len(self.services)
        return ServiceDescriptor(
            id="s{:05d}".format(index),
            inputs=frozenset(inputs),
            outputs=frozenset(outputs),
            method="op{}".format(index),
            qos=self._qos(),
            pre=Condition(frozenset(pre)),
            post=Condition(frozenset(post)),
        )

    def fresh(self) -> ServiceDescriptor:
        service = None
        for _ in range(_FRESH_ATTEMPTS):
            inputs = self._sample(self.concepts, 1, 3)
            remaining = [c for c in self.concepts if c not in inputs] or self.concepts
            outputs = self._sample(remaining, 1, 2)
            service = self._service(
                [self._param(c) for c in inputs],
                [self._param(c) for c in outputs],
                self._sample(self.atoms, 0, 2),
                self._sample(self.atoms, 0, 2),
            )
            if self._signature(service) not in self.signatures:
                break
        assert service is not None
        return service

    def equivalentTo(self, proto: ServiceDescriptor) -> ServiceDescriptor:
        # alias parameter names, keep the concepts
        return self._service(
            [self._param(c) for c in sorted(self._conceptsOf(sorted(proto.inputs)))],
            [self._param(c) for c in sorted(self._conceptsOf(sorted(proto.outputs)))],
            sorted(proto.pre.atoms),
            sorted(proto.post.atoms),
        )

    def dominating(self, proto: ServiceDescriptor) -> Optional[ServiceDescriptor]:
        inputs = sorted(self._conceptsOf(sorted(proto.inputs)))
        outputs = sorted(self._conceptsOf(sorted(proto.outputs)))
        pre = sorted(proto.pre.atoms)
        post = set(proto.post.atoms)

        # strictly more output, through a new postcondition atom or a new output concept
        entailed = self.onto.entailed(proto.post)
        extraAtoms = [a for a in self.atoms if a not in entailed]
        covered = self.onto.upwardClosure(outputs)
        extraConcepts = [
            c for c in self.concepts if c not in covered and c not in inputs
        ]
        if extraAtoms and (not extraConcepts or self.rng.uniform() < 0.5):
            post.add(self._pick(extraAtoms))
        elif extraConcepts:
            outputs.append(self._pick(extraConcepts))
        else:
            return None

        # optionally also easier to activate
        if self.rng.uniform() < 0.5:
            general = [i for i, c in enumerate(inputs) if self.parents[c]]
            if general:
                k = general[self.rng.randint(len(general))]
                inputs[k] = self._pick(self.parents[inputs[k]])
        if pre and self.rng.uniform() < 0.5:
            pre.remove(self._pick(pre))

        return self._service(
            [self._param(c) for c in sorted(set(inputs))],
            [self._param(c) for c in sorted(set(outputs))],
            pre,
            sorted(post),
        )

    def iioeVariant(self, proto: ServiceDescriptor) -> Optional[ServiceDescriptor]:
        inputs = sorted(self._conceptsOf(sorted(proto.inputs)))
        pre = set(proto.pre.atoms)
        specific = [i for i, c in enumerate(inputs) if self.children[c]]
        entailed = self.onto.entailed(proto.pre)
        stronger = [a for a in self.atoms if a not in entailed]

        if specific and (not stronger or self.rng.uniform() < 0.5):
            k = specific[self.rng.randint(len(specific))]
            inputs[k] = self._pick(self.children[inputs[k]])
        elif stronger:
            pre.add(self._pick(stronger))
        else:
            return None

        return self._service(
            [self._param(c) for c in sorted(set(inputs))],
            sorted(proto.outputs),
            sorted(pre),
            sorted(proto.post.atoms),
        )

    def add(self, kind: str, service: ServiceDescriptor) -> None:
        self.services.append(service)
        self.signatures.add(self._signature(service))
        self.realized[kind] += 1

    def repository(self) -> None:
        counts = [int(round(p * self.config.nServices)) for p in self.config.redundancy]
        counts[-1] = self.config.nServices - sum(counts[:-1])
        kinds = [kind for kind, n in zip(KINDS, counts) for _ in range(max(n, 0))]
        self.rng.shuffle(kinds)

        for kind in kinds:
            variant: Optional[ServiceDescriptor] = None
            if kind != "unrelated" and self.services:
                proto = self.services[self.rng.randint(len(self.services))]
                if kind == "equivalent":
                    variant = self.equivalentTo(proto)
                elif kind == "dominant":
                    variant = self.dominating(proto)
                else:
                    variant = self.iioeVariant(proto)
            if variant is None:
                self.add("unrelated", self.fresh())
            else:
                self.add(kind, variant)

    def _outputRequirement(self, dg: DependencyGraph, outputs: Set[ConceptId]) -> Condition:
        producers = [
            dg.nodes[sid]
            for sid in dg.serviceIds()
            if dg.nodes[sid].outputs & outputs and dg.nodes[sid].post.atoms
        ]
        if not producers or self.rng.uniform() < 0.5:
            return Condition()
        chosen = producers[self.rng.randint(len(producers))]
        return Condition.of(self._pick(sorted(chosen.post.atoms)))

    def query(self) -> Optional[Query]:
        nodes = [nodeFromService(self.onto, s) for s in self.services]
        seed = self.services[self.rng.randint(len(self.services))]
        inputs = set(seed.inputs)
        if self.rng.uniform() < 0.5:
            inputs.add(self._param(self._pick(self.concepts)))
        draft = Query(frozenset(inputs), frozenset(), inputSpec=seed.pre)
        dg = buildDependencyGraph(self.onto, nodes, draft)

        given = self._conceptsOf(sorted(inputs))
        offered = sorted(
            {c for sid in dg.serviceIds() for c in dg.nodes[sid].outputs} - given
        )
        if not offered:
            return None
        outputs = set(self._sample(offered, 1, 2))

        specs = self.config.qosSpecs
        objective = next(
            (s for s in specs if s.aggregation == Aggregation.ADDITIVE), specs[0]
        )
        query = Query(
            inputs=frozenset(inputs),
            outputs=frozenset(self._param(c) for c in sorted(outputs)),
            inputSpec=seed.pre,
            outputReq=self._outputRequirement(dg, outputs),
            objectives=(Objective(objective.name, objective.direction),),
        )
        return query.withConstraints(self._anchoredConstraints(query))

    def _anchoredConstraints(self, query: Query) -> List[Constraint]:
        nodes = [nodeFromService(self.onto, s) for s in self.services]
        dg = buildDependencyGraph(self.onto, nodes, query)
        specs = self.config.qosSpecs
        constraints = []
        for spec in specs:
            flipped = replace(
                spec,
                polarity=Polarity.NEGATIVE
                if spec.polarity == Polarity.POSITIVE
                else Polarity.POSITIVE,
            )
            reversed_ = [flipped if s.name == spec.name else s for s in specs]
            best = optimalSingleQos(dg, query, spec.name, specs, exact=False)
            worst = optimalSingleQos(dg, query, spec.name, reversed_, exact=False)
            b, w = best.qos[spec.name], worst.qos[spec.name]
            bound = _between(w, b, self.config.constraintTightness)
            constraints.append(Constraint(spec.name, spec.rounded(bound)))
        return constraints

    def queries(self) -> List[Query]:
        result: List[Query] = []
        if not self.services:
            return result
        for _ in range(self.config.nQueries):
            for _ in range(_QUERY_ATTEMPTS):
                try:
                    query = self.query()
                except NoSolutionError:
                    continue
                if query is not None:
                    result.append(query)
                    break
        return result


def generate(config: GeneratorConfig) -> RepositoryDocument:
    """Generate a repository document, deterministically for a given seed.

    Raises:
        ConfigError: If the configuration is invalid or infeasible.
    """
    checkConfig(config)
    gen = _Generator(config)
    onto = gen.ontology()
    gen.repository()
    queries = gen.queries()

    metadata = {"generator": "qosc.datagen", "seed": str(config.seed), "version": VERSION}
    for kind in KINDS:
        metadata["realized_" + kind] = str(gen.realized[kind])

    logger.info(
        "generated %d services, %d queries (seed %d, realized %s)",
        len(gen.services),
        len(queries),
        config.seed,
        gen.realized,
    )
    return RepositoryDocument(
        ontology=onto,
        qosSpecs=tuple(config.qosSpecs),
        services=tuple(gen.services),
        queries=tuple(queries),
        metadata=metadata,
    )
