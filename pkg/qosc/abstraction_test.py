import json

import networkx as nx
import pytest
from hypothesis import given, settings

from .abstraction import (
    LEVELS,
    buildHierarchy,
    buildIioeGraph,
    dependencyGraphAt,
    dominates,
    equivalent,
    hierarchyReport,
    iioe,
    normalizeQos,
    outputEquivalent,
    partitionLevel1,
    selectRepresentative,
)
from .datagen import generate
from .model import RELIABILITY, RESPONSE_TIME
from .testing.resources import (
    WORKED_SPECS,
    node,
    ontologies,
    randomInstance,
    seeds,
    serviceNodes,
    smallConfig,
    workedExampleHierarchy,
    workedExampleOntology,
    workedExampleServices,
)
from .testing.setup import getRunningExample, getRunningHierarchy
from .util import medianTime

SPECS = (RESPONSE_TIME, RELIABILITY)


def test_runningExample_level1():
    hierarchy = getRunningHierarchy()
    classes = {c.abstractId: c for c in hierarchy.level1}

    assert len(classes) == 14
    assert classes["S1_0"].members == ("S01", "S02", "S03", "S04", "S05")
    assert classes["S1_0"].representative == "S05"
    assert classes["S1_2"].members == ("S09", "S10", "S11", "S12", "S13")
    assert hierarchy.pool("S1_1") == ("S06", "S07", "S08")
    assert hierarchy.defaultChain("S1_0") == ("S1_0", "S05")


def test_runningExample_level2():
    hierarchy = getRunningHierarchy()
    groups = {g.abstractId: g for g in hierarchy.level2}
    roots = {g.root for g in hierarchy.level2}

    assert len(groups) == 12
    # both review-from-name services are dominated by the summarizing ones
    assert "S1_6" not in roots and "S1_7" not in roots
    assert groups["S2_4"].members == ("S1_4", "S1_6", "S1_7")
    assert groups["S2_5"].members == ("S1_5", "S1_6", "S1_7")


def test_runningExample_level3():
    hierarchy = getRunningHierarchy()
    trees = {t.abstractId: t for t in hierarchy.level3}

    assert set(hierarchy.iioeGraph.edges) == {("S2_1", "S2_2"), ("S2_4", "S2_5")}
    assert trees["S3_1"].treeMembers == ("S2_1", "S2_2")
    assert trees["S3_2"].treeMembers == ("S2_2",)
    assert hierarchy.trees()["S3_1"] == frozenset(["S3_2"])
    assert hierarchy.trees()["S3_4"] == frozenset(["S3_5"])
    assert hierarchy.trees()["S3_0"] == frozenset()


def test_runningExample_relations():
    nodes = getRunningHierarchy().nodes(1)
    onto = getRunningExample().ontology

    assert dominates(onto, nodes["S1_4"], nodes["S1_6"])
    assert not dominates(onto, nodes["S1_6"], nodes["S1_4"])
    assert outputEquivalent(onto, nodes["S1_1"], nodes["S1_2"])
    assert iioe(onto, nodes["S1_1"], nodes["S1_2"])
    assert not iioe(onto, nodes["S1_2"], nodes["S1_1"])


def test_equivalent_acrossParameterAliases():
    doc = getRunningExample()
    services = {s.id: s for s in doc.services}

    assert equivalent(doc.ontology, services["S01"], services["S02"])
    assert not equivalent(doc.ontology, services["S01"], services["S06"])


def test_chains():
    hierarchy = getRunningHierarchy()

    chain = hierarchy.defaultChain("S3_4")
    assert chain[:3] == ("S3_4", "S2_4", "S1_4")
    assert hierarchy.isValidChain(chain)
    assert not hierarchy.isValidChain(("S3_4", "S2_0", "S1_0", "S05"))
    assert not hierarchy.isValidChain(("S2_0",))
    assert hierarchy.levelOf("S2_3") == 2
    with pytest.raises(ValueError):
        hierarchy.nodes(4)


def test_normalizeQos():
    members = [
        node("a1", ["X"], ["Y"], responseTime=30, reliability=0.8),
        node("a2", ["X"], ["Y"], responseTime=70, reliability=0.95),
        node("a3", ["X"], ["Y"], responseTime=50, reliability=0.9),
    ]

    normalized = normalizeQos(members, WORKED_SPECS)

    assert normalized[("a1", "responseTime")] == 1.0
    assert normalized[("a2", "responseTime")] == 0.0
    assert normalized[("a3", "responseTime")] == pytest.approx(0.5)
    assert normalized[("a2", "reliability")] == 1.0
    assert normalized[("a3", "reliability")] == pytest.approx(2 / 3)


def test_normalizeQos_degenerate():
    members = [node("a", ["X"], ["Y"]), node("b", ["X"], ["Y"])]

    assert set(normalizeQos(members, SPECS).values()) == {1.0}
    with pytest.raises(ValueError):
        normalizeQos([], SPECS)


def test_selectRepresentative():
    members = [
        node("a3", ["X"], ["Y"], responseTime=50, reliability=0.9),
        node("a1", ["X"], ["Y"], responseTime=30, reliability=0.8),
        node("a2", ["X"], ["Y"], responseTime=70, reliability=0.95),
    ]

    assert selectRepresentative(members, {"responseTime": 1, "reliability": 0}, SPECS) == "a1"
    assert selectRepresentative(members, {"responseTime": 0, "reliability": 1}, SPECS) == "a2"
    assert selectRepresentative(members, {"responseTime": 0.5, "reliability": 0.5}, SPECS) == "a3"
    # every member scores zero, so the smallest id wins
    assert selectRepresentative(members, {}, SPECS) == "a1"


def test_selectRepresentative_badWeights():
    members = [node("a", ["X"], ["Y"])]

    with pytest.raises(ValueError):
        selectRepresentative(members, {"responseTime": 1.5}, SPECS)
    with pytest.raises(ValueError):
        selectRepresentative([], {}, SPECS)


def test_workedExample_hierarchy():
    hierarchy = workedExampleHierarchy()

    assert hierarchy.counts() == {0: 6, 1: 2, 2: 2, 3: 2}
    assert [c.representative for c in hierarchy.level1] == ["a1", "b1"]


def test_digest():
    onto, services = workedExampleOntology(), workedExampleServices()
    first = buildHierarchy(onto, services, WORKED_SPECS, {"responseTime": 1, "reliability": 0})
    second = buildHierarchy(onto, services, WORKED_SPECS, {"responseTime": 1, "reliability": 0})
    balanced = buildHierarchy(onto, services, WORKED_SPECS)

    assert first.digest == second.digest
    assert [c.representative for c in balanced.level1] == ["a3", "b3"]
    assert balanced.digest != first.digest


def test_hierarchyReport():
    report = hierarchyReport(getRunningHierarchy())

    assert report["counts"] == {"level0": 32, "level1": 14, "level2": 12, "level3": 12}
    assert report["iioe_edges"] == [["S2_1", "S2_2"], ["S2_4", "S2_5"]]
    assert report["digest"] == getRunningHierarchy().digest


@settings(max_examples=1000, deadline=None)
@given(ontologies(), serviceNodes())
def test_partition_isEquivalence(onto, nodes):
    classes = partitionLevel1(onto, nodes, SPECS)
    byId = {n.id: n for n in nodes}

    members = [sid for c in classes for sid in c.members]
    assert sorted(members) == sorted(byId)
    for c in classes:
        assert c.representative in c.members
        for sid in c.members:
            assert equivalent(onto, byId[c.members[0]], byId[sid])
    for c in classes:
        for other in classes:
            if c is not other:
                assert not equivalent(onto, byId[c.members[0]], byId[other.members[0]])


@settings(max_examples=1000, deadline=None)
@given(ontologies(), serviceNodes(minSize=3, maxSize=3))
def test_equivalent_laws(onto, nodes):
    a, b, c = nodes

    assert equivalent(onto, a, a)
    assert equivalent(onto, a, b) == equivalent(onto, b, a)
    if equivalent(onto, a, b) and equivalent(onto, b, c):
        assert equivalent(onto, a, c)


@settings(max_examples=1000, deadline=None)
@given(ontologies(), serviceNodes(minSize=2, maxSize=2))
def test_dominates_isStrict(onto, nodes):
    a, b = nodes

    assert not dominates(onto, a, a)
    assert not (dominates(onto, a, b) and dominates(onto, b, a))


@settings(max_examples=1000, deadline=None)
@given(ontologies(), serviceNodes(maxSize=8))
def test_iioeGraph_isReducedDag(onto, nodes):
    graph, trees = buildIioeGraph(onto, nodes, SPECS)

    assert nx.is_directed_acyclic_graph(graph)
    for u, v in list(graph.edges):
        reduced = graph.copy()
        reduced.remove_edge(u, v)
        assert not nx.has_path(reduced, u, v)

    byRoot = {t.root: t for t in trees}
    assert len(trees) == len(nodes)
    for tree in trees:
        assert tree.root in tree.treeMembers
        assert tree.representative in tree.treeMembers
        for member in tree.treeMembers:
            assert set(byRoot[member].treeMembers) <= set(tree.treeMembers)
    for u, v in graph.edges:
        assert v in byRoot[u].treeMembers

    full: "nx.DiGraph[str]" = nx.DiGraph()
    full.add_nodes_from(n.id for n in nodes)
    full.add_edges_from(
        (a.id, b.id) for a in nodes for b in nodes if a.id != b.id and iioe(onto, a, b)
    )
    rep = {m: head for head, data in graph.nodes(data=True) for m in data["members"]}
    for a in nodes:
        assert set(byRoot[a.id].treeMembers) == {a.id} | nx.descendants(full, a.id)
        for b in nodes:
            assert nx.has_path(full, a.id, b.id) == nx.has_path(graph, rep[a.id], rep[b.id])


@pytest.mark.parametrize("seed", range(10))
def test_cardinality_isMonotone(seed):
    doc = randomInstance(seed, nServices=40)
    counts = buildHierarchy(doc.ontology, doc.services, doc.qosSpecs).counts()

    assert counts[0] == 40
    assert counts[0] >= counts[1] >= counts[2] == counts[3]


@pytest.mark.parametrize("seed", seeds(100, quick=range(5)))
def test_levels_shrinkRepositoryAndGraphs(seed):
    doc = randomInstance(seed, nServices=50 + (seed % 10) * 50)
    hierarchy = buildHierarchy(doc.ontology, doc.services, doc.qosSpecs)
    counts = hierarchy.counts()

    assert [counts[level] for level in LEVELS] == sorted(counts.values(), reverse=True)
    for query in doc.queries:
        sizes = [len(dependencyGraphAt(hierarchy, query, level)) for level in LEVELS]
        assert sizes == sorted(sizes, reverse=True)


@pytest.mark.slow
def test_finalLevel_buildsGraphsFaster():
    doc = generate(smallConfig(3, nServices=2000))
    hierarchy = buildHierarchy(doc.ontology, doc.services, doc.qosSpecs)

    for query in doc.queries:
        _, base = medianTime(lambda: dependencyGraphAt(hierarchy, query, 0), 5)
        _, final = medianTime(lambda: dependencyGraphAt(hierarchy, query, 3), 5)
        assert base >= 2 * final


def test_hierarchyReport_isReproducible():
    doc = randomInstance(11, nServices=40)

    first, second = (
        hierarchyReport(buildHierarchy(doc.ontology, doc.services, doc.qosSpecs))
        for _ in range(2)
    )

    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)
