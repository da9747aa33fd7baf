from qosc.abstraction import dependencyGraphAt
from qosc.composition import optimalSingleQos
from qosc.errors import NoSolutionError
from qosc.refinement import composeWithRefinement, partialRefine
from qosc.testing.resources import (
    WORKED_SPECS,
    workedExampleHierarchy,
    workedExampleQuery,
)
from qosc.testing.setup import getRunningExample, getRunningHierarchy


def two_step_refinement():
    print("Building the hierarchy for two classes of three services each...")
    hierarchy = workedExampleHierarchy()
    print("Level counts:", hierarchy.counts())
    print(
        "Default representatives:",
        [c.representative for c in hierarchy.level1],
        "\n",
    )

    query = workedExampleQuery(200, 0.8)
    print("Query: response time at most 200, reliability at least 0.8")
    dg = dependencyGraphAt(hierarchy, query, 1)
    plan = optimalSingleQos(dg, query, "responseTime", WORKED_SPECS)
    print("The abstract plan over the representatives has QoS", plan.qos)

    session = partialRefine(plan, query, hierarchy, dg)
    assert session.bounds is not None
    print("Aggregated bounds:", dict(session.bounds.aggregated))
    print("Normalized violations:", session.normalized)
    print("Recomputed weights:", session.recomputedWeights)
    print("Rebindings:", session.rebindings)
    assert session.refined is not None
    print("Refined plan QoS:", session.refined.qos, "\n")
    assert session.refined.qos == {"responseTime": 160, "reliability": 0.94}

    tight = workedExampleQuery(50, 0.8)
    print("Query: response time at most 50, reliability at least 0.8")
    session = partialRefine(plan, tight, hierarchy, dg)
    print("Partial refinement outcome:", session.outcome.value)
    try:
        composeWithRefinement(hierarchy, tight)
    except NoSolutionError as e:
        print("Complete refinement down to level 0 found nothing:", e, "\n")


def running_example():
    doc = getRunningExample()
    hierarchy = getRunningHierarchy()
    query = doc.queries[0]

    print("Running example with", len(doc.services), "services")
    print("Level counts:", hierarchy.counts())
    for level in (0, 1, 2, 3):
        print("Level", level, "dependency graph:", len(dependencyGraphAt(hierarchy, query, level)))

    result = composeWithRefinement(hierarchy, query)
    print(
        "Solved at level",
        result.levelUsed,
        "with refinement",
        result.refinement,
    )
    print("Services:", sorted(result.plan.nodes))
    print("QoS:", result.plan.qos)


two_step_refinement()
running_example()
