from typing import Optional
import os

from ..abstraction import AbstractionHierarchy, buildHierarchy
from ..repository import RepositoryDocument, load

FIXTURES_DIR = os.path.join(
    os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))),
    "fixtures",
)

RUNNING_EXAMPLE_PATH = os.path.join(FIXTURES_DIR, "running_example.repo.json")


def getFixturePath(name: str) -> str:
    return os.path.join(FIXTURES_DIR, name)


runningExample: Optional[RepositoryDocument] = None


def getRunningExample() -> RepositoryDocument:
    global runningExample

    if runningExample is None:
        runningExample = load(RUNNING_EXAMPLE_PATH)

    return runningExample


runningHierarchy: Optional[AbstractionHierarchy] = None


def getRunningHierarchy() -> AbstractionHierarchy:
    global runningHierarchy

    if runningHierarchy is None:
        doc = getRunningExample()
        runningHierarchy = buildHierarchy(doc.ontology, doc.services, doc.qosSpecs)

    return runningHierarchy
