"""Command-line entry points: ``python -m qosc <command>``.

Exit statuses: 0 success, 1 validation violations, 2 parse, load or argument errors,
3 no solution, 4 timeout.
"""

from dataclasses import replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence
import argparse
import json
import logging
import os
import sys

import pandas as pd

from .abstraction import (
    LEVELS,
    AbstractionHierarchy,
    buildHierarchy,
    dependencyGraphAt,
    hierarchyReport,
)
from .composition import (
    DEFAULT_DEADLINE_MS,
    countPlans,
    optimalSingleQos,
    reconstruct,
)
from .datagen import generate, loadConfig
from .errors import (
    ConfigError,
    DeadlineExceeded,
    NoSolutionError,
    ParseError,
    QoscError,
    ValidationError,
    Violation,
)
from .model import CompositionPlan, Query
from .refinement import composeWithRefinement
from .repository import (
    RepositoryDocument,
    load,
    loadQuery,
    parseDocument,
    save,
    summarize,
    validateDocument,
)
from .util import Deadline, medianTime, timed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_NO_SOLUTION = 3
EXIT_TIMEOUT = 4

DEFAULT_REPETITIONS = 5
DEADLINE_ENV = "QOSC_DEADLINE_MS"

BACKENDS = ("optimal-rt", "optimal-throughput", "constrained")
_OPTIMIZED = {"optimal-rt": "responseTime", "optimal-throughput": "throughput"}

BENCH_COLUMNS = [
    "dataset",
    "level",
    "repo_services",
    "dg_services",
    "dg_build_ms",
    "solve_ms",
    "plan_count",
    "objective_value",
    "refinement",
    "speedup",
]


def planToDict(plan: CompositionPlan) -> Dict[str, Any]:
    return {
        "level": plan.level,
        "services": sorted(plan.nodes),
        "edges": [list(edge) for edge in sorted(plan.producerEdges)],
        "qos": dict(sorted(plan.qos.items())),
        "bindings": {sid: list(chain) for sid, chain in sorted(plan.bindings.items())},
    }


def _writeJson(payload: Any, outPath: Optional[str]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if outPath is None:
        sys.stdout.write(text)
    else:
        with open(outPath, "w", encoding="utf-8") as f:
            f.write(text)


def _hierarchyOf(
    doc: RepositoryDocument, weights: Optional[Mapping[str, float]] = None
) -> AbstractionHierarchy:
    return buildHierarchy(doc.ontology, doc.services, doc.qosSpecs, weights)


def cmdAbstract(
    repoPath: str,
    outPath: Optional[str] = None,
    weights: Optional[Mapping[str, float]] = None,
) -> Dict[str, Any]:
    """Build the abstraction hierarchy of a repository and write its report.

    Returns:
        The report: per-level counts, rosters of classes, groups and trees, and the
        IIOE edges.
    """
    doc = load(repoPath)
    hierarchy, elapsed = timed(lambda: _hierarchyOf(doc, weights))
    report = hierarchyReport(hierarchy)
    report["counts"] = {str(level): n for level, n in hierarchy.counts().items()}
    report["summary"] = summarize(doc).toDict()
    report["build_ms"] = round(elapsed, 3)
    _writeJson(report, outPath)
    return report


def _selectQuery(
    doc: RepositoryDocument, queryIndex: int, queryFile: Optional[str]
) -> Query:
    if queryFile is not None:
        return loadQuery(queryFile, doc)
    if not 0 <= queryIndex < len(doc.queries):
        raise IndexError(
            "query index {} out of range, the document has {} queries".format(
                queryIndex, len(doc.queries)
            )
        )
    return doc.queries[queryIndex]


def _solve(
    hierarchy: AbstractionHierarchy,
    query: Query,
    level: int,
    backend: str,
    refine: bool,
    deadline: Deadline,
) -> Dict[str, Any]:
    if backend in _OPTIMIZED:
        dg = dependencyGraphAt(hierarchy, query, level)
        abstract = optimalSingleQos(
            dg, query, _OPTIMIZED[backend], hierarchy.specs, deadline
        )
        return {
            "level_used": level,
            "refinement": "none",
            "plan": planToDict(reconstruct(abstract, hierarchy)),
            "abstract_plan": planToDict(abstract),
            "trace": [],
        }

    result = composeWithRefinement(hierarchy, query, level, deadline, refine)
    return {
        "level_used": result.levelUsed,
        "refinement": result.refinement,
        "plan": planToDict(result.plan),
        "abstract_plan": planToDict(result.abstractPlan),
        "trace": [step.toDict() for step in result.trace],
    }


def cmdCompose(
    repoPath: str,
    queryIndex: int = 0,
    queryFile: Optional[str] = None,
    level: int = 3,
    backend: str = "constrained",
    refine: bool = True,
    deadlineMs: Optional[float] = DEFAULT_DEADLINE_MS,
    outPath: Optional[str] = None,
    weights: Optional[Mapping[str, float]] = None,
) -> Dict[str, Any]:
    """Answer one query and write the level-0 plan report.

    Raises:
        NoSolutionError: If the query cannot be answered.
        DeadlineExceeded: If ``deadlineMs`` elapses first.
    """
    if backend not in BACKENDS:
        raise ValueError("unknown backend {}".format(backend))
    doc = load(repoPath)
    query = _selectQuery(doc, queryIndex, queryFile)
    hierarchy = _hierarchyOf(doc, weights)

    deadline = Deadline(deadlineMs)
    report, elapsed = timed(
        lambda: _solve(hierarchy, query, level, backend, refine, deadline)
    )
    report["backend"] = backend
    report["solve_ms"] = round(elapsed, 3)
    _writeJson(report, outPath)
    return report


def cmdGen(configPath: str, outPath: str, seed: Optional[int] = None) -> RepositoryDocument:
    config = loadConfig(configPath)
    if seed is not None:
        config = replace(config, seed=seed)
    doc = generate(config)
    save(doc, outPath)
    return doc


def cmdValidate(repoPath: str) -> List[Violation]:
    """Every violation in a repository file; empty when the file is valid.

    Raises:
        OSError: the file cannot be read.
        ParseError: the file is not well-formed JSON.
    """
    with open(repoPath, encoding="utf-8") as f:
        text = f.read()
    try:
        doc = parseDocument(text, repoPath)
    except ValidationError as e:
        return [v for v in e.violations if isinstance(v, Violation)]
    return validateDocument(doc)


def _benchCell(
    hierarchy: AbstractionHierarchy,
    query: Query,
    level: int,
    backend: str,
    repetitions: int,
    deadlineMs: Optional[float],
) -> Dict[str, Any]:
    dg, buildMs = medianTime(
        lambda: dependencyGraphAt(hierarchy, query, level), repetitions
    )
    row: Dict[str, Any] = {
        "level": level,
        "repo_services": len(hierarchy.nodes(level)),
        "dg_services": len(dg),
        "dg_build_ms": buildMs,
        "plan_count": countPlans(dg, query),
    }

    objective = _OPTIMIZED.get(backend) or (
        query.objectives[0].qos if query.objectives else None
    )
    try:
        report, solveMs = medianTime(
            lambda: _solve(hierarchy, query, level, backend, True, Deadline(deadlineMs)),
            repetitions,
        )
    except NoSolutionError:
        row.update(solve_ms=None, objective_value=None, refinement="no-solution")
        return row
    except DeadlineExceeded:
        row.update(solve_ms=None, objective_value=None, refinement="timeout")
        return row

    value = report["plan"]["qos"].get(objective) if objective else None
    row.update(solve_ms=solveMs, objective_value=value, refinement=report["refinement"])
    return row


def cmdBench(
    repoPaths: Sequence[str],
    levels: Sequence[int] = LEVELS,
    repetitions: int = DEFAULT_REPETITIONS,
    backend: str = "constrained",
    queryFile: Optional[str] = None,
    deadlineMs: Optional[float] = DEFAULT_DEADLINE_MS,
    outCsv: Optional[str] = None,
) -> pd.DataFrame:
    """Time dependency-graph construction and solving per dataset, query and level.

    One row per (dataset, query, level); ``dataset`` is ``<file>#q<index>``. Times are
    medians over ``repetitions`` runs; ``speedup`` is the level-0 construction time over
    the level's, present only when level 0 was measured and NaN when either time is
    below timer resolution.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    for level in levels:
        if level not in LEVELS:
            raise ValueError("unknown level {}".format(level))

    rows: List[Dict[str, Any]] = []
    for path in repoPaths:
        doc = load(path)
        hierarchy, hierarchyMs = timed(lambda: _hierarchyOf(doc))
        logger.info("%s: hierarchy built in %.1f ms", path, hierarchyMs)
        queries = [loadQuery(queryFile, doc)] if queryFile else list(doc.queries)
        name = os.path.basename(path)
        for i, query in enumerate(queries):
            for level in levels:
                row = _benchCell(hierarchy, query, level, backend, repetitions, deadlineMs)
                row["dataset"] = "{}#q{}".format(name, i)
                rows.append(row)

    table = pd.DataFrame(rows, columns=BENCH_COLUMNS)
    base = table[table["level"] == 0].set_index("dataset")["dg_build_ms"]
    measured = table["dg_build_ms"].where(table["dg_build_ms"] > 0)
    table["speedup"] = table["dataset"].map(base.where(base > 0)) / measured

    if outCsv is None:
        table.to_csv(sys.stdout, index=False)
    else:
        table.to_csv(outCsv, index=False)
    return table


def _envDeadline() -> float:
    raw = os.environ.get(DEADLINE_ENV)
    if raw is None:
        return DEFAULT_DEADLINE_MS
    try:
        return float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "{} must be a number of milliseconds, got {!r}".format(DEADLINE_ENV, raw)
        ) from None


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1, got {}".format(value))
    return value


def _weight(text: str) -> Any:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected NAME=VALUE, got {!r}".format(text))
    return name, float(value)


def _levels(text: str) -> List[int]:
    levels = [int(part) for part in text.split(",") if part]
    if not levels or any(level not in LEVELS for level in levels):
        raise argparse.ArgumentTypeError("levels are a comma list drawn from 0..3")
    return levels


def _runAbstract(args: argparse.Namespace) -> int:
    cmdAbstract(args.repo, args.out, dict(args.weight) if args.weight else None)
    return EXIT_OK


def _runCompose(args: argparse.Namespace) -> int:
    cmdCompose(
        args.repo,
        args.query_index,
        args.query_file,
        args.level,
        args.backend,
        args.refine == "on",
        args.deadline_ms,
        args.out,
        dict(args.weight) if args.weight else None,
    )
    return EXIT_OK


def _runGen(args: argparse.Namespace) -> int:
    doc = cmdGen(args.config, args.out, args.seed)
    print("wrote {} services to {}".format(len(doc.services), args.out), file=sys.stderr)
    return EXIT_OK


def _runValidate(args: argparse.Namespace) -> int:
    violations = cmdValidate(args.repo)
    for violation in violations:
        print(violation)
    if violations:
        return EXIT_VIOLATIONS
    print("ok")
    return EXIT_OK


def _runBench(args: argparse.Namespace) -> int:
    cmdBench(
        args.repos,
        args.levels,
        args.repetitions,
        args.backend,
        args.query_file,
        args.deadline_ms,
        args.out,
    )
    return EXIT_OK


def buildParser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qosc", description="QoS-aware service composition over abstraction levels"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    abstract = commands.add_parser("abstract", help="build the abstraction hierarchy")
    abstract.add_argument("repo")
    abstract.add_argument("--out")
    abstract.add_argument(
        "--weight",
        type=_weight,
        action="append",
        help="representative-selection weight NAME=VALUE, repeatable",
    )
    abstract.set_defaults(run=_runAbstract)

    compose = commands.add_parser("compose", help="answer one query")
    compose.add_argument("repo")
    source = compose.add_mutually_exclusive_group()
    source.add_argument("--query-index", type=int, default=0)
    source.add_argument("--query-file")
    compose.add_argument("--level", type=int, choices=LEVELS, default=3)
    compose.add_argument("--backend", choices=BACKENDS, default="constrained")
    compose.add_argument("--refine", choices=("on", "off"), default="on")
    compose.add_argument("--deadline-ms", type=float, default=None)
    compose.add_argument("--out")
    compose.add_argument(
        "--weight",
        type=_weight,
        action="append",
        help="representative-selection weight NAME=VALUE, repeatable",
    )
    compose.set_defaults(run=_runCompose)

    gen = commands.add_parser("gen", help="generate a synthetic repository")
    gen.add_argument("config")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int)
    gen.set_defaults(run=_runGen)

    validate = commands.add_parser("validate", help="check a repository file")
    validate.add_argument("repo")
    validate.set_defaults(run=_runValidate)

    bench = commands.add_parser("bench", help="time every level on datasets")
    bench.add_argument("repos", nargs="+")
    bench.add_argument("--levels", type=_levels, default=list(LEVELS))
    bench.add_argument("--repetitions", type=_positive, default=DEFAULT_REPETITIONS)
    bench.add_argument("--backend", choices=BACKENDS, default="constrained")
    bench.add_argument("--query-file")
    bench.add_argument("--deadline-ms", type=float, default=None)
    bench.add_argument("--out")
    bench.set_defaults(run=_runBench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = buildParser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "deadline_ms", None) is None and hasattr(args, "deadline_ms"):
        try:
            args.deadline_ms = _envDeadline()
        except argparse.ArgumentTypeError as e:
            print("error: {}".format(e), file=sys.stderr)
            return EXIT_USAGE

    run: Callable[[argparse.Namespace], int] = args.run
    try:
        return run(args)
    except ValidationError as e:
        print(e, file=sys.stderr)
        return EXIT_VIOLATIONS
    except NoSolutionError as e:
        print("no solution: {}".format(e), file=sys.stderr)
        return EXIT_NO_SOLUTION
    except DeadlineExceeded as e:
        print("timeout: {}".format(e), file=sys.stderr)
        return EXIT_TIMEOUT
    except (ParseError, ConfigError, OSError, IndexError, ValueError) as e:
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_USAGE
    except QoscError as e:
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_USAGE
