from dataclasses import dataclass
from typing import List, Sequence


@dataclass(frozen=True)
class Violation:
    """One broken invariant, reported as data rather than raised.

    ``kind`` is a short kebab-case tag such as ``unknown-parameter`` or ``range``;
    ``subject`` names the offending entity.
    """

    kind: str
    subject: str
    message: str

    def __str__(self) -> str:
        return "[{}] {}: {}".format(self.kind, self.subject, self.message)


class QoscError(Exception):
    """Base class for every error raised by this package."""


class UnknownConceptError(QoscError):
    def __init__(self, concept: str) -> None:
        super().__init__("Unknown concept: {}".format(concept))
        self.concept = concept


class UnknownParameterError(QoscError):
    def __init__(self, parameter: str) -> None:
        super().__init__("Unknown parameter: {}".format(parameter))
        self.parameter = parameter


class UnknownAtomError(QoscError):
    def __init__(self, atom: str) -> None:
        super().__init__("Unknown condition atom: {}".format(atom))
        self.atom = atom


class ValidationError(QoscError):
    """Raised when a document or structure breaks one or more invariants.

    All violations found are carried, not just the first one.
    """

    def __init__(self, violations: Sequence[object]) -> None:
        self.violations: List[object] = list(violations)
        lines = "\n".join("  - {}".format(v) for v in self.violations)
        super().__init__(
            "{} validation violation(s):\n{}".format(len(self.violations), lines)
        )


class ParseError(QoscError):
    def __init__(self, path: str, line: int, column: int, message: str) -> None:
        super().__init__("{}:{}:{}: {}".format(path, line, column, message))
        self.path = path
        self.line = line
        self.column = column


class ConfigError(QoscError):
    pass


class NoSolutionError(QoscError):
    """No plan satisfies the query. ``trace`` holds the refinement steps tried, if any."""

    def __init__(self, message: str, trace: Sequence[object] = ()) -> None:
        super().__init__(message)
        self.trace = tuple(trace)


class DeadlineExceeded(QoscError):
    """Raised by solvers when the configured deadline elapses at a choice point."""

    def __init__(self, deadlineMs: float) -> None:
        super().__init__("Deadline of {} ms exceeded".format(deadlineMs))
        self.deadlineMs = deadlineMs


class StaleHierarchyError(QoscError):
    pass


class RefinementError(QoscError):
    pass
