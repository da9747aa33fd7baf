from typing import Any, Callable, List, Optional, Tuple, TypeVar
import hashlib
import json
import logging
import statistics
import time

from .errors import DeadlineExceeded

logger = logging.getLogger(__name__)

T = TypeVar("T")


class Deadline:
    """A wall-clock budget that solvers poll at their choice points.

    A deadline of ``None`` never expires. Checks are cheap enough to be called once per
    search node.
    """

    def __init__(self, deadlineMs: Optional[float]) -> None:
        self.deadlineMs = deadlineMs
        self.startedAt = time.perf_counter()
        self.expiresAt: Optional[float] = (
            None if deadlineMs is None else self.startedAt + deadlineMs / 1000.0
        )

    def expired(self) -> bool:
        return self.expiresAt is not None and time.perf_counter() >= self.expiresAt

    def check(self) -> None:
        if self.expired():
            assert self.deadlineMs is not None
            logger.warning("deadline of %s ms exceeded", self.deadlineMs)
            raise DeadlineExceeded(self.deadlineMs)

    def elapsedMs(self) -> float:
        return (time.perf_counter() - self.startedAt) * 1000.0


def timed(fn: Callable[[], T]) -> Tuple[T, float]:
    """Run ``fn`` once and return its result with the elapsed time in milliseconds."""
    start = time.perf_counter()
    result = fn()
    return result, (time.perf_counter() - start) * 1000.0


def medianTime(fn: Callable[[], T], repetitions: int) -> Tuple[T, float]:
    """Run ``fn`` ``repetitions`` times and return the last result with the median time.

    Args:
        fn: A zero-argument callable. Its result must not depend on the repetition.
        repetitions: Number of runs, at least 1.

    Returns:
        A tuple of the result of the final run and the median elapsed milliseconds.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1, got {}".format(repetitions))

    samples: List[float] = []
    result: Any = None
    for _ in range(repetitions):
        result, elapsed = timed(fn)
        samples.append(elapsed)

    return result, statistics.median(samples)


def stableDigest(payload: Any) -> str:
    """SHA-256 over the canonical JSON encoding of ``payload``."""
    encoded = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()
