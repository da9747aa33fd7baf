import pytest

from .errors import DeadlineExceeded
from .util import Deadline, medianTime, stableDigest, timed


def test_deadline():
    unlimited = Deadline(None)
    unlimited.check()
    assert not unlimited.expired()

    with pytest.raises(DeadlineExceeded) as info:
        Deadline(0).check()
    assert info.value.deadlineMs == 0

    assert not Deadline(60_000).expired()


def test_timed():
    result, elapsed = timed(lambda: 42)

    assert result == 42
    assert elapsed >= 0


def test_medianTime():
    calls = []
    result, elapsed = medianTime(lambda: calls.append(1) or len(calls), 3)

    assert result == 3
    assert len(calls) == 3
    assert elapsed >= 0

    with pytest.raises(ValueError):
        medianTime(lambda: None, 0)


def test_stableDigest():
    assert stableDigest({"b": 1, "a": [1, 2]}) == stableDigest({"a": [1, 2], "b": 1})
    assert stableDigest({"a": 1}) != stableDigest({"a": 2})
    assert len(stableDigest([])) == 64
