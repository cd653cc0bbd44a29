"""Helpers for sparseggm."""
import math
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, TypeVar

from .exceptions import ConfigError, JobCancelled

T = TypeVar("T")

_JOB = threading.local()


def round_half_away(value: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    if value >= 0:
        return int(math.floor(value + 0.5))

    return -int(math.floor(-value + 0.5))


def parse_config(text: str) -> Dict[str, str]:
    """Parse flat ``key = value`` text into a dict of raw strings."""
    config: Dict[str, str] = {}

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue

        try:
            key, value = line.split("=", 1)
        except ValueError as exception:
            raise ConfigError(f"Line {number} is not key = value: {raw!r}") from exception

        config[key.strip()] = value.strip()

    return config


def parse_list(value: str, cast: Callable[[str], T]) -> List[T]:
    """Split a comma separated config value and cast each item."""
    try:
        return [cast(item.strip()) for item in str(value).split(",") if item.strip()]
    except ValueError as exception:
        raise ConfigError(f"Cannot parse list value: {value!r}") from exception


def pair_label(i: int, j: int) -> str:
    """Return the CSV column label of an index pair."""
    return f"{i}_{j}"


@contextmanager
def stop_signal(event: threading.Event) -> Iterator[None]:
    """Make ``event`` the stop signal of sampler loops running in this thread."""
    previous = getattr(_JOB, "stop", None)
    _JOB.stop = event
    try:
        yield
    finally:
        _JOB.stop = previous


def check_stopped() -> None:
    """Raise JobCancelled once this thread's stop signal is set."""
    event = getattr(_JOB, "stop", None)
    if event is not None and event.is_set():
        raise JobCancelled("Job was stopped after its budget ran out")
