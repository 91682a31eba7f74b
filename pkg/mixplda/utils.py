from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np

from mixplda.generics import Interval

__all__ = [
    "US_PER_SECOND",
    "to_us",
    "to_seconds",
    "to_ms",
    "merge_intervals",
    "overlap",
    "run_parallel",
    "median",
]

US_PER_SECOND = 1_000_000

T = TypeVar("T")
R = TypeVar("R")


def to_us(seconds: float) -> int:
    """
    Function converts seconds to integer microseconds.

    """
    return int(round(seconds * US_PER_SECOND))


def to_seconds(us: int) -> float:
    return us / US_PER_SECOND


def to_ms(seconds: float) -> int:
    """
    Function returns millisecond key used to match time-stamped records across files.

    """
    return int(round(seconds * 1000))


def merge_intervals(intervals: Iterable[Interval], tolerance: float = 1e-9) -> list[Interval]:
    """
    Function returns sorted union of intervals, touching intervals are joined.

    """
    merged: list[list[float]] = []
    for onset, offset in sorted(intervals):
        if merged and onset <= merged[-1][1] + tolerance:
            merged[-1][1] = max(merged[-1][1], offset)
        else:
            merged.append([onset, offset])
    return [(onset, offset) for onset, offset in merged]


def overlap(first: Interval, second: Interval) -> float:
    return max(0.0, min(first[1], second[1]) - max(first[0], second[0]))


def run_parallel(func: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """
    Function maps func over items in a thread pool, results keep the input order.

    """
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(func, items))


def median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))
