"""GIL-aware atomic cells for building the queue algorithms.

CPython executes one bytecode at a time, so a single attribute load or
store is atomic with respect to thread switches. Read-modify-write
sequences are not, so every compare-and-exchange here runs under a
per-cell mutex held for a handful of bytecodes and never across a
blocking call.

The resulting guarantees are strictly stronger than the algorithms
require: plain loads behave as acquire loads, a successful CAS as an
acquire-release operation, and the GIL makes everything sequentially
consistent besides. None of the cells ever holds its mutex while calling
user code.
"""

from __future__ import annotations

import itertools
import threading
from typing import Any, Optional


class MonotoneCounter:
    """Monotone counter whose bump is a single GIL-atomic call.

    Backed by ``itertools.count``, so reserving the next value needs no
    lock at all. ``value`` is a mirror written after each reservation:
    exact whenever no bump is in flight, possibly lagging otherwise.
    Use :class:`AtomicU64` instead when exact concurrent reads matter.
    """

    __slots__ = ("_bump", "value")

    def __init__(self) -> None:
        self._bump = itertools.count(1).__next__
        self.value = 0

    def bump(self) -> int:
        v = self._bump()
        self.value = v
        return v


class AtomicRef:
    """Atomic reference cell. CAS compares by identity."""

    __slots__ = ("value", "_lock")

    def __init__(self, initial: Any = None) -> None:
        self.value = initial
        self._lock = threading.Lock()

    def load(self) -> Any:
        return self.value

    def store(self, value: Any) -> None:
        self.value = value

    def cas(self, expected: Any, desired: Any) -> bool:
        with self._lock:
            if self.value is expected:
                self.value = desired
                return True
            return False


class AtomicU64:
    """Atomic unsigned counter. CAS compares by value.

    Python integers do not wrap; the name records the intended width of
    the counters the queue keeps in this cell (cycle stamps and friends),
    which would take centuries to exhaust at any realistic rate.
    """

    __slots__ = ("value", "_lock")

    def __init__(self, initial: int = 0) -> None:
        self.value = initial
        self._lock = threading.Lock()

    def load(self) -> int:
        return self.value

    def store(self, value: int) -> None:
        self.value = value

    def cas(self, expected: int, desired: int) -> bool:
        with self._lock:
            if self.value == expected:
                self.value = desired
                return True
            return False

    def increment(self) -> int:
        """Atomically add one and return the new value."""
        with self._lock:
            self.value += 1
            return self.value

    def add(self, delta: int) -> int:
        with self._lock:
            self.value += delta
            return self.value

    def fetch_max(self, candidate: int) -> int:
        """Raise the cell to ``candidate`` if larger; return the winner."""
        with self._lock:
            if candidate > self.value:
                self.value = candidate
            return self.value


class AtomicFlag:
    """Test-and-set flag used for single-owner sections."""

    __slots__ = ("value", "_lock")

    def __init__(self) -> None:
        self.value = False
        self._lock = threading.Lock()

    def test_and_set(self) -> bool:
        """Set the flag; return the previous value (True if already held)."""
        with self._lock:
            prev = self.value
            self.value = True
            return prev

    def clear(self) -> None:
        self.value = False

    def test(self) -> bool:
        return self.value
