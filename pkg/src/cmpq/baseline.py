"""Mutex-guarded linked FIFO queue, the benchmark comparison baseline.

Same call surface as the lock-free queue (enqueue / try_dequeue /
dequeue with the EMPTY marker) so the benchmark harness can drive either
implementation unchanged. One lock serializes everything; nodes are
ordinary heap objects with no pooling.
"""

from __future__ import annotations

import threading
from typing import Optional

from .queue import EMPTY


class _Node:
    __slots__ = ("payload", "next")

    def __init__(self, payload: object) -> None:
        self.payload = payload
        self.next: Optional["_Node"] = None


class LockedQueue:
    def __init__(self) -> None:
        dummy = _Node(None)
        self._head = dummy
        self._tail = dummy
        self._lock = threading.Lock()

    def enqueue(self, payload: object) -> None:
        if payload is None:
            raise ValueError("payload must not be None")
        node = _Node(payload)
        with self._lock:
            self._tail.next = node
            self._tail = node

    def try_dequeue(self):
        with self._lock:
            node = self._head.next
            if node is None:
                return EMPTY
            self._head = node
            payload = node.payload
            node.payload = None
            return payload

    def dequeue(self, retry_budget: Optional[int] = None):
        # The locked queue has no transient states; kept for API parity.
        return self.try_dequeue()
