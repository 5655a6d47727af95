"""Type-stable node pool.

Queue cells are carved from chunks that are kept alive for the life of
the pool and recycled forever as ``Node`` objects. Any reference ever
handed out therefore always addresses a structurally valid node, so a
thread holding a stale link can still read its ``cycle`` stamp without
faulting. Slots never go back to the allocator.

The free list is a Treiber stack over slot indices. Its top word packs a
version counter next to the index so that a pop racing with a concurrent
pop/push cycle of the same slot fails its compare-and-exchange instead of
splicing through a stale ``free_next``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, List, Optional

from .atomics import AtomicU64, MonotoneCounter

AVAILABLE = 0
CLAIMED = 1

_NO_SLOT = 0           # packed index 0 means "empty stack"; slots store index+1
_INDEX_MASK = 0xFFFFFFFF


class PoolInvariantError(AssertionError):
    """A debug-mode lifecycle rule was broken (e.g. releasing a live node)."""


# Node CAS operations serialize on a small shared set of locks instead of
# one lock per node: a million-node pool would otherwise spend most of its
# construction time and tens of megabytes on lock objects. Striping by
# slot index never deadlocks because no code path nests two node locks.
_STRIPE_COUNT = 64
_stripes = [threading.Lock() for _ in range(_STRIPE_COUNT)]


class Node:
    """Pooled queue cell.

    ``cycle`` is written once per lifetime, after acquisition and before
    the node is published; it is never mutated while the node is
    reachable. ``next``/``data``/``state`` are the shared fields and are
    only mutated through the ``cas_*`` methods once the node is visible
    to other threads. Plain stores are reserved for phases in which the
    holder has exclusive ownership (before linking, after unlinking).
    """

    __slots__ = ("cycle", "next", "data", "state", "poison_epoch",
                 "slot", "free_next", "_lock")

    def __init__(self, slot: int) -> None:
        self.cycle: int = 0
        self.next: Optional["Node"] = None
        self.data: object = None
        self.state: int = CLAIMED
        self.poison_epoch: int = 0
        self.slot: int = slot
        self.free_next: int = -1
        self._lock = _stripes[slot & (_STRIPE_COUNT - 1)]

    def cas_next(self, expected: Optional["Node"], desired: Optional["Node"]) -> bool:
        with self._lock:
            if self.next is expected:
                self.next = desired
                return True
            return False

    def cas_state(self, expected: int, desired: int) -> bool:
        with self._lock:
            if self.state == expected:
                self.state = desired
                return True
            return False

    def cas_data(self, expected: object, desired: object) -> bool:
        with self._lock:
            if self.data is expected:
                self.data = desired
                return True
            return False

    def __repr__(self) -> str:  # debugging aid only
        st = "AVAILABLE" if self.state == AVAILABLE else "CLAIMED"
        return f"<Node slot={self.slot} cycle={self.cycle} state={st}>"


@dataclass
class PoolStats:
    acquired_total: int
    recycled_total: int
    in_use: int
    in_use_high_water: int
    poison_violations: int
    capacity: int
    free: int


class NodePool:
    """Lock-free allocator of queue nodes backed by storage that is never freed.

    ``grow=False`` puts the pool in fixed-capacity test mode: ``acquire``
    returns ``None`` (EXHAUSTED) when the free stack is empty, signalling
    the caller to reclaim and retry. In the default growing mode the pool
    doubles its slot count instead, so acquire never fails.

    ``debug=True`` turns on poison bookkeeping: every recycle bumps the
    node's ``poison_epoch`` and :meth:`verify_epoch` counts any payload
    dereference made through a stale capture. The bookkeeping is skipped
    entirely in normal mode to keep the hot path free of it.
    """

    def __init__(self, initial_capacity: int, *, grow: bool = True,
                 debug: bool = False) -> None:
        if initial_capacity < 1:
            raise ValueError("initial_capacity must be >= 1")
        self._grow_enabled = grow
        self.debug = debug
        self._slots: List[Node] = []
        self._free_top = AtomicU64(_NO_SLOT)
        self._grow_lock = threading.Lock()
        self._acquired = MonotoneCounter()
        self._recycled = MonotoneCounter()
        self._in_use_high_water = 0
        self._poison_violations = AtomicU64(0)
        self._add_chunk(initial_capacity)

    # -- storage growth ------------------------------------------------

    def _add_chunk(self, count: int) -> None:
        base = len(self._slots)
        chunk = [Node(base + i) for i in range(count)]
        self._slots.extend(chunk)
        self._push_chain(chunk)

    def _grow(self) -> bool:
        # Doubling keeps growth amortized; chunks are never returned, so
        # every index handed out stays valid for the pool's lifetime.
        with self._grow_lock:
            if (self._free_top.load() & _INDEX_MASK) != _NO_SLOT:
                return True     # someone else grew or freed meanwhile
            if not self._grow_enabled:
                return False
            self._add_chunk(len(self._slots))
            return True

    # -- free stack ----------------------------------------------------

    def _push_chain(self, nodes: List[Node]) -> None:
        """Splice a privately linked chain onto the stack with one CAS."""
        if not nodes:
            return
        for i in range(len(nodes) - 1):
            nodes[i].free_next = nodes[i + 1].slot
        first, last = nodes[0], nodes[-1]
        top_cell = self._free_top
        while True:
            top = top_cell.load()
            last.free_next = (top & _INDEX_MASK) - 1
            ver = (top >> 32) + 1
            if top_cell.cas(top, (ver << 32) | (first.slot + 1)):
                return

    def _pop(self) -> Optional[Node]:
        top_cell = self._free_top
        slots = self._slots
        while True:
            top = top_cell.load()
            idx = (top & _INDEX_MASK) - 1
            if idx < 0:
                return None
            node = slots[idx]
            nxt = node.free_next
            ver = (top >> 32) + 1
            if top_cell.cas(top, (ver << 32) | (nxt + 1)):
                return node

    # -- public lifecycle ----------------------------------------------

    def acquire(self) -> Optional[Node]:
        """Take a node off the free list, growing if allowed.

        Returns ``None`` (EXHAUSTED) only in fixed-capacity mode with an
        empty free list. The node comes back with ``next``/``data`` reset
        and ``cycle`` cleared; its state stays CLAIMED so that a consumer
        still holding a stale link cannot claim it before the new owner
        publishes it.
        """
        # Hot path: the stack pop is _pop() with the CAS spelled out to
        # avoid method and context-manager overhead per enqueue.
        cell = self._free_top
        lock = cell._lock
        slots = self._slots
        while True:
            top = cell.value
            idx = (top & _INDEX_MASK) - 1
            if idx < 0:
                if not self._grow():
                    return None
                continue
            node = slots[idx]
            packed = (((top >> 32) + 1) << 32) | (node.free_next + 1)
            lock.acquire()
            if cell.value == top:
                cell.value = packed
                lock.release()
                break
            lock.release()
        node.cycle = 0
        # next/data were reset on release; state intentionally stays
        # CLAIMED until the enqueue publishes the node.
        acquired = self._acquired.bump()
        in_use = acquired - self._recycled.value
        if in_use > self._in_use_high_water:
            self._in_use_high_water = in_use
        return node

    def release_batch(self, nodes: Iterable[Node]) -> None:
        """Return unlinked, claimed nodes to the free list.

        Each node is scrubbed (``next``/``data`` to None) before it can
        be observed on the free list, so a stale traversal that walks
        onto it terminates instead of wandering into recycled links.
        """
        batch = list(nodes)
        if not batch:
            return
        debug = self.debug
        for node in batch:
            if debug and node.state == AVAILABLE:
                raise PoolInvariantError(
                    f"releasing node {node.slot} that is still AVAILABLE")
            node.next = None
            node.data = None
            if debug:
                node.poison_epoch += 1
        self._push_chain(batch)
        for _ in batch:
            self._recycled.bump()

    # -- poison / UAF tripwire ------------------------------------------

    def verify_epoch(self, node: Node, captured_epoch: int) -> bool:
        """Check a payload dereference against the epoch captured earlier.

        A mismatch means the node was recycled between capture and use,
        i.e. a use-after-free in a native implementation. Counted, not
        raised, so stress runs can report a total.
        """
        if node.poison_epoch != captured_epoch:
            self._poison_violations.increment()
            return False
        return True

    # -- introspection ---------------------------------------------------

    def stats(self) -> PoolStats:
        acquired = self._acquired.value
        recycled = self._recycled.value
        in_use = acquired - recycled
        cap = len(self._slots)
        return PoolStats(
            acquired_total=acquired,
            recycled_total=recycled,
            in_use=in_use,
            in_use_high_water=self._in_use_high_water,
            poison_violations=self._poison_violations.load(),
            capacity=cap,
            free=cap - in_use,
        )
