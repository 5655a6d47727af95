"""Lock-free MPMC FIFO queue with cycle-windowed node reclamation.

Every enqueued node carries an immutable ``cycle`` stamp drawn from a
global counter. Consumers announce the stamp of each node they claim in
``deque_cycle``; reclamation trails that frontier by a configurable
window, so a node can be freed only once it is claimed *and* every
consumer has moved at least ``window_size`` dequeue cycles past it. The
two conditions together rule out use-after-free structurally and confine
pointer-reuse (ABA) hazards to outside the window, without any
per-thread registration or cross-thread handshakes.

Progress notes:

* enqueue links at the physical tail and simply retries with fresh state
  when the tail is stale; there is no helping.
* dequeue starts at a shared ``scan_cursor`` pointing at the first
  likely-claimable node, making the common case O(1). Cursor advances
  validate both the pointer and its cycle stamp, so a stale capture can
  never move the cursor after the slot was recycled.
* reclamation is a single-owner batched pass that splices a prefix of
  expired claimed nodes off the list with one compare-and-exchange.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

from .atomics import AtomicFlag, AtomicRef, AtomicU64, MonotoneCounter
from .pool import AVAILABLE, CLAIMED, Node, NodePool, PoolStats


class _Result:
    """Unique, repr-friendly marker returned instead of a payload."""

    __slots__ = ("_name",)

    def __init__(self, name: str) -> None:
        self._name = name

    def __repr__(self) -> str:
        return self._name


#: Queue had no claimable element (linearizes at the null-successor read).
EMPTY = _Result("EMPTY")
#: A transient race was observed; nothing was lost, caller may retry.
RETRY = _Result("RETRY")


class QueueFull(RuntimeError):
    """Fixed-capacity pool exhausted and a reclamation pass freed nothing."""


def _relax(retries: int = 4) -> None:
    # Cooperative pause for spin loops. A bare yield is not enough under
    # the GIL: a spinner that keeps winning the interpreter can shut out
    # the one thread whose step would unblock it (e.g. a linker that was
    # preempted between publishing a node and bumping the tail), so the
    # pause escalates to real microsleeps.
    if retries <= 8:
        time.sleep(0)
    else:
        time.sleep(0.00002 * min(retries - 8, 10))


def compute_window(ops_per_second, resilience_seconds, min_window: int) -> int:
    """Size a protection window from expected dequeue rate and stall budget.

    Returns ``max(min_window, ceil(ops_per_second * resilience_seconds))``.
    The product is evaluated exactly (decimal inputs are not rounded
    through binary floats), so e.g. one million ops/s at a 10 ms budget
    yields exactly 10_000.
    """
    if ops_per_second < 0 or resilience_seconds < 0 or min_window < 0:
        raise ValueError("window inputs must be non-negative")
    demand = Fraction(str(ops_per_second)) * Fraction(str(resilience_seconds))
    need = -(-demand.numerator // demand.denominator)
    return max(min_window, need)


def safe_cycle(deque_cycle: int, window: int) -> int:
    """Oldest cycle still protected, saturating at zero."""
    s = deque_cycle - window
    return s if s > 0 else 0


def is_reclaimable(node: Node, safe: int) -> bool:
    """True iff the node is claimed and strictly older than ``safe``.

    Both conditions are load-bearing: the state check keeps live elements
    pinned regardless of age, the cycle check keeps recently touched
    nodes pinned regardless of state.
    """
    return node.state != AVAILABLE and node.cycle < safe


@dataclass(frozen=True)
class QueueConfig:
    """Tuning knobs for the queue.

    ``window_size`` is the protection window W (in dequeue cycles),
    ``trigger_period`` the number of enqueues between reclamation
    attempts, ``min_batch_size`` the smallest prefix worth splicing out.
    Defaults keep retained memory in the tens of kilobytes while
    tolerating millisecond-scale stalls at about a million ops per
    second.
    """

    window_size: int = 4096
    trigger_period: int = 1024
    min_batch_size: int = 32
    min_window: int = 1024
    trigger: str = "modulo"      # "modulo" or "bernoulli"
    trigger_seed: int = 0

    def __post_init__(self) -> None:
        if not (self.window_size >= self.min_window >= 1):
            raise ValueError("need window_size >= min_window >= 1")
        if self.trigger_period < 1:
            raise ValueError("trigger_period must be >= 1")
        if self.min_batch_size < 1:
            raise ValueError("min_batch_size must be >= 1")
        if self.trigger not in ("modulo", "bernoulli"):
            raise ValueError("trigger must be 'modulo' or 'bernoulli'")


class _CursorRef:
    """Cursor cell whose CAS validates the referent's cycle stamp too.

    Pointer values repeat once slots are recycled; cycle stamps never do.
    Checking both inside one critical section means a capture taken
    before a recycle cannot advance the cursor afterwards, even though
    the pointer compares equal.
    """

    __slots__ = ("value", "_lock", "audit")

    def __init__(self, node: Node) -> None:
        self.value = node
        self._lock = threading.Lock()
        self.audit: Optional[list] = None   # (expected_cycle, seen_cycle, ok)

    def load(self) -> Node:
        return self.value

    def cas(self, expected_node: Node, expected_cycle: int, desired: Node) -> bool:
        with self._lock:
            cur = self.value
            ok = cur is expected_node and cur.cycle == expected_cycle
            if ok:
                self.value = desired
            if self.audit is not None:
                self.audit.append((expected_cycle, cur.cycle, ok))
            return ok


@dataclass
class QueueStats:
    cycle: int
    deque_cycle: int
    reclaim_attempts: int
    reclaim_passes: int
    reclaim_freed: int
    pool: PoolStats


class CmpQueue:
    """Unbounded strict-FIFO queue safe for any number of producers and
    consumers.

    Payloads are arbitrary non-None objects; None is reserved as the
    consumed-slot marker inside nodes. ``try_dequeue`` is tri-state
    (payload, EMPTY, RETRY); ``dequeue`` hides RETRY behind a retry loop.

    A ``probe`` (any object with ``point(label)``) receives a callback
    after every shared-memory step of the three algorithms; the
    verification harness uses it for deterministic scheduling and stall
    injection. With no probe attached the hook costs one attribute test
    per step.
    """

    def __init__(self, pool: Optional[NodePool] = None,
                 config: Optional[QueueConfig] = None, *,
                 probe=None, log_frees: bool = False) -> None:
        self._pool = pool if pool is not None else NodePool(1024)
        self.config = config if config is not None else QueueConfig()
        self._window = self.config.window_size
        self._trigger = self.config.trigger_period
        self._min_batch = self.config.min_batch_size
        self._bernoulli = (random.Random(self.config.trigger_seed)
                           if self.config.trigger == "bernoulli" else None)
        self._probe = probe
        self.free_log: Optional[List[Tuple[int, int, int, int]]] = (
            [] if log_frees else None)

        dummy = self._pool.acquire()
        if dummy is None:
            raise QueueFull("pool too small to hold the dummy node")
        # The dummy is permanently claimed and permanently the head; the
        # reclamation walk starts at head.next so it is never collected.
        dummy.state = CLAIMED
        dummy.cycle = 0
        self._head: Node = dummy
        self._tail = AtomicRef(dummy)
        self._cursor = _CursorRef(dummy)
        self._cycle = MonotoneCounter()
        self._deque_cycle = AtomicU64(0)
        self._reclaim_active = AtomicFlag()
        self._reclaim_attempts = AtomicU64(0)
        self._reclaim_passes = 0    # single-writer under _reclaim_active
        self._reclaim_freed = 0

    # -- producers -------------------------------------------------------

    def enqueue(self, payload: object) -> None:
        """Append ``payload``; strict FIFO with respect to all producers.

        Raises ValueError on a None payload and QueueFull only in
        fixed-capacity pool mode when even a reclamation pass cannot free
        a node.
        """
        if payload is None:
            raise ValueError("payload must not be None "
                             "(None marks a consumed slot)")
        p = self._probe
        node = self._pool.acquire()
        if node is None:
            self.reclaim()
            node = self._pool.acquire()
            if node is None:
                raise QueueFull("node pool exhausted; nothing reclaimable")
        # Private-phase writes: the node is invisible until linked. The
        # state flip comes after the payload so a claimer racing through
        # a stale link can never observe a claimable node without data.
        node.data = payload
        node.next = None
        node.state = AVAILABLE
        cycle = self._cycle.bump()
        if p is not None:
            p.point("enq:cycle")
        node.cycle = cycle

        # The CAS calls below are spelled out against the cell locks; the
        # enqueue path is hot enough that method dispatch shows up.
        retries = 0
        tail_cell = self._tail
        tail_lock = tail_cell._lock
        while True:
            tail = tail_cell.value
            if p is not None:
                p.point("enq:load_tail")
            nxt = tail.next
            if p is not None:
                p.point("enq:load_next")
            if nxt is not None:
                # Stale tail: retry with fresh state. No helping; the
                # linker of nxt is the only thread that advances the tail.
                retries += 1
                if retries > 3:
                    _relax(retries)
                continue
            link_lock = tail._lock
            link_lock.acquire()
            if tail.next is None:                   # cas_next(None, node)
                tail.next = node
                link_lock.release()
                if p is not None:
                    p.point("enq:link")
                tail_lock.acquire()
                if tail_cell.value is tail:         # best-effort tail bump
                    tail_cell.value = node
                tail_lock.release()
                if p is not None:
                    p.point("enq:advance_tail")
                break
            link_lock.release()
            if p is not None:
                p.point("enq:link_miss")

        if self._bernoulli is not None:
            if self._bernoulli.random() * self._trigger < 1.0:
                self.reclaim()
        elif cycle % self._trigger == 0:
            self.reclaim()

    # -- consumers -------------------------------------------------------

    def try_dequeue(self):
        """One dequeue attempt: payload, EMPTY, or RETRY.

        The claim (state AVAILABLE -> CLAIMED) is the linearization
        point. RETRY reports a transient race (the claimed slot turned
        out recycled, or its payload was already taken); the element, if
        any, was or will be delivered by another thread.
        """
        p = self._probe
        dbg = self._pool.debug
        current: Optional[Node] = self._head
        last_dc = -1                 # forces the first cursor load
        last_cursor = current
        cursor_cycle = current.cycle
        epoch = 0
        while current is not None:
            dc = self._deque_cycle.value
            if p is not None:
                p.point("deq:load_frontier")
            if dc != last_dc:
                # Other consumers made progress; restart from the shared
                # cursor rather than crawling the claimed prefix.
                last_dc = dc
                current = self._cursor.value
                if p is not None:
                    p.point("deq:load_cursor")
                last_cursor = current
                cursor_cycle = current.cycle
            if dbg:
                epoch = current.poison_epoch
            lock = current._lock
            lock.acquire()
            if current.state == AVAILABLE:          # claim CAS, inlined
                current.state = CLAIMED
                lock.release()
                if p is not None:
                    p.point("deq:claim")
                break
            lock.release()
            if p is not None:
                p.point("deq:claim_miss")
            current = current.next
            if p is not None:
                p.point("deq:step")

        if current is None:
            # Ran off the end. If the cursor we scanned from is not the
            # cursor anymore (pointer or stamp), the world moved under us
            # and emptiness was not actually observed.
            cur_now = self._cursor.value
            if p is not None:
                p.point("deq:recheck_cursor")
            if cur_now is not last_cursor or cur_now.cycle != cursor_cycle:
                return RETRY
            return EMPTY

        # Claim succeeded. Re-read the state: finding AVAILABLE here means
        # the node was recycled and republished in the meantime.
        state = current.state
        if p is not None:
            p.point("deq:recheck_state")
        if state == AVAILABLE:
            return RETRY
        data = current.data
        if p is not None:
            p.point("deq:load_data")
        if data is None:
            return RETRY
        lock = current._lock
        lock.acquire()
        if current.data is not data:                # cas_data(data, None)
            lock.release()
            if p is not None:
                p.point("deq:swap_miss")
            return RETRY
        current.data = None
        lock.release()
        if p is not None:
            p.point("deq:swap_data")
        if dbg:
            self._pool.verify_epoch(current, epoch)

        # Opportunistic cursor advance, gated on both the pointer and the
        # stamp still matching what we scanned from.
        advance = True
        cur_now = self._cursor.value
        if p is not None:
            p.point("deq:revalidate_cursor")
        if cur_now is last_cursor and cursor_cycle == cur_now.cycle:
            nxt = current.next
            if p is not None:
                p.point("deq:load_next")
            advance = False
            if nxt is None:
                advance = True
            else:
                ok = self._cursor.cas(last_cursor, cursor_cycle, nxt)
                if p is not None:
                    p.point("deq:advance_cursor")
                if ok:
                    advance = True

        if advance:
            # Publish our progress so reclamation can trail it. Monotone:
            # only ever raised, and only to a cycle that was claimed.
            cell = self._deque_cycle
            lock = cell._lock
            c = current.cycle
            dc2 = cell.value
            if p is not None:
                p.point("deq:reload_frontier")
            while dc2 < c:
                lock.acquire()
                ok = cell.value == dc2
                if ok:
                    cell.value = c
                lock.release()
                if p is not None:
                    p.point("deq:announce")
                if ok:
                    break
                dc2 = cell.value
                if p is not None:
                    p.point("deq:reload_frontier")
        return data

    def dequeue(self, retry_budget: Optional[int] = None):
        """Dequeue with RETRY hidden: loops until payload or EMPTY.

        ``retry_budget`` bounds the number of RETRY outcomes tolerated;
        when exhausted the element is conceded to the racing thread and
        EMPTY is returned. The default is unbounded with periodic pauses.
        """
        spins = 0
        while True:
            result = self.try_dequeue()
            if result is not RETRY:
                return result
            spins += 1
            if retry_budget is not None and spins >= retry_budget:
                return EMPTY
            if spins % 16 == 0:
                _relax(spins)

    # -- reclamation -------------------------------------------------------

    def reclaim(self) -> int:
        """Free a prefix of claimed, out-of-window nodes. Returns the count.

        Safe to call from any thread at any time. At most one pass runs
        at a time; contention and concurrent list edits only ever make
        the pass a no-op, never unsafe.
        """
        self._reclaim_attempts.increment()
        if self._reclaim_active.test_and_set():
            return 0
        try:
            p = self._probe
            dc = self._deque_cycle.value
            if p is not None:
                p.point("rec:load_frontier")
            safe = safe_cycle(dc, self._window)
            if safe == 0:
                return 0
            head = self._head
            current = head.next
            if p is not None:
                p.point("rec:load_head_next")
            batch: List[Node] = []
            new_next = current
            log = self.free_log
            while current is not None:
                # Cheap immutable check first, then the state check; the
                # pair is exactly the is_reclaimable predicate.
                if current.cycle >= safe:
                    break
                state = current.state
                if p is not None:
                    p.point("rec:check_state")
                if state == AVAILABLE:
                    break
                batch.append(current)
                if log is not None:
                    log.append((current.cycle, state, dc, self._window))
                nxt = current.next
                if p is not None:
                    p.point("rec:load_next")
                new_next = nxt
                current = nxt
            if len(batch) < self._min_batch:
                return 0
            ok = head.cas_next(batch[0], new_next)
            if p is not None:
                p.point("rec:cas_head")
            if not ok:
                return 0    # concurrent modification; abandon the pass
            self._pool.release_batch(batch)
            self._reclaim_passes += 1
            self._reclaim_freed += len(batch)
            return len(batch)
        finally:
            self._reclaim_active.clear()

    # -- introspection ------------------------------------------------------

    def stats(self) -> QueueStats:
        return QueueStats(
            cycle=self._cycle.value,
            deque_cycle=self._deque_cycle.load(),
            reclaim_attempts=self._reclaim_attempts.load(),
            reclaim_passes=self._reclaim_passes,
            reclaim_freed=self._reclaim_freed,
            pool=self._pool.stats(),
        )

    @property
    def pool(self) -> NodePool:
        return self._pool

    def set_probe(self, probe) -> None:
        self._probe = probe

    def _snapshot_chain(self) -> List[Node]:
        # Test helper: physical list after the dummy. Not thread-safe.
        out = []
        node = self._head.next
        while node is not None:
            out.append(node)
            node = node.next
        return out
