"""History checkers: sequential FIFO, desk-scale linearizability, and the
reclamation safety audit.

The linearizability check is an explicit search: it asks whether some
total order of the completed operations (a) respects real-time
precedence between non-overlapping operations and (b) replays correctly
against a sequential FIFO queue, with empty-returning dequeues legal
only in states where the abstract queue really is empty. The search is
exponential and deliberately bounded to desk scale; it is an oracle, not
a production facility.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

from ..queue import EMPTY, RETRY, safe_cycle
from ..pool import AVAILABLE
from .history import OpHistory


class BoundExceeded(Exception):
    """History is larger than the brute-force search is willing to take."""


@dataclass
class CheckResult:
    ok: bool
    witness: object = None               # structured counterexample, if any
    trace: List[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "PASS"
        lines = [f"FAIL: {self.witness!r}"]
        lines.extend(self.trace)
        return "\n".join(lines)


def check_sequential_fifo(history: OpHistory) -> CheckResult:
    """Single-threaded oracle: dequeue order must equal enqueue order.

    Raises ValueError for histories that are malformed or not
    single-threaded.
    """
    history.validate()
    tids = history.thread_ids()
    if len(tids) > 1:
        raise ValueError(f"expected a single-threaded history, got threads {tids}")
    enq_order = [e.payload_id for e in history.events if e.kind == "enq_return"]
    deq_order = [e.payload_id for e in history.events
                 if e.kind == "deq_return"
                 and e.payload_id is not EMPTY and e.payload_id is not RETRY]
    for i, got in enumerate(deq_order):
        expected = enq_order[i] if i < len(enq_order) else None
        if got != expected:
            return CheckResult(
                ok=False,
                witness=(got, expected),
                trace=[f"position {i}: dequeued {got!r}, expected {expected!r}"]
                + history.trace())
    return CheckResult(ok=True)


def _conservation_witness(history: OpHistory,
                          pending_enq: Counter) -> Optional[Tuple[str, object]]:
    definite = history.enqueued() + Counter(history.initial)
    deq = history.dequeued()
    residue = Counter(history.residue)
    seen = deq + residue
    if (seen - definite - pending_enq):
        return ("phantom or duplicated ids",
                dict(seen - definite - pending_enq))
    if (definite - seen):
        return ("lost ids", dict(definite - seen))
    return None


def check_linearizable_fifo(history: OpHistory, *,
                            max_threads: int = 3,
                            max_ops: int = 8) -> CheckResult:
    """Search for a linearization of the history; PASS iff one exists.

    Completed dequeues that reported RETRY have no abstract effect and do
    not participate. Pending enqueues (invoked, never returned) may or
    may not have taken effect; both possibilities are explored. The final
    abstract queue must equal the observed drain order.

    Raises BoundExceeded beyond ``max_threads``/``max_ops`` completed
    operations.
    """
    ops = history.ops()
    if len(history.thread_ids()) > max_threads:
        raise BoundExceeded(f"{len(history.thread_ids())} threads > {max_threads}")

    required = [op for op in ops
                if not op.pending
                and not (op.kind == "deq" and op.payload is RETRY)]
    if len(required) > max_ops:
        raise BoundExceeded(f"{len(required)} completed operations > {max_ops}")
    optional = [op for op in ops if op.pending and op.kind == "enq"]

    bad = _conservation_witness(
        history, Counter(op.payload for op in optional))
    if bad is not None:
        return CheckResult(ok=False, witness=bad, trace=history.trace())

    candidates = required + optional
    n = len(candidates)
    required_mask = (1 << len(required)) - 1
    invoked = [op.invoked for op in candidates]
    returned = [op.returned if op.returned is not None else float("inf")
                for op in candidates]
    target = tuple(history.residue)
    start = tuple(history.initial)

    seen_states = set()

    def admissible(i: int, done_mask: int) -> bool:
        # i may linearize next unless some other outstanding op already
        # returned before i was invoked.
        inv = invoked[i]
        for j in range(n):
            if j != i and not (done_mask >> j) & 1 and returned[j] < inv:
                return False
        return True

    def apply(op, queue: tuple) -> Optional[tuple]:
        if op.kind == "enq":
            return queue + (op.payload,)
        if op.payload is EMPTY:
            return queue if not queue else None
        if queue and queue[0] == op.payload:
            return queue[1:]
        return None

    def dfs(done_mask: int, queue: tuple) -> bool:
        if (done_mask & required_mask) == required_mask and queue == target:
            return True
        key = (done_mask, queue)
        if key in seen_states:
            return False
        seen_states.add(key)
        for i in range(n):
            if (done_mask >> i) & 1 or not admissible(i, done_mask):
                continue
            nxt = apply(candidates[i], queue)
            if nxt is None:
                continue
            if dfs(done_mask | (1 << i), nxt):
                return True
        return False

    if dfs(0, start):
        return CheckResult(ok=True)
    return CheckResult(ok=False,
                       witness="no linearization found",
                       trace=history.trace())


def audit_reclamation_log(records: Iterable[Sequence]) -> CheckResult:
    """Check every freed-node record against the reclamation predicate.

    Records are ``(cycle, state, deque_cycle_at_free, window)`` tuples as
    produced by a queue constructed with ``log_frees=True``.
    """
    for i, rec in enumerate(records):
        cycle, state, dc_at_free, window = rec
        if state == AVAILABLE:
            return CheckResult(
                ok=False, witness=(i, tuple(rec)),
                trace=[f"record {i}: freed node was AVAILABLE"])
        if cycle >= safe_cycle(dc_at_free, window):
            return CheckResult(
                ok=False, witness=(i, tuple(rec)),
                trace=[f"record {i}: cycle {cycle} inside the protection "
                       f"window (frontier {dc_at_free}, window {window})"])
    return CheckResult(ok=True)
