"""Operation histories: the raw material for the FIFO and
linearizability checkers.

Events are stamped with a globally monotone logical time. An invocation
and its return are separate events so that overlap between operations on
different threads is reconstructible; real-time precedence means "your
return was stamped before my invocation".
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import List, Optional

from ..atomics import MonotoneCounter
from ..queue import EMPTY, RETRY

ENQ_INVOKE = "enq_invoke"
ENQ_RETURN = "enq_return"
DEQ_INVOKE = "deq_invoke"
DEQ_RETURN = "deq_return"

_KINDS = (ENQ_INVOKE, ENQ_RETURN, DEQ_INVOKE, DEQ_RETURN)


@dataclass(frozen=True)
class OpEvent:
    thread_id: int
    kind: str
    payload_id: object          # id for enq events and deq hits; EMPTY/RETRY/None
    logical_time: int

    def __str__(self) -> str:
        return (f"t={self.logical_time:<6} thread={self.thread_id} "
                f"{self.kind} payload={self.payload_id!r}")


@dataclass
class Op:
    """An invocation paired with its return (``returned`` None if pending)."""

    thread_id: int
    kind: str                   # "enq" | "deq"
    payload: object             # enq: the id; deq: result or None while pending
    invoked: int
    returned: Optional[int]

    @property
    def pending(self) -> bool:
        return self.returned is None


@dataclass
class OpHistory:
    events: List[OpEvent] = field(default_factory=list)
    residue: List[object] = field(default_factory=list)   # drain order
    initial: List[object] = field(default_factory=list)   # pre-seeded contents

    def validate(self) -> None:
        """Raise ValueError unless the event stream is well formed."""
        last_time = -1
        open_ops = {}
        for e in self.events:
            if e.kind not in _KINDS:
                raise ValueError(f"unknown event kind {e.kind!r}")
            if e.logical_time <= last_time:
                raise ValueError("logical_time must strictly increase")
            last_time = e.logical_time
            if e.kind in (ENQ_INVOKE, DEQ_INVOKE):
                if e.thread_id in open_ops:
                    raise ValueError(
                        f"thread {e.thread_id} invoked twice without returning")
                open_ops[e.thread_id] = e.kind
            else:
                want = ENQ_INVOKE if e.kind == ENQ_RETURN else DEQ_INVOKE
                if open_ops.pop(e.thread_id, None) != want:
                    raise ValueError(
                        f"return without matching invoke on thread {e.thread_id}")

    def ops(self) -> List[Op]:
        """Pair events into operations, including pending ones."""
        self.validate()
        out: List[Op] = []
        open_ops = {}
        for e in self.events:
            if e.kind == ENQ_INVOKE:
                op = Op(e.thread_id, "enq", e.payload_id, e.logical_time, None)
                open_ops[e.thread_id] = op
                out.append(op)
            elif e.kind == DEQ_INVOKE:
                op = Op(e.thread_id, "deq", None, e.logical_time, None)
                open_ops[e.thread_id] = op
                out.append(op)
            else:
                op = open_ops.pop(e.thread_id)
                op.returned = e.logical_time
                if e.kind == DEQ_RETURN:
                    op.payload = e.payload_id
        return out

    def thread_ids(self):
        return sorted({e.thread_id for e in self.events})

    def enqueued(self) -> Counter:
        """Ids whose enqueue completed."""
        return Counter(e.payload_id for e in self.events
                       if e.kind == ENQ_RETURN)

    def dequeued(self) -> Counter:
        """Ids delivered by completed dequeues."""
        return Counter(e.payload_id for e in self.events
                       if e.kind == DEQ_RETURN
                       and e.payload_id is not EMPTY
                       and e.payload_id is not RETRY)

    def trace(self) -> List[str]:
        return [str(e) for e in self.events]


class HistoryRecorder:
    """Thread-safe event sink; list appends and stamps are GIL-atomic."""

    def __init__(self) -> None:
        self.events: List[OpEvent] = []
        self._clock = MonotoneCounter()

    def record(self, thread_id: int, kind: str, payload_id: object) -> None:
        self.events.append(
            OpEvent(thread_id, kind, payload_id, self._clock.bump()))

    def finish(self, residue: List[object],
               initial: List[object] = ()) -> OpHistory:
        # Stamps are taken before the append, so concurrent recorders can
        # land in the list out of stamp order; the stamp order is the
        # true global order.
        events = sorted(self.events, key=lambda e: e.logical_time)
        return OpHistory(events=events, residue=list(residue),
                         initial=list(initial))
