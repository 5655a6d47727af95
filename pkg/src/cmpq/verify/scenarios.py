"""Fault-injection scenarios: stalls, forced recycling, and the
real-thread scenario runner.

Two execution modes share the Scenario description. The scripted mode
(deterministic scheduler) freezes chosen threads at chosen algorithm
steps and lets the test drive everything else directly, so recycle races
that would need precise timing in the wild are constructed exactly. The
parallel mode runs scenario threads as real OS threads with stall points
implemented as blocking gates.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ..pool import CLAIMED, NodePool
from ..queue import CmpQueue, EMPTY, QueueConfig, RETRY, safe_cycle
from .checkers import CheckResult
from .history import (DEQ_INVOKE, DEQ_RETURN, ENQ_INVOKE, ENQ_RETURN,
                      HistoryRecorder, OpHistory)
from .scheduler import (Scenario, _Abort, queued_elements,
                        resolve_phase, start_scripted)


# ---------------------------------------------------------------------------
# real-thread mode
# ---------------------------------------------------------------------------

class _ParallelStall:
    __slots__ = ("parked", "resume", "fired")

    def __init__(self) -> None:
        self.parked = threading.Event()
        self.resume = threading.Event()
        self.fired = False


class StallProbe:
    """Blocks a chosen thread the first time it passes a chosen step."""

    def __init__(self) -> None:
        self._tl = threading.local()
        self._rules: Dict[Tuple[int, str], _ParallelStall] = {}
        self._aborted = False

    def register(self, tid: int) -> None:
        self._tl.tid = tid

    def stall_after(self, thread_id: int, phase: str) -> _ParallelStall:
        rule = _ParallelStall()
        self._rules[(thread_id, resolve_phase(phase))] = rule
        return rule

    def abort(self) -> None:
        self._aborted = True
        for rule in self._rules.values():
            rule.resume.set()

    def point(self, label: str) -> None:
        tid = getattr(self._tl, "tid", None)
        if tid is None:
            return
        rule = self._rules.get((tid, label))
        if rule is not None and not rule.fired:
            rule.fired = True
            rule.parked.set()
            rule.resume.wait()
            if self._aborted:
                raise _Abort()


class ParallelRun:
    """Run a Scenario on real OS threads with optional stall gates."""

    def __init__(self, scenario: Scenario,
                 stalls: Sequence[Tuple[int, str]] = ()) -> None:
        self.probe = StallProbe()
        self.queue = scenario.build_queue(probe=self.probe)
        self.initial = queued_elements(self.queue)
        self.recorder = HistoryRecorder()
        self._rules = {(tid, resolve_phase(ph)): self.probe.stall_after(tid, ph)
                       for tid, ph in stalls}
        self._threads = [
            threading.Thread(target=self._worker, args=(tid, prog),
                             name=f"parallel-{tid}", daemon=True)
            for tid, prog in enumerate(scenario.threads)
        ]
        self.statuses = ["boot"] * len(scenario.threads)

    def _worker(self, tid: int, program: List[tuple]) -> None:
        self.probe.register(tid)
        q, rec = self.queue, self.recorder
        try:
            for op in program:
                kind = op[0]
                if kind == "enq":
                    rec.record(tid, ENQ_INVOKE, op[1])
                    q.enqueue(op[1])
                    rec.record(tid, ENQ_RETURN, op[1])
                elif kind == "deq":
                    rec.record(tid, DEQ_INVOKE, None)
                    rec.record(tid, DEQ_RETURN, q.try_dequeue())
                elif kind == "deq_loop":
                    budget = op[1] if len(op) > 1 else None
                    rec.record(tid, DEQ_INVOKE, None)
                    rec.record(tid, DEQ_RETURN, q.dequeue(retry_budget=budget))
                elif kind == "call":
                    op[1](q, tid, self)
                else:
                    raise ValueError(f"op {op!r} not supported in parallel mode")
            self.statuses[tid] = "done"
        except _Abort:
            self.statuses[tid] = "aborted"
        except BaseException:
            self.statuses[tid] = "failed"
            raise

    def start(self) -> "ParallelRun":
        for t in self._threads:
            t.start()
        return self

    def wait_stalled(self, thread_id: int, phase: str, timeout: float = 10.0) -> bool:
        return self._rules[(thread_id, resolve_phase(phase))].parked.wait(timeout)

    def resume(self, thread_id: int, phase: str) -> None:
        self._rules[(thread_id, resolve_phase(phase))].resume.set()

    def finish(self, timeout: float = 30.0) -> OpHistory:
        """Resume-or-abort anything still gated, join, drain, report."""
        for t in self._threads:
            t.join(timeout=timeout)
        if any(t.is_alive() for t in self._threads):
            self.probe.abort()
            for t in self._threads:
                t.join(timeout=timeout)
        residue = []
        while True:
            r = self.queue.dequeue(retry_budget=10_000)
            if r is EMPTY:
                break
            residue.append(r)
        return self.recorder.finish(residue, self.initial)


# ---------------------------------------------------------------------------
# forced recycling: the pointer-reuse (ABA) shape, constructed exactly
# ---------------------------------------------------------------------------

_RECYCLE_CONFIG = QueueConfig(window_size=1, trigger_period=10**9,
                              min_batch_size=1, min_window=1)


@dataclass
class RecycleOutcome:
    ok: bool
    notes: List[str] = field(default_factory=list)

    def as_check(self) -> CheckResult:
        return CheckResult(ok=self.ok, witness=None if self.ok else self.notes,
                           trace=self.notes)


def force_recycle_scenario(victim_stall_steps: Optional[int] = None) -> CheckResult:
    """Drive a slot through free-and-reuse while a consumer holds a stale
    cursor capture, and prove the stale capture cannot advance the cursor.

    The victim consumer is frozen mid-dequeue (by default right after its
    cursor load; ``victim_stall_steps`` freezes it after that many atomic
    steps instead, for sweeping every interleaving position). While it is
    frozen, the driver retires the captured node, drives the frontier past
    its window, recycles the same slot into a fresh element, and steers
    the cursor back onto the recycled pointer. The victim then resumes
    against a pointer-identical, stamp-different cursor.
    """
    notes: List[str] = []

    def setup(q: CmpQueue) -> None:
        for pid in (1, 2, 3, 4):
            q.enqueue(pid)
        got = q.try_dequeue()
        assert got == 1

    scenario = Scenario(threads=[[("deq",)]], setup=setup,
                        config=_RECYCLE_CONFIG, pool_capacity=8,
                        pool_grow=False)
    if victim_stall_steps is None:
        ctl = start_scripted(scenario, stalls=[(0, "deq:load_cursor")])
        ctl.run_until_blocked(0)
    else:
        ctl = start_scripted(scenario)
        for _ in range(victim_stall_steps):
            if not ctl.step_thread(0):
                break
    frozen_label = ctl.label_of(0)
    q = ctl.queue
    audit: list = []
    q._cursor.audit = audit

    # The node carrying element 2: the cursor points at it after the
    # setup dequeue, so a victim frozen after its cursor load holds
    # exactly this pointer with stamp 2.
    node2 = next(n for n in q._snapshot_chain() if n.cycle == 2)
    stale_cycle = 2

    # Retire everything claimable. Whoever claims element 4 announces a
    # frontier of 4, which puts cycles 1 and 2 past the one-cycle window.
    main_got = []
    while True:
        r = q.try_dequeue()
        if r is EMPTY or r is RETRY:
            break
        main_got.append(r)
    freed = q.reclaim()
    notes.append(f"main retired {main_got}, reclaimed {freed} nodes")
    if freed != 2:
        return CheckResult(ok=False, witness=("expected the two oldest "
                                              "claimed nodes freed", freed),
                           trace=notes)

    # Recycle: new enqueues must reuse the freed slots, one of them the
    # very object the victim captured.
    q.enqueue(5)
    q.enqueue(6)
    if node2 not in q._snapshot_chain():
        return CheckResult(ok=False, witness="slot was not reused",
                           trace=notes)
    notes.append(f"slot {node2.slot} reused: cycle {stale_cycle} -> {node2.cycle}")
    if node2.cycle == stale_cycle:
        return CheckResult(ok=False, witness="recycled node kept its stamp",
                           trace=notes)

    # Claiming the element ahead of the recycled node installs the
    # recycled pointer as the cursor.
    r = q.try_dequeue()
    if r not in (EMPTY, RETRY):
        main_got.append(r)
    cursor_on_reuse = q._cursor.load() is node2

    # Direct probe of the guard: a CAS carrying the stale capture must
    # refuse even though the pointer may compare equal; a foreign pointer
    # refuses regardless of stamp.
    if q._cursor.cas(node2, stale_cycle, q._head):
        return CheckResult(ok=False,
                           witness="stale capture advanced the cursor",
                           trace=notes)
    if q._cursor.cas(q._head, q._head.cycle, node2):
        return CheckResult(ok=False,
                           witness="foreign pointer advanced the cursor",
                           trace=notes)

    # Let the victim finish; whatever it does must be duplication-free
    # and must never move the cursor on a stale stamp.
    if ctl.handles:
        ctl.handles[0].resume()
    ctl.run_until_blocked(0)
    outcome = ctl.finish()

    # Positive control: a capture matching both pointer and live stamp is
    # allowed (self-move, so the drained queue is unaffected).
    cur = q._cursor.load()
    if not q._cursor.cas(cur, cur.cycle, cur):
        return CheckResult(ok=False, witness="fresh capture was refused",
                           trace=notes)

    victim_got = [e.payload_id for e in outcome.history.events
                  if e.kind == DEQ_RETURN
                  and e.payload_id is not EMPTY and e.payload_id is not RETRY]
    seen = sorted([1] + main_got + victim_got + list(outcome.history.residue))
    missing = sorted(set((1, 2, 3, 4, 5, 6)) - set(seen))
    if len(seen) != len(set(seen)):
        return CheckResult(ok=False, witness=("duplicate delivery", seen),
                           trace=notes)
    # A victim frozen between its claim and its payload swap can have the
    # claimed element sacrificed by reclamation; nothing else may vanish.
    claim_window = ("deq:claim", "deq:recheck_state", "deq:load_data")
    allowed_loss = 1 if frozen_label in claim_window else 0
    if len(missing) > allowed_loss:
        return CheckResult(ok=False, witness=("lost elements", missing),
                           trace=notes)
    for expected_cycle, seen_cycle, ok in audit:
        if ok and expected_cycle != seen_cycle:
            return CheckResult(ok=False,
                               witness=("cursor advanced with a stale stamp",
                                        expected_cycle, seen_cycle),
                               trace=notes)
    notes.append(f"victim got {victim_got!r}; cursor returned to reused "
                 f"pointer: {cursor_on_reuse}; {len(audit)} cursor CAS audits")
    return CheckResult(ok=True, trace=notes)


def force_recycle_sweep(max_positions: int = 24) -> CheckResult:
    """Run the forced-recycle shape with the victim frozen after every
    possible number of atomic steps: the full set of interleaving
    positions of the victim against the recycle sequence."""
    for k in range(max_positions):
        res = force_recycle_scenario(victim_stall_steps=k)
        if not res.ok:
            res.trace.insert(0, f"failed with victim frozen after {k} steps")
            return res
    return CheckResult(ok=True,
                       trace=[f"{max_positions} victim positions checked"])


# ---------------------------------------------------------------------------
# stall scenarios
# ---------------------------------------------------------------------------

def stall_bounded_reclamation(seed: int, *, window: int = 256,
                              trigger: int = 64, min_batch: int = 8,
                              extra_dequeues: Optional[int] = None) -> dict:
    """Freeze one consumer right after its claim, keep the queue busy for
    ten windows of dequeues, and measure retention.

    Returns a dict with the worst observed pool occupancy versus the
    bound ``live + window + min_batch + 16``, whether the stalled node
    itself was reclaimed, and the resumed consumer's outcome.
    """
    if extra_dequeues is None:
        extra_dequeues = 10 * window
    cfg = QueueConfig(window_size=window, trigger_period=trigger,
                      min_batch_size=min_batch, min_window=1)
    scenario = Scenario(
        threads=[[("deq",)]],
        setup=lambda q: [q.enqueue(i) for i in range(1, trigger + 1)],
        config=cfg, pool_capacity=1024, log_frees=True)

    ctl = start_scripted(scenario, stalls=[(0, "claim")])
    ctl.run_until_blocked(0)
    assert ctl._stalled[0], "consumer did not reach its claim"
    q = ctl.queue

    rng = random.Random(seed)
    # Setup enqueued `trigger` items and the stalled consumer claimed one.
    enq_count = trigger
    deq_count = 0
    next_id = trigger + 1
    delivered = []
    bound_violations = []
    # Keep totals aligned to the trigger period so the final enqueue runs
    # the reclamation pass that the bound accounting assumes.
    remaining = extra_dequeues
    while remaining > 0:
        burst = min(rng.randint(1, trigger), remaining)
        for _ in range(burst):
            q.enqueue(next_id)
            next_id += 1
            enq_count += 1
        for _ in range(burst):
            r = q.dequeue(retry_budget=10_000)
            if r is not EMPTY:
                delivered.append(r)
                deq_count += 1
        remaining -= burst
        live = enq_count - deq_count
        in_use = q.pool.stats().in_use
        # Continuous audit with trigger-period slack: between passes, up
        # to one period of claims can age out uncollected.
        if in_use > live + window + min_batch + trigger + 32:
            bound_violations.append((enq_count, in_use, live))
    while enq_count % trigger != 0:       # land exactly on a trigger
        q.enqueue(next_id)
        next_id += 1
        enq_count += 1
        r = q.dequeue(retry_budget=10_000)
        if r is not EMPTY:
            delivered.append(r)
            deq_count += 1

    live = enq_count - deq_count
    in_use = q.pool.stats().in_use
    final_bound = live + window + min_batch + 16
    # The stalled consumer claims cycle 1; bounded reclamation means that
    # node is freed despite the stall once the frontier passes its window.
    stalled_node_freed = any(rec[0] == 1 for rec in q.free_log)
    free_log = list(q.free_log)

    ctl.handles[0].resume()
    ctl.run_until_blocked(0)
    outcome = ctl.finish()
    victim_returns = [e.payload_id for e in outcome.history.events
                      if e.kind == DEQ_RETURN]
    return {
        "in_use": in_use,
        "bound": final_bound,
        "ok": in_use <= final_bound and not bound_violations,
        "continuous_violations": bound_violations,
        "stalled_node_freed": stalled_node_freed,
        "victim_returns": victim_returns,
        "delivered": delivered,
        "enqueued": enq_count,
        "residue": outcome.history.residue,
        "free_log": free_log,
    }


def producer_stall_scenario() -> CheckResult:
    """A producer frozen before linking holds only private state; every
    other thread keeps its full throughput."""
    scenario = Scenario(threads=[[("enq", 100)]], config=_RECYCLE_CONFIG,
                        pool_capacity=64)
    ctl = start_scripted(scenario, stalls=[(0, "cycle")])
    ctl.run_until_blocked(0)
    q = ctl.queue
    trace = []
    # The frozen producer allocated a node and took cycle 1; everyone
    # else proceeds undisturbed.
    for i in range(1, 33):
        q.enqueue(i)
        got = q.try_dequeue()
        if got != i:
            return CheckResult(ok=False, witness=(got, i), trace=trace)
    ctl.handles[0].resume()
    ctl.run_until_blocked(0)
    outcome = ctl.finish()
    if outcome.history.residue != [100]:
        return CheckResult(ok=False,
                           witness=("resumed producer's element missing",
                                    outcome.history.residue),
                           trace=trace)
    return CheckResult(ok=True)


def retry_injection_scenario() -> CheckResult:
    """Force a transient-RETRY path and show the wrapper still delivers.

    The victim claims a node, is frozen before the payload swap, and the
    node is reclaimed out from under it. On resume its payload claim
    finds the consumed marker (RETRY inside the wrapper), after which the
    next pass delivers a later element.
    """
    def setup(q: CmpQueue) -> None:
        for pid in (1, 2, 3, 4):
            q.enqueue(pid)

    scenario = Scenario(threads=[[("deq_loop",)]], setup=setup,
                        config=_RECYCLE_CONFIG, pool_capacity=16)
    ctl = start_scripted(scenario, stalls=[(0, "claim")])
    ctl.run_until_blocked(0)
    q = ctl.queue
    # Victim holds a claim on element 1 and has not touched its payload.
    # Two more deliveries push the frontier to 3, aging the claim out of
    # its one-cycle window; the pass frees it under the victim.
    assert q.try_dequeue() == 2
    assert q.try_dequeue() == 3
    freed = q.reclaim()
    if freed != 1:
        return CheckResult(ok=False, witness=("expected to free exactly the "
                                              "stalled claim", freed), trace=[])
    ctl.handles[0].resume()
    ctl.run_until_blocked(0)
    outcome = ctl.finish()
    returns = [e.payload_id for e in outcome.history.events
               if e.kind == DEQ_RETURN]
    # The wrapper must swallow the RETRY and deliver the remaining element.
    if returns != [4]:
        return CheckResult(ok=False, witness=("victim returns", returns),
                           trace=outcome.history.trace())
    if outcome.history.residue:
        return CheckResult(ok=False,
                           witness=("residue", outcome.history.residue),
                           trace=[])
    return CheckResult(ok=True)
