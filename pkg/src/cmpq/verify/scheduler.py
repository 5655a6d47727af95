"""Deterministic interleaving exploration for desk-scale scenarios.

The queue reports every shared-memory step of its algorithms to an
attached probe. Here that probe parks the calling thread and hands
control to a driver that decides which thread advances next, so a
scenario can be executed under any schedule of its atomic steps and
replayed exactly from a recorded choice sequence. Scenario threads are
real OS threads, but exactly one runs at a time and only between probe
callbacks, which makes execution a deterministic function of the
choices.

Exploration is either exhaustive (depth-first over the schedule tree,
feasible only for small scenarios) or seeded random sampling, matching
the configured bound on total yield points. Schedules that exceed the
step budget (e.g. a producer spinning on a stale tail that the scheduler
refuses to advance) are cut off and reported as truncated rather than
explored forever.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

from ..pool import AVAILABLE, NodePool
from ..queue import CmpQueue, QueueConfig, EMPTY


def queued_elements(q: CmpQueue) -> List[object]:
    """Elements currently claimable, in list order. Not thread-safe;
    meant for quiescent snapshots (e.g. right after scenario setup)."""
    return [n.data for n in q._snapshot_chain()
            if n.state == AVAILABLE and n.data is not None]
from .history import (DEQ_INVOKE, DEQ_RETURN, ENQ_INVOKE, ENQ_RETURN,
                      HistoryRecorder, OpHistory)

#: Every label the queue algorithms can report, one per atomic step.
ALL_LABELS = frozenset({
    "enq:cycle", "enq:load_tail", "enq:load_next",
    "enq:link", "enq:link_miss", "enq:advance_tail",
    "deq:load_frontier", "deq:load_cursor",
    "deq:claim", "deq:claim_miss", "deq:step", "deq:recheck_cursor",
    "deq:recheck_state", "deq:load_data", "deq:swap_data", "deq:swap_miss",
    "deq:revalidate_cursor", "deq:load_next", "deq:advance_cursor",
    "deq:reload_frontier", "deq:announce",
    "rec:load_frontier", "rec:load_head_next",
    "rec:check_state", "rec:load_next", "rec:cas_head",
    "spin",
})

#: Friendly names for the dequeue phases a stall can be injected after.
PHASE_ALIASES = {
    "load_cursor": "deq:load_cursor",
    "claim": "deq:claim",
    "recheck_state": "deq:recheck_state",
    "swap_data": "deq:swap_data",
    "advance_cursor": "deq:advance_cursor",
    "announce": "deq:announce",
    "link": "enq:link",
    "cycle": "enq:cycle",
}


def resolve_phase(phase: str) -> str:
    """Map a phase name to a probe label; ValueError if unknown."""
    if phase in ALL_LABELS:
        return phase
    if phase in PHASE_ALIASES:
        return PHASE_ALIASES[phase]
    raise ValueError(f"unknown phase {phase!r}; "
                     f"known: {sorted(PHASE_ALIASES)} or a raw label")


#: Reclamation kept out of the way unless a scenario asks for it.
DESK_CONFIG = QueueConfig(window_size=64, trigger_period=10**9,
                          min_batch_size=1, min_window=1)


@dataclass
class Scenario:
    """Per-thread op scripts plus the queue they run against.

    Ops: ``("enq", id)``, ``("deq",)``, ``("deq_loop", budget)``,
    ``("spin", k)`` (k bare yield points, for calibrating the explorer),
    and ``("call", fn)`` for white-box steps.
    """

    threads: List[List[tuple]]
    setup: Optional[Callable[[CmpQueue], None]] = None
    config: QueueConfig = DESK_CONFIG
    pool_capacity: int = 64
    pool_grow: bool = True
    pool_debug: bool = False
    log_frees: bool = False

    def build_queue(self, probe=None) -> CmpQueue:
        pool = NodePool(self.pool_capacity, grow=self.pool_grow,
                        debug=self.pool_debug)
        q = CmpQueue(pool, self.config, log_frees=self.log_frees)
        if self.setup is not None:
            self.setup(q)
        q.set_probe(probe)        # attached after setup: setup is not scheduled
        return q


class _Abort(BaseException):
    # BaseException so stray `except Exception` in op code cannot eat it.
    pass


class SchedulerHang(RuntimeError):
    pass


class WorkerTeam:
    """Persistent scenario threads, reused across schedules.

    Thread creation costs more than running a whole desk-scale schedule,
    so exploration keeps one team alive and submits each schedule's
    programs as jobs. Slot i always plays scenario thread i.
    """

    def __init__(self, size: int) -> None:
        self._size = size
        self._jobs: List[Optional[Callable[[], None]]] = [None] * size
        self._ready = [threading.Event() for _ in range(size)]
        self._closed = False
        self._threads = [
            threading.Thread(target=self._loop, args=(i,),
                             name=f"scenario-{i}", daemon=True)
            for i in range(size)
        ]
        for t in self._threads:
            t.start()

    def _loop(self, slot: int) -> None:
        ready = self._ready[slot]
        while True:
            ready.wait()
            ready.clear()
            job = self._jobs[slot]
            if job is None:
                return
            job()

    def submit(self, slot: int, job: Callable[[], None]) -> None:
        self._jobs[slot] = job
        self._ready[slot].set()

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for i in range(self._size):
            self._jobs[i] = None
            self._ready[i].set()
        for t in self._threads:
            t.join(timeout=5.0)

    def __enter__(self) -> "WorkerTeam":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class StallRule:
    thread_id: int
    label: str
    armed: bool = True


class StallHandle:
    """Returned by stall injection; resume() lets the thread continue."""

    def __init__(self, controller: "_Controller", rule: StallRule) -> None:
        self._controller = controller
        self.rule = rule

    @property
    def stalled(self) -> bool:
        return self._controller._stalled[self.rule.thread_id]

    def resume(self) -> None:
        self._controller._stalled[self.rule.thread_id] = False


@dataclass
class ScheduleOutcome:
    history: OpHistory
    decisions: List[Tuple[int, int]]      # (chosen index, runnable width)
    truncated: bool
    statuses: List[str]

    @property
    def completed(self) -> bool:
        return not self.truncated and all(s == "done" for s in self.statuses)


class _Controller:
    """One scheduled execution of a scenario."""

    _STEP_TIMEOUT = 20.0

    def __init__(self, scenario: Scenario,
                 stalls: Sequence[Tuple[int, str]] = (),
                 team: Optional[WorkerTeam] = None) -> None:
        self.scenario = scenario
        self.recorder = HistoryRecorder()
        self.queue = scenario.build_queue(probe=self)
        self.initial = queued_elements(self.queue)
        n = len(scenario.threads)
        self._n = n
        self._go = [threading.Event() for _ in range(n)]
        self._back = threading.Event()
        self._status = ["boot"] * n
        self._label: List[Optional[str]] = [None] * n
        self._stalled = [False] * n
        self._rules = {}
        self.handles: List[StallHandle] = []
        for tid, phase in stalls:
            rule = StallRule(tid, resolve_phase(phase))
            self._rules[(rule.thread_id, rule.label)] = rule
            self.handles.append(StallHandle(self, rule))
        self._abort = False
        self._error: Optional[BaseException] = None
        self._tl = threading.local()
        self._team = team if team is not None else WorkerTeam(n)
        self._own_team = team is None

    # -- probe interface (called from scenario threads) --------------------

    def point(self, label: str) -> None:
        tid = getattr(self._tl, "tid", None)
        if tid is None:
            return                 # main thread (setup / drain) passes through
        self._label[tid] = label
        self._park(tid)

    def _park(self, tid: int) -> None:
        go = self._go[tid]
        go.clear()
        self._status[tid] = "parked"
        self._back.set()
        go.wait()
        self._status[tid] = "running"
        if self._abort:
            raise _Abort()

    # -- worker bodies ------------------------------------------------------

    def _worker(self, tid: int, program: List[tuple]) -> None:
        self._tl.tid = tid
        try:
            self._run_program(tid, program)
            self._status[tid] = "done"
        except _Abort:
            self._status[tid] = "aborted"
        except BaseException as exc:     # propagate to the driver
            self._error = exc
            self._status[tid] = "failed"
        finally:
            self._back.set()

    def _run_program(self, tid: int, program: List[tuple]) -> None:
        q = self.queue
        rec = self.recorder
        for op in program:
            kind = op[0]
            if kind == "enq":
                rec.record(tid, ENQ_INVOKE, op[1])
                q.enqueue(op[1])
                rec.record(tid, ENQ_RETURN, op[1])
            elif kind == "deq":
                rec.record(tid, DEQ_INVOKE, None)
                result = q.try_dequeue()
                rec.record(tid, DEQ_RETURN, result)
            elif kind == "deq_loop":
                budget = op[1] if len(op) > 1 else None
                rec.record(tid, DEQ_INVOKE, None)
                result = q.dequeue(retry_budget=budget)
                rec.record(tid, DEQ_RETURN, result)
            elif kind == "spin":
                for _ in range(op[1]):
                    self._label[tid] = "spin"
                    self._park(tid)
            elif kind == "call":
                op[1](q, tid, self)
            else:
                raise ValueError(f"unknown scenario op {op!r}")

    # -- driver side ----------------------------------------------------------

    def _start(self) -> None:
        # Workers bootstrap one at a time (their first-op invocation
        # records land in thread order) and park at their first labeled
        # step, so identical schedules produce identical histories.
        for tid, program in enumerate(self.scenario.threads):
            self._team.submit(tid, lambda t=tid, p=program: self._worker(t, p))
            waited = 0.0
            while self._status[tid] in ("boot", "running"):
                self._back.wait(0.001)
                self._back.clear()
                waited += 0.001
                if waited > self._STEP_TIMEOUT:
                    raise SchedulerHang(f"startup stuck: {self._status}")
        for tid in range(self._n):
            if self._status[tid] == "parked":
                self._apply_stall_rule(tid)

    def _apply_stall_rule(self, tid: int) -> None:
        rule = self._rules.get((tid, self._label[tid]))
        if rule is not None and rule.armed and self._status[tid] == "parked":
            rule.armed = False
            self._stalled[tid] = True

    def _step(self, tid: int) -> None:
        self._back.clear()
        self._go[tid].set()
        if not self._back.wait(self._STEP_TIMEOUT):
            raise SchedulerHang(
                f"thread {tid} did not come back; statuses={self._status} "
                f"labels={self._label}")
        self._apply_stall_rule(tid)

    def runnable(self) -> List[int]:
        return [t for t in range(self._n)
                if self._status[t] == "parked" and not self._stalled[t]]

    def run(self, choose: Callable[[int, List[int]], int],
            max_steps: int) -> ScheduleOutcome:
        decisions: List[Tuple[int, int]] = []
        truncated = False
        self._start()
        try:
            while True:
                if self._error is not None:
                    raise self._error
                ready = self.runnable()
                if not ready:
                    break
                if len(decisions) >= max_steps:
                    truncated = True
                    break
                idx = choose(len(decisions), ready)
                decisions.append((idx, len(ready)))
                self._step(ready[idx])
        finally:
            self._shutdown()
        if self._error is not None:
            raise self._error
        residue = self.drain()
        return ScheduleOutcome(
            history=self.recorder.finish(residue, self.initial),
            decisions=decisions,
            truncated=truncated,
            statuses=list(self._status))

    def step_thread(self, tid: int) -> bool:
        """Scripted mode: advance one thread one step. False once finished."""
        if self._status[tid] != "parked":
            return False
        self._step(tid)
        if self._error is not None:
            raise self._error
        return self._status[tid] == "parked"

    def run_until_blocked(self, tid: int, limit: int = 10_000) -> str:
        """Scripted mode: step one thread until it stalls or finishes."""
        for _ in range(limit):
            if self._stalled[tid] or self._status[tid] != "parked":
                break
            self._step(tid)
            if self._error is not None:
                raise self._error
        return self._status[tid]

    def label_of(self, tid: int) -> Optional[str]:
        return self._label[tid]

    def finish(self) -> ScheduleOutcome:
        """Scripted mode: abort anything still parked, drain, report."""
        self._shutdown()
        if self._error is not None:
            raise self._error
        residue = self.drain()
        return ScheduleOutcome(
            history=self.recorder.finish(residue, self.initial),
            decisions=[], truncated=False,
            statuses=list(self._status))

    def _shutdown(self) -> None:
        self._abort = True
        waited = 0.0
        while any(s not in ("done", "aborted", "failed")
                  for s in self._status):
            for tid in range(self._n):
                if self._status[tid] == "parked":
                    self._go[tid].set()
            self._back.wait(0.002)
            self._back.clear()
            waited += 0.002
            if waited > self._STEP_TIMEOUT:
                raise SchedulerHang(f"shutdown stuck: {self._status}")
        if self._own_team:
            self._team.close()

    def drain(self) -> List[object]:
        out = []
        while True:
            r = self.queue.dequeue(retry_budget=10_000)
            if r is EMPTY:
                return out
            out.append(r)


def run_schedule(scenario: Scenario,
                 choices: Optional[Sequence[int]] = None, *,
                 rng: Optional[random.Random] = None,
                 stalls: Sequence[Tuple[int, str]] = (),
                 max_steps: int = 4000,
                 team: Optional[WorkerTeam] = None) -> ScheduleOutcome:
    """Execute one schedule: replay ``choices``, then first-runnable or rng."""
    prefix = list(choices or ())

    def choose(step: int, ready: List[int]) -> int:
        if step < len(prefix):
            c = prefix[step]
            if c >= len(ready):
                raise SchedulerHang(
                    f"replay diverged at step {step}: choice {c} of {len(ready)}")
            return c
        if rng is not None:
            return rng.randrange(len(ready))
        return 0

    return _Controller(scenario, stalls=stalls, team=team).run(choose, max_steps)


def start_scripted(scenario: Scenario,
                   stalls: Sequence[Tuple[int, str]] = ()) -> _Controller:
    """Build and start a controller for hand-driven (scripted) schedules."""
    ctl = _Controller(scenario, stalls=stalls)
    ctl._start()
    return ctl


@dataclass
class ExplorationResult:
    outcomes: List[ScheduleOutcome] = field(default_factory=list)
    mode: str = "full"
    schedules: int = 0
    truncated: int = 0
    yield_estimate: int = 0

    @property
    def histories(self) -> List[OpHistory]:
        return [o.history for o in self.outcomes if o.completed]

    @property
    def partial_coverage(self) -> bool:
        return self.truncated > 0 or self.mode != "full"


def explore_interleavings(scenario: Scenario, *,
                          mode: str = "auto",
                          full_limit: int = 10,
                          sample_limit: int = 2000,
                          seed: int = 0,
                          max_steps: int = 4000,
                          max_schedules: int = 500_000) -> ExplorationResult:
    """Enumerate or sample schedules of a scenario.

    ``mode``: "full" forces exhaustive depth-first enumeration, "sampled"
    forces seeded random sampling, "auto" picks "full" when the first
    schedule has at most ``full_limit`` yield points. Exhaustive
    enumeration that would exceed ``max_schedules`` stops early and is
    reported via ``partial_coverage``.
    """
    result = ExplorationResult()
    with WorkerTeam(len(scenario.threads)) as team:
        first = run_schedule(scenario, max_steps=max_steps, team=team)
        result.yield_estimate = len(first.decisions)
        if mode == "auto":
            mode = "full" if result.yield_estimate <= full_limit else "sampled"
        result.mode = mode

        if mode == "full":
            prefix: List[int] = []
            while True:
                out = run_schedule(scenario, prefix, max_steps=max_steps,
                                   team=team)
                result.outcomes.append(out)
                result.schedules += 1
                if out.truncated:
                    result.truncated += 1
                if result.schedules >= max_schedules:
                    result.mode = "full-partial"
                    break
                taken = [c for c, _ in out.decisions]
                widths = [w for _, w in out.decisions]
                i = len(taken) - 1
                while i >= 0 and taken[i] + 1 >= widths[i]:
                    i -= 1
                if i < 0:
                    break
                prefix = taken[:i] + [taken[i] + 1]
        else:
            rng = random.Random(seed)
            for _ in range(sample_limit):
                out = run_schedule(scenario, rng=rng, max_steps=max_steps,
                                   team=team)
                result.outcomes.append(out)
                result.schedules += 1
                if out.truncated:
                    result.truncated += 1
    return result
