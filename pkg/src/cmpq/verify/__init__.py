"""Correctness harness: deterministic interleaving exploration, history
checkers, fault injection, and invariant audits."""

from .checkers import (BoundExceeded, CheckResult, audit_reclamation_log,
                       check_linearizable_fifo, check_sequential_fifo)
from .history import (DEQ_INVOKE, DEQ_RETURN, ENQ_INVOKE, ENQ_RETURN,
                      HistoryRecorder, Op, OpEvent, OpHistory)
from .scenarios import (ParallelRun, StallProbe, force_recycle_scenario,
                        force_recycle_sweep, producer_stall_scenario,
                        retry_injection_scenario, stall_bounded_reclamation)
from .scheduler import (ALL_LABELS, DESK_CONFIG, PHASE_ALIASES,
                        ExplorationResult, Scenario, ScheduleOutcome,
                        SchedulerHang, WorkerTeam, explore_interleavings,
                        resolve_phase, run_schedule, start_scripted)

__all__ = [
    "ALL_LABELS",
    "BoundExceeded",
    "CheckResult",
    "DESK_CONFIG",
    "DEQ_INVOKE",
    "DEQ_RETURN",
    "ENQ_INVOKE",
    "ENQ_RETURN",
    "ExplorationResult",
    "HistoryRecorder",
    "Op",
    "OpEvent",
    "OpHistory",
    "ParallelRun",
    "PHASE_ALIASES",
    "Scenario",
    "ScheduleOutcome",
    "SchedulerHang",
    "StallProbe",
    "WorkerTeam",
    "audit_reclamation_log",
    "check_linearizable_fifo",
    "check_sequential_fifo",
    "explore_interleavings",
    "force_recycle_scenario",
    "force_recycle_sweep",
    "producer_stall_scenario",
    "resolve_phase",
    "retry_injection_scenario",
    "run_schedule",
    "stall_bounded_reclamation",
    "start_scripted",
]
