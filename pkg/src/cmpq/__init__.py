"""cmpq: an unbounded, strict-FIFO, multi-producer/multi-consumer queue
whose node reclamation is bounded by a sliding cycle window instead of
per-thread coordination, plus the verification harness and benchmark CLI
built around it."""

from .atomics import AtomicFlag, AtomicRef, AtomicU64
from .baseline import LockedQueue
from .pool import (AVAILABLE, CLAIMED, Node, NodePool, PoolInvariantError,
                   PoolStats)
from .queue import (EMPTY, RETRY, CmpQueue, QueueConfig, QueueFull,
                    QueueStats, compute_window, is_reclaimable, safe_cycle)

__all__ = [
    "AVAILABLE",
    "CLAIMED",
    "AtomicFlag",
    "AtomicRef",
    "AtomicU64",
    "CmpQueue",
    "EMPTY",
    "LockedQueue",
    "Node",
    "NodePool",
    "PoolInvariantError",
    "PoolStats",
    "QueueConfig",
    "QueueFull",
    "QueueStats",
    "RETRY",
    "compute_window",
    "is_reclaimable",
    "safe_cycle",
]

__version__ = "0.1.0"
