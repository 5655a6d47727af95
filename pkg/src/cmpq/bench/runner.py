"""Benchmark runner: producer/consumer matrices over one queue instance.

Every run is validated before it is reported: the multiset of delivered
ids must equal the multiset of enqueued ids. A run that lost or
duplicated anything raises instead of producing numbers.
"""

from __future__ import annotations

import os
import statistics
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

from ..atomics import AtomicU64
from ..baseline import LockedQueue
from ..pool import NodePool
from ..queue import CmpQueue, EMPTY, QueueConfig, RETRY
from .stats import percentile, three_sigma_filter

IMPLS = ("cmp", "locked")

#: Scratch buffer per worker for the synthetic load; sized past typical L1.
_SCRATCH_BYTES = 1 << 17


class ConservationError(RuntimeError):
    """A benchmark run lost or duplicated elements; its numbers are void."""


@dataclass
class BenchConfig:
    producers: int
    consumers: int
    total_items: int
    impl: str = "cmp"
    synthetic_load: int = 0          # work-loop iterations per op, 0 = none
    repetitions: int = 1
    warmup_items: int = 1000
    latency_sample_rate: int = 64    # sample 1 op in this many
    window: int = 4096
    trigger: int = 1024
    min_batch: int = 32
    pin: bool = False
    pool_capacity: int = 1 << 14

    def __post_init__(self) -> None:
        if self.producers < 1 or self.consumers < 1:
            raise ValueError("need at least one producer and one consumer")
        if self.total_items % self.producers != 0:
            raise ValueError("total_items must divide evenly among producers")
        if self.impl not in IMPLS:
            raise ValueError(f"impl must be one of {IMPLS}")
        if self.latency_sample_rate < 1:
            raise ValueError("latency_sample_rate must be >= 1")

    def key(self) -> Tuple:
        """Identity for aggregation and baseline matching."""
        return (self.impl, self.producers, self.consumers, self.total_items,
                self.synthetic_load)


@dataclass
class BenchReport:
    impl: str
    producers: int
    consumers: int
    throughput: float              # items per second
    avg_enq_ns: float
    p99_enq_ns: float
    avg_deq_ns: float
    p99_deq_ns: float
    filtered_fraction: float
    retention: Optional[float] = None
    elapsed_s: float = 0.0
    total_items: int = 0
    raw_enq_ns: List[int] = field(default_factory=list, repr=False)
    raw_deq_ns: List[int] = field(default_factory=list, repr=False)


def build_queue(config: BenchConfig):
    if config.impl == "locked":
        return LockedQueue()
    qc = QueueConfig(window_size=config.window,
                     trigger_period=config.trigger,
                     min_batch_size=config.min_batch,
                     min_window=min(1024, config.window))
    return CmpQueue(NodePool(config.pool_capacity), qc)


def synthetic_work(scratch: bytearray, iters: int, seed: int) -> int:
    """Fixed-iteration arithmetic loop walking a thread-private buffer.

    Emulates per-item application work: integer mixing plus scattered
    byte updates across a buffer bigger than L1, which costs cache misses
    rather than just ALU time.
    """
    mask = len(scratch) - 1
    acc = seed & 0x7FFFFFFF
    for _ in range(iters):
        acc = (acc * 1103515245 + 12345) & 0x7FFFFFFF
        i = acc & mask
        scratch[i] = (scratch[i] + 1) & 0xFF
    return acc


def _pin_to(index: int) -> None:
    if hasattr(os, "sched_setaffinity"):
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, {cpus[index % len(cpus)]})


def _producer(queue, ids, rate, load, scratch, samples, barrier, pin_at):
    if pin_at is not None:
        _pin_to(pin_at)
    enqueue = queue.enqueue
    pcns = time.perf_counter_ns
    work = synthetic_work
    barrier.wait()
    k = 0
    for pid in ids:
        if k == 0:
            t0 = pcns()
            enqueue(pid)
            samples.append(pcns() - t0)
            k = rate - 1
        else:
            enqueue(pid)
            k -= 1
        if load:
            work(scratch, load, pid)


def _consumer(queue, out, claimed, total, producers_done, rate, load,
              scratch, samples, barrier, pin_at):
    if pin_at is not None:
        _pin_to(pin_at)
    try_dequeue = queue.try_dequeue
    pcns = time.perf_counter_ns
    work = synthetic_work
    append = out.append
    barrier.wait()
    k = 0
    misses = 0
    while True:
        if k == 0:
            t0 = pcns()
            r = try_dequeue()
            dt = pcns() - t0
        else:
            r = try_dequeue()
        if r is EMPTY or r is RETRY:
            if claimed.value >= total:
                break
            misses += 1
            if misses & 63 == 0:
                # Escalate to a real sleep: idle consumers spinning on
                # the interpreter starve the producers they wait for.
                time.sleep(0 if misses < 512 else 0.0001)
            # Bail out rather than spin forever if items went missing;
            # the conservation check will report the real failure.
            if misses > 200_000 and producers_done.is_set():
                break
            continue
        misses = 0
        if k == 0:
            samples.append(dt)
            k = rate - 1
        else:
            k -= 1
        append(r)
        claimed.increment()
        if load:
            work(scratch, load, r)


def run_config(config: BenchConfig) -> BenchReport:
    """One measured run: P producers and C consumers over one queue."""
    queue = build_queue(config)

    for i in range(1, config.warmup_items + 1):
        queue.enqueue(i)
        queue.dequeue()

    per = config.total_items // config.producers
    id_blocks = [range(p * per + 1, (p + 1) * per + 1)
                 for p in range(config.producers)]
    claimed = AtomicU64(0)
    producers_done = threading.Event()
    outs = [[] for _ in range(config.consumers)]
    enq_samples = [[] for _ in range(config.producers)]
    deq_samples = [[] for _ in range(config.consumers)]
    barrier = threading.Barrier(config.producers + config.consumers + 1)
    rate = config.latency_sample_rate
    load = config.synthetic_load

    threads = []
    for p in range(config.producers):
        scratch = bytearray(_SCRATCH_BYTES) if load else None
        threads.append(threading.Thread(
            target=_producer,
            args=(queue, id_blocks[p], rate, load, scratch, enq_samples[p],
                  barrier, p if config.pin else None),
            name=f"bench-prod-{p}", daemon=True))
    for c in range(config.consumers):
        scratch = bytearray(_SCRATCH_BYTES) if load else None
        threads.append(threading.Thread(
            target=_consumer,
            args=(queue, outs[c], claimed, config.total_items, producers_done,
                  rate, load, scratch, deq_samples[c], barrier,
                  (config.producers + c) if config.pin else None),
            name=f"bench-cons-{c}", daemon=True))

    for t in threads:
        t.start()
    barrier.wait()
    t0 = time.perf_counter()
    for t in threads[:config.producers]:
        t.join()
    producers_done.set()
    for t in threads[config.producers:]:
        t.join()
    elapsed = time.perf_counter() - t0

    # Conservation gate: a run that lost or duplicated ids is invalid.
    delivered = sorted(pid for out in outs for pid in out)
    if delivered != sorted(range(1, config.total_items + 1)):
        got = len(delivered)
        uniq = len(set(delivered))
        raise ConservationError(
            f"run invalid: delivered {got} ids ({uniq} unique), "
            f"expected {config.total_items} unique")

    raw_enq = [s for block in enq_samples for s in block]
    raw_deq = [s for block in deq_samples for s in block]
    enq_kept, enq_removed = three_sigma_filter(raw_enq)
    deq_kept, deq_removed = three_sigma_filter(raw_deq)
    n_e, n_d = len(raw_enq), len(raw_deq)
    combined_removed = ((enq_removed * n_e + deq_removed * n_d) / (n_e + n_d)
                        if n_e + n_d else 0.0)

    return BenchReport(
        impl=config.impl,
        producers=config.producers,
        consumers=config.consumers,
        throughput=config.total_items / elapsed,
        avg_enq_ns=float(enq_kept.mean()) if enq_kept.size else 0.0,
        p99_enq_ns=percentile(enq_kept, 99) if enq_kept.size else 0.0,
        avg_deq_ns=float(deq_kept.mean()) if deq_kept.size else 0.0,
        p99_deq_ns=percentile(deq_kept, 99) if deq_kept.size else 0.0,
        filtered_fraction=combined_removed,
        elapsed_s=elapsed,
        total_items=config.total_items,
        raw_enq_ns=raw_enq,
        raw_deq_ns=raw_deq,
    )


def _median_report(config: BenchConfig, reports: List[BenchReport]) -> BenchReport:
    med = statistics.median
    return BenchReport(
        impl=config.impl,
        producers=config.producers,
        consumers=config.consumers,
        throughput=med(r.throughput for r in reports),
        avg_enq_ns=med(r.avg_enq_ns for r in reports),
        p99_enq_ns=med(r.p99_enq_ns for r in reports),
        avg_deq_ns=med(r.avg_deq_ns for r in reports),
        p99_deq_ns=med(r.p99_deq_ns for r in reports),
        filtered_fraction=med(r.filtered_fraction for r in reports),
        elapsed_s=med(r.elapsed_s for r in reports),
        total_items=config.total_items,
    )


def run_matrix(configs: Sequence[BenchConfig], round_robin: bool = True,
               runner: Callable[[BenchConfig], BenchReport] = run_config,
               ) -> List[BenchReport]:
    """Run every configuration for its repetition count and aggregate by
    median per configuration.

    With ``round_robin`` the repetitions interleave configurations
    (A, B, A, B, ...) so slow drift such as thermal throttling spreads
    evenly across implementations instead of biasing whichever ran last.
    """
    order: List[int] = []
    if round_robin:
        max_reps = max(c.repetitions for c in configs) if configs else 0
        for rep in range(max_reps):
            for i, cfg in enumerate(configs):
                if rep < cfg.repetitions:
                    order.append(i)
    else:
        for i, cfg in enumerate(configs):
            order.extend([i] * cfg.repetitions)

    by_config: List[List[BenchReport]] = [[] for _ in configs]
    for i in order:
        by_config[i].append(runner(configs[i]))
    return [_median_report(cfg, reps) for cfg, reps in zip(configs, by_config)]


class BenchSession:
    """A sequence of runs plus the baseline lookups retention needs."""

    def __init__(self, runner: Callable[[BenchConfig], BenchReport] = run_config):
        self._runner = runner
        self.runs: List[Tuple[BenchConfig, BenchReport]] = []

    def run(self, config: BenchConfig) -> BenchReport:
        report = self._runner(config)
        self.runs.append((config, report))
        return report

    def find_baseline(self, config: BenchConfig) -> Optional[BenchReport]:
        """Most recent unloaded run with the same impl and thread shape."""
        for cfg, report in reversed(self.runs):
            if (cfg.impl == config.impl
                    and cfg.producers == config.producers
                    and cfg.consumers == config.consumers
                    and cfg.synthetic_load == 0):
                return report
        return None

    def run_retention(self, config: BenchConfig) -> BenchReport:
        """Run a loaded configuration and report the fraction of its
        baseline throughput it sustained. The matching baseline must
        already exist in this session."""
        baseline = self.find_baseline(config)
        if baseline is None:
            raise ValueError(
                "no matching baseline (same impl/producers/consumers, "
                "no synthetic load) was run in this session")
        report = self.run(config)
        report.retention = report.throughput / baseline.throughput
        return report
