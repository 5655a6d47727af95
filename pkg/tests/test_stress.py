"""Concurrent stress: conservation, frontier monotonicity, reclamation
audit, and bounded retention under real threads."""

import threading
import time
from collections import Counter

import pytest

from cmpq import (CmpQueue, EMPTY, LockedQueue, NodePool, QueueConfig,
                  QueueFull, RETRY)
from cmpq.atomics import AtomicU64
from cmpq.verify import audit_reclamation_log


def run_mpmc(queue, producers, consumers, total, *, collect_dc=False,
             dc_hz=10_000):
    """Drive an MPMC workload; returns (delivered lists, dc samples)."""
    per = total // producers
    claimed = AtomicU64(0)
    outs = [[] for _ in range(consumers)]
    dc_samples = []
    stop = threading.Event()

    def produce(p):
        base = p * per
        for i in range(1, per + 1):
            pid = base + i
            while True:       # fixed pools push back; wait for reclamation
                try:
                    queue.enqueue(pid)
                    break
                except QueueFull:
                    time.sleep(0)

    def consume(c):
        out = outs[c]
        misses = 0
        while True:
            r = queue.try_dequeue()
            if r is EMPTY or r is RETRY:
                if claimed.value >= total:
                    return
                misses += 1
                if misses & 255 == 0:
                    time.sleep(0)
                continue
            out.append(r)
            claimed.increment()

    def sample():
        period = 1.0 / dc_hz
        while not stop.is_set():
            dc_samples.append(queue.stats().deque_cycle)
            time.sleep(period)

    threads = [threading.Thread(target=produce, args=(p,)) for p in range(producers)]
    threads += [threading.Thread(target=consume, args=(c,)) for c in range(consumers)]
    if collect_dc:
        threads.append(threading.Thread(target=sample))
    for t in threads:
        t.start()
    for t in threads[:producers + consumers]:
        t.join()
    stop.set()
    if collect_dc:
        threads[-1].join()
    return outs, dc_samples


class TestConservation:
    @pytest.mark.parametrize("p,c", [(1, 1), (2, 2), (4, 2), (2, 4)])
    def test_no_loss_no_duplication(self, p, c):
        total = 40_000
        q = CmpQueue(NodePool(1 << 12))
        outs, _ = run_mpmc(q, p, c, total)
        got = Counter()
        for out in outs:
            got.update(out)
        assert got == Counter(range(1, total + 1))

    def test_locked_baseline_conserves_too(self):
        total = 20_000
        outs, _ = run_mpmc(LockedQueue(), 2, 2, total)
        got = Counter()
        for out in outs:
            got.update(out)
        assert got == Counter(range(1, total + 1))


class TestFrontierMonotonicity:
    def test_sampled_frontier_never_regresses(self):
        q = CmpQueue(NodePool(1 << 12))
        _, samples = run_mpmc(q, 2, 2, 60_000, collect_dc=True)
        assert len(samples) > 10
        assert all(a <= b for a, b in zip(samples, samples[1:]))


class TestReclamationUnderStress:
    def test_free_log_audit_passes(self):
        cfg = QueueConfig(window_size=256, trigger_period=64,
                          min_batch_size=8, min_window=1)
        q = CmpQueue(NodePool(1 << 10), cfg, log_frees=True)
        outs, _ = run_mpmc(q, 2, 2, 50_000)
        assert sum(len(o) for o in outs) == 50_000
        assert len(q.free_log) > 1000        # recycling actually happened
        assert audit_reclamation_log(q.free_log).ok

    def test_pool_occupancy_stays_bounded(self):
        # With reclamation on, a long run must not accumulate nodes
        # proportional to the item count.
        cfg = QueueConfig(window_size=512, trigger_period=128,
                          min_batch_size=16, min_window=1)
        q = CmpQueue(NodePool(1 << 10), cfg)
        total = 80_000
        run_mpmc(q, 2, 2, total)
        stats = q.stats()
        assert stats.pool.in_use < total // 4
        assert stats.reclaim_freed > total // 2


class TestDebugPoison:
    def test_heavy_recycling_stays_clean(self):
        cfg = QueueConfig(window_size=64, trigger_period=16,
                          min_batch_size=4, min_window=1)
        q = CmpQueue(NodePool(512, grow=False, debug=True), cfg)
        total = 20_000
        outs, _ = run_mpmc(q, 2, 2, total)
        assert sum(len(o) for o in outs) == total
        assert q.stats().pool.poison_violations == 0
