"""Fault-injection scenarios and the real-thread runner."""

from collections import Counter

import pytest

from cmpq import EMPTY, RETRY
from cmpq.verify import (ParallelRun, Scenario, audit_reclamation_log,
                         force_recycle_scenario, force_recycle_sweep,
                         producer_stall_scenario, retry_injection_scenario,
                         stall_bounded_reclamation)


class TestForceRecycle:
    def test_same_slot_reuse_refuses_stale_capture(self):
        res = force_recycle_scenario()
        assert res.ok, res.describe()
        assert any("reused" in line for line in res.trace)

    def test_every_victim_position(self):
        res = force_recycle_sweep()
        assert res.ok, res.describe()


class TestStallScenarios:
    def test_producer_stall_is_private(self):
        res = producer_stall_scenario()
        assert res.ok, res.describe()

    def test_retry_then_delivery(self):
        res = retry_injection_scenario()
        assert res.ok, res.describe()

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_bounded_reclamation_with_stalled_consumer(self, seed):
        res = stall_bounded_reclamation(seed, window=64, trigger=16,
                                        min_batch=4, extra_dequeues=640)
        assert res["ok"], res
        assert res["stalled_node_freed"]
        # The stalled claim was sacrificed after its window; everything
        # else must be delivered exactly once or still queued.
        victim = [r for r in res["victim_returns"]
                  if r is not EMPTY and r is not RETRY]
        seen = Counter(res["delivered"]) + Counter(res["residue"]) + Counter(victim)
        assert max(seen.values()) == 1
        missing = set(range(1, res["enqueued"] + 1)) - set(seen)
        assert missing <= {1}
        # Free log doubles as a safety-predicate audit.
        assert audit_reclamation_log(res["free_log"]).ok


class TestParallelRunner:
    def test_parallel_conservation(self):
        per = 300
        threads = []
        for p in range(2):
            base = p * per
            threads.append([("enq", base + i) for i in range(1, per + 1)])
        threads.append([("deq_loop", 10_000)] * per)
        threads.append([("deq_loop", 10_000)] * per)
        sc = Scenario(threads=threads, pool_capacity=256)
        run = ParallelRun(sc).start()
        history = run.finish()
        enq = history.enqueued()
        got = history.dequeued() + Counter(history.residue)
        assert got == enq

    def test_parallel_stall_gate(self):
        sc = Scenario(threads=[[("deq",)]],
                      setup=lambda q: q.enqueue(3))
        run = ParallelRun(sc, stalls=[(0, "claim")]).start()
        assert run.wait_stalled(0, "claim", timeout=5.0)
        # While gated: the claim happened but the payload is untouched.
        chain = run.queue._snapshot_chain()
        assert chain[0].data == 3
        run.resume(0, "claim")
        history = run.finish()
        returns = [e.payload_id for e in history.events
                   if e.kind == "deq_return"]
        assert returns == [3]
