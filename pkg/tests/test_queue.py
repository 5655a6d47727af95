"""Core queue behavior: linking, claiming, tri-state dequeue, reclamation."""

import pytest

from cmpq import (AVAILABLE, CLAIMED, CmpQueue, EMPTY, NodePool, QueueConfig,
                  QueueFull, RETRY, is_reclaimable, safe_cycle)
from cmpq.queue import _CursorRef

# Reclamation never fires on its own with this trigger; tests call it.
MANUAL = QueueConfig(window_size=4096, trigger_period=10**9,
                     min_batch_size=1, min_window=1)


def make_queue(config=MANUAL, capacity=64, **kw):
    return CmpQueue(NodePool(capacity), config, **kw)


class TestConstruction:
    def test_fresh_queue_is_empty(self):
        q = make_queue()
        assert q.try_dequeue() is EMPTY

    def test_initial_aliasing(self):
        q = make_queue()
        assert q._head is q._tail.load() is q._cursor.load()
        assert q._head.state == CLAIMED and q._head.cycle == 0

    def test_single_element_round_trip(self):
        q = make_queue()
        q.enqueue("x")
        assert q.dequeue() == "x"
        assert q.try_dequeue() is EMPTY

    def test_config_validation(self):
        with pytest.raises(ValueError):
            QueueConfig(window_size=10, min_window=20)
        with pytest.raises(ValueError):
            QueueConfig(trigger_period=0)
        with pytest.raises(ValueError):
            QueueConfig(min_batch_size=0)
        with pytest.raises(ValueError):
            QueueConfig(trigger="sometimes")


class TestEnqueue:
    def test_first_insertion(self):
        q = make_queue()
        q.enqueue("a")
        chain = q._snapshot_chain()
        assert [n.data for n in chain] == ["a"]
        assert chain[0].cycle == 1

    def test_append_only_order(self):
        q = make_queue()
        q.enqueue("a")
        q.enqueue("b")
        chain = q._snapshot_chain()
        assert [n.data for n in chain] == ["a", "b"]
        assert [n.cycle for n in chain] == [1, 2]
        assert q._tail.load() is chain[-1]

    def test_none_payload_rejected(self):
        q = make_queue()
        with pytest.raises(ValueError):
            q.enqueue(None)

    def test_trigger_fires_on_period(self):
        cfg = QueueConfig(window_size=1, trigger_period=4,
                          min_batch_size=1, min_window=1)
        q = CmpQueue(NodePool(16), cfg)
        for i in range(3):
            q.enqueue(i + 1)
        assert q.stats().reclaim_attempts == 0
        q.enqueue(4)                       # cycle 4, 4 % 4 == 0
        assert q.stats().reclaim_attempts == 1

    def test_bernoulli_trigger_variant_runs(self):
        cfg = QueueConfig(window_size=1, trigger_period=2, min_batch_size=1,
                          min_window=1, trigger="bernoulli", trigger_seed=7)
        q = CmpQueue(NodePool(64), cfg)
        for i in range(32):
            q.enqueue(i + 1)
        # Expected attempt count is 32/2 on average; only the mechanism
        # is under test, the exact count is seed-dependent.
        assert q.stats().reclaim_attempts > 0

    def test_fixed_pool_reports_full(self):
        cfg = QueueConfig(window_size=1, trigger_period=10**9,
                          min_batch_size=1, min_window=1)
        q = CmpQueue(NodePool(3, grow=False), cfg)   # dummy + 2 slots
        q.enqueue(1)
        q.enqueue(2)
        # Nothing is claimed, so the forced reclamation pass frees nothing.
        with pytest.raises(QueueFull):
            q.enqueue(3)

    def test_fixed_pool_recovers_via_reclaim_retry(self):
        # W=1 keeps the two most recently claimed cycles protected, so the
        # pool needs the dummy plus three data slots to reach steady state.
        cfg = QueueConfig(window_size=1, trigger_period=10**9,
                          min_batch_size=1, min_window=1)
        q = CmpQueue(NodePool(4, grow=False), cfg)
        for i in range(1, 12):
            q.enqueue(i)
            assert q.dequeue() == i
        # Enqueues beyond the capacity relied on reclaim-then-retry.
        assert q.stats().pool.recycled_total > 0


class TestTryDequeue:
    def test_sequential_fifo(self):
        q = make_queue()
        for x in ("a", "b", "c"):
            q.enqueue(x)
        assert [q.try_dequeue() for _ in range(3)] == ["a", "b", "c"]
        assert q.try_dequeue() is EMPTY

    def test_dequeue_wrapper_maps_terminals(self):
        q = make_queue()
        assert q.dequeue() is EMPTY
        q.enqueue(41)
        assert q.dequeue() == 41

    def test_dequeue_retry_budget_concedes(self, monkeypatch):
        q = make_queue()
        monkeypatch.setattr(q, "try_dequeue", lambda: RETRY)
        assert q.dequeue(retry_budget=5) is EMPTY

    def test_claim_is_exclusive(self):
        q = make_queue()
        q.enqueue("only")
        node = q._snapshot_chain()[0]
        assert node.cas_state(AVAILABLE, CLAIMED)
        # The element is claimed out from under the queue: a dequeue
        # walks to the end and reports EMPTY (cursor never moved).
        assert q.try_dequeue() is EMPTY

    def test_frontier_announced_after_claim(self):
        q = make_queue()
        q.enqueue(1)
        q.enqueue(2)
        assert q.stats().deque_cycle == 0
        q.try_dequeue()
        assert q.stats().deque_cycle == 1
        q.try_dequeue()
        assert q.stats().deque_cycle == 2

    def test_cursor_only_moves_forward(self):
        q = make_queue()
        for i in range(8):
            q.enqueue(i)
        positions = []
        chain = q._snapshot_chain()
        index = {id(n): i for i, n in enumerate(chain)}
        for _ in range(8):
            q.try_dequeue()
            positions.append(index.get(id(q._cursor.load()), len(chain)))
        assert positions == sorted(positions)


class TestCursorStampGuard:
    def test_stale_cycle_refused_same_pointer(self):
        from cmpq.pool import Node
        a, b = Node(0), Node(1)
        a.cycle = 7
        cur = _CursorRef(a)
        a.cycle = 21                     # simulated recycle: same pointer, new stamp
        assert cur.cas(a, 7, b) is False
        assert cur.load() is a

    def test_wrong_pointer_refused(self):
        from cmpq.pool import Node
        a, b, c = Node(0), Node(1), Node(2)
        cur = _CursorRef(a)
        assert cur.cas(b, b.cycle, c) is False

    def test_matching_pointer_and_stamp_advances(self):
        from cmpq.pool import Node
        a, b = Node(0), Node(1)
        a.cycle = 7
        cur = _CursorRef(a)
        assert cur.cas(a, 7, b) is True
        assert cur.load() is b


class TestReclaim:
    def _drained_queue(self, n, window, min_batch):
        cfg = QueueConfig(window_size=window, trigger_period=10**9,
                          min_batch_size=min_batch, min_window=1)
        q = CmpQueue(NodePool(32), cfg)
        for i in range(1, n + 1):
            q.enqueue(i)
        for _ in range(n):
            q.try_dequeue()
        return q

    @staticmethod
    def _prefix_oracle(chain, safe):
        # Hand enumeration: the maximal prefix satisfying the predicate.
        count = 0
        for node in chain:
            if not is_reclaimable(node, safe):
                break
            count += 1
        return count

    def test_nothing_eligible_frees_zero(self):
        q = make_queue()
        q.enqueue(1)
        assert q.reclaim() == 0

    def test_window_and_frontier_select_the_batch(self):
        # Ten claimed nodes with cycles 1..10 and a frontier pushed to 20:
        # every cycle is below safe_cycle(20, 5) = 15, so all ten go.
        q = self._drained_queue(10, window=5, min_batch=1)
        q._deque_cycle.store(20)
        chain = q._snapshot_chain()
        expect = self._prefix_oracle(chain, safe_cycle(20, 5))
        assert expect == 10
        assert q.reclaim() == 10
        assert q.stats().pool.recycled_total == 10

    def test_min_batch_threshold_blocks_small_batches(self):
        # Same shape, wider window: safe_cycle(20, 18) = 2 leaves only
        # cycle 1 eligible, and a four-node minimum refuses the pass.
        q = self._drained_queue(10, window=18, min_batch=4)
        q._deque_cycle.store(20)
        chain = q._snapshot_chain()
        assert self._prefix_oracle(chain, safe_cycle(20, 18)) == 1
        assert q.reclaim() == 0
        assert q.stats().pool.recycled_total == 0

    def test_walk_stops_at_first_available(self):
        cfg = QueueConfig(window_size=1, trigger_period=10**9,
                          min_batch_size=1, min_window=1)
        q = CmpQueue(NodePool(32), cfg)
        for i in range(1, 6):
            q.enqueue(i)
        q.try_dequeue()          # claim cycle 1
        q.try_dequeue()          # claim cycle 2
        q._deque_cycle.store(50)  # age everything out of the window
        # Cycles 3..5 are still AVAILABLE: the prefix ends before them.
        assert q.reclaim() == 2
        assert [n.data for n in q._snapshot_chain()] == [3, 4, 5]

    def test_single_reclaimer_flag_excludes(self):
        q = self._drained_queue(4, window=1, min_batch=1)
        q._deque_cycle.store(100)
        q._reclaim_active.test_and_set()
        assert q.reclaim() == 0           # someone else is reclaiming
        q._reclaim_active.clear()
        assert q.reclaim() == 4

    def test_free_log_records_predicate_inputs(self):
        cfg = QueueConfig(window_size=2, trigger_period=10**9,
                          min_batch_size=1, min_window=1)
        q = CmpQueue(NodePool(32), cfg, log_frees=True)
        for i in range(1, 6):
            q.enqueue(i)
        for _ in range(5):
            q.try_dequeue()
        freed = q.reclaim()
        assert freed == len(q.free_log) > 0
        for cycle, state, dc_at_free, window in q.free_log:
            assert state != AVAILABLE
            assert cycle < safe_cycle(dc_at_free, window)


class TestStats:
    def test_counters_track_sequential_run(self):
        q = make_queue()
        for i in range(5):
            q.enqueue(i)
        for _ in range(3):
            q.try_dequeue()
        s = q.stats()
        assert s.cycle == 5
        assert s.deque_cycle == 3
        assert s.pool.in_use == 6          # dummy + five linked nodes
