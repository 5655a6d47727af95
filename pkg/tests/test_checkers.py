"""FIFO and linearizability checkers against hand-built histories."""

import pytest

from cmpq import AVAILABLE, CLAIMED, EMPTY, RETRY
from cmpq.verify import (BoundExceeded, OpEvent, OpHistory,
                         audit_reclamation_log, check_linearizable_fifo,
                         check_sequential_fifo)
from cmpq.verify.history import (DEQ_INVOKE, DEQ_RETURN, ENQ_INVOKE,
                                 ENQ_RETURN)


def H(events, residue=()):
    evs = [OpEvent(tid, kind, pid, t)
           for t, (tid, kind, pid) in enumerate(events, start=1)]
    return OpHistory(events=evs, residue=list(residue))


def seq_history(enq_ids, deq_ids, residue=()):
    events = []
    for pid in enq_ids:
        events.append((0, ENQ_INVOKE, pid))
        events.append((0, ENQ_RETURN, pid))
    for pid in deq_ids:
        events.append((0, DEQ_INVOKE, None))
        events.append((0, DEQ_RETURN, pid))
    return H(events, residue)


class TestSequentialFifo:
    def test_in_order_passes(self):
        assert check_sequential_fifo(seq_history([1, 2, 3], [1, 2, 3])).ok

    def test_inversion_fails_with_witness(self):
        res = check_sequential_fifo(seq_history([1, 2], [2, 1]))
        assert not res.ok
        assert res.witness == (2, 1)

    def test_long_generated_sequence(self):
        ids = list(range(1, 1001))
        assert check_sequential_fifo(seq_history(ids, ids)).ok
        bad = ids[:500] + [9999] + ids[501:]
        assert not check_sequential_fifo(seq_history(ids, bad)).ok

    def test_prefix_with_residue(self):
        assert check_sequential_fifo(
            seq_history([1, 2, 3], [1], residue=[2, 3])).ok

    def test_multi_threaded_history_rejected(self):
        h = H([(0, ENQ_INVOKE, 1), (0, ENQ_RETURN, 1),
               (1, DEQ_INVOKE, None), (1, DEQ_RETURN, 1)])
        with pytest.raises(ValueError):
            check_sequential_fifo(h)

    def test_malformed_history_rejected(self):
        h = H([(0, ENQ_RETURN, 1)])
        with pytest.raises(ValueError):
            check_sequential_fifo(h)


class TestLinearizableFifo:
    def test_overlapping_enq_deq_pass(self):
        # enq(a) and deq run concurrently; the deq may see a.
        h = H([(0, ENQ_INVOKE, "a"), (1, DEQ_INVOKE, None),
               (0, ENQ_RETURN, "a"), (1, DEQ_RETURN, "a")])
        assert check_linearizable_fifo(h).ok

    def test_empty_after_completed_enqueue_fails(self):
        # The dequeue started strictly after enq(a) returned, yet saw
        # nothing, and a was never delivered nor drained.
        h = H([(0, ENQ_INVOKE, "a"), (0, ENQ_RETURN, "a"),
               (1, DEQ_INVOKE, None), (1, DEQ_RETURN, EMPTY)],
              residue=[])
        assert not check_linearizable_fifo(h).ok

    def test_empty_with_element_still_queued_fails(self):
        # Even with a accounted for in the drain, EMPTY cannot linearize
        # anywhere after the enqueue completed.
        h = H([(0, ENQ_INVOKE, "a"), (0, ENQ_RETURN, "a"),
               (1, DEQ_INVOKE, None), (1, DEQ_RETURN, EMPTY)],
              residue=["a"])
        assert not check_linearizable_fifo(h).ok

    def test_empty_before_enqueue_passes(self):
        h = H([(1, DEQ_INVOKE, None), (1, DEQ_RETURN, EMPTY),
               (0, ENQ_INVOKE, "a"), (0, ENQ_RETURN, "a")],
              residue=["a"])
        assert check_linearizable_fifo(h).ok

    def test_fifo_order_enforced_across_threads(self):
        # Both enqueues completed before either dequeue started, so the
        # delivery order b, a is an inversion.
        h = H([(0, ENQ_INVOKE, "a"), (0, ENQ_RETURN, "a"),
               (0, ENQ_INVOKE, "b"), (0, ENQ_RETURN, "b"),
               (1, DEQ_INVOKE, None), (1, DEQ_RETURN, "b"),
               (1, DEQ_INVOKE, None), (1, DEQ_RETURN, "a")])
        assert not check_linearizable_fifo(h).ok

    def test_retry_returns_have_no_effect(self):
        h = H([(0, ENQ_INVOKE, "a"), (0, ENQ_RETURN, "a"),
               (1, DEQ_INVOKE, None), (1, DEQ_RETURN, RETRY),
               (1, DEQ_INVOKE, None), (1, DEQ_RETURN, "a")])
        assert check_linearizable_fifo(h).ok

    def test_pending_enqueue_may_or_may_not_land(self):
        h_landed = H([(0, ENQ_INVOKE, "a")], residue=["a"])
        h_vanished = H([(0, ENQ_INVOKE, "a")], residue=[])
        assert check_linearizable_fifo(h_landed).ok
        assert check_linearizable_fifo(h_vanished).ok

    def test_duplicate_delivery_fails_conservation(self):
        h = H([(0, ENQ_INVOKE, "a"), (0, ENQ_RETURN, "a"),
               (1, DEQ_INVOKE, None), (1, DEQ_RETURN, "a"),
               (2, DEQ_INVOKE, None), (2, DEQ_RETURN, "a")])
        assert not check_linearizable_fifo(h).ok

    def test_bounds_enforced(self):
        events = []
        for i in range(9):
            events.append((0, ENQ_INVOKE, i))
            events.append((0, ENQ_RETURN, i))
        with pytest.raises(BoundExceeded):
            check_linearizable_fifo(H(events, residue=list(range(9))))
        h4 = H([(t, DEQ_INVOKE, None) for t in range(4)])
        with pytest.raises(BoundExceeded):
            check_linearizable_fifo(h4)


class TestReclamationAudit:
    def test_valid_record_passes(self):
        assert audit_reclamation_log([(5, CLAIMED, 1000, 100)]).ok

    def test_available_state_fails(self):
        res = audit_reclamation_log([(5, AVAILABLE, 1000, 100)])
        assert not res.ok and res.witness[0] == 0

    def test_in_window_cycle_fails(self):
        # safe_cycle(1000, 100) = 900; 900 itself is still protected.
        assert not audit_reclamation_log([(900, CLAIMED, 1000, 100)]).ok
        assert audit_reclamation_log([(899, CLAIMED, 1000, 100)]).ok

    def test_large_log_linear_scan(self):
        window = 128
        records = [(dc - window - 1 - (i % 7), CLAIMED, dc, window)
                   for i, dc in enumerate(range(200, 1_000_200))]
        assert audit_reclamation_log(records).ok
        records[500_000] = (records[500_000][2], CLAIMED,
                            records[500_000][2], window)
        res = audit_reclamation_log(records)
        assert not res.ok and res.witness[0] == 500_000
