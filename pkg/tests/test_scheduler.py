"""Deterministic scheduler: enumeration counts, replay, stalls, truncation."""

from math import comb, factorial

import pytest

from cmpq import EMPTY, RETRY
from cmpq.verify import (Scenario, check_linearizable_fifo,
                         explore_interleavings, resolve_phase, run_schedule,
                         start_scripted)


def returns_of(history):
    return [e.payload_id for e in history.events if e.kind == "deq_return"]


class TestEnumeration:
    def test_single_thread_single_schedule(self):
        res = explore_interleavings(Scenario(threads=[[("enq", 1)]]),
                                    mode="full")
        assert res.schedules == 1
        assert res.truncated == 0

    @pytest.mark.parametrize("a,b", [(2, 2), (3, 2), (4, 1)])
    def test_schedule_count_matches_closed_form(self, a, b):
        # Two threads with a and b bare yield points interleave in
        # (a+b)! / (a! b!) ways.
        sc = Scenario(threads=[[("spin", a)], [("spin", b)]])
        res = explore_interleavings(sc, mode="full")
        assert res.schedules == factorial(a + b) // (factorial(a) * factorial(b))

    def test_three_thread_count_matches_closed_form(self):
        sc = Scenario(threads=[[("spin", 1)], [("spin", 1)], [("spin", 2)]])
        res = explore_interleavings(sc, mode="full")
        assert res.schedules == factorial(4) // factorial(2)

    def test_auto_mode_switches_to_sampling(self):
        small = Scenario(threads=[[("spin", 2)], [("spin", 2)]])
        assert explore_interleavings(small, mode="auto").mode == "full"
        big = Scenario(threads=[[("enq", 1)], [("deq",)]])
        res = explore_interleavings(big, mode="auto", sample_limit=50)
        assert res.mode == "sampled"
        assert res.schedules == 50


class TestRaces:
    def test_producer_consumer_race_never_duplicates(self):
        sc = Scenario(threads=[[("enq", 1)], [("deq",)]])
        res = explore_interleavings(sc, mode="full")
        assert res.schedules > 100
        assert res.truncated == 0
        for h in res.histories:
            got = [r for r in returns_of(h) if r not in (EMPTY, RETRY)]
            assert got + list(h.residue) == [1]
            assert check_linearizable_fifo(h).ok

    def test_two_consumers_one_element_exactly_one_winner(self):
        def setup(q):
            q.enqueue(7)
            q.enqueue(8)
            assert q.try_dequeue() == 7    # leaves the cursor on element 8
        sc = Scenario(threads=[[("deq",)], [("deq",)]], setup=setup)
        res = explore_interleavings(sc, mode="full")
        assert res.truncated == 0
        for h in res.histories:
            got = [r for r in returns_of(h) if r not in (EMPTY, RETRY)]
            assert got == [8]              # exactly one winner, no duplicates
            assert not h.residue
            assert check_linearizable_fifo(h).ok


class TestReplayDeterminism:
    def test_same_choices_same_history(self):
        sc = Scenario(threads=[[("enq", 1), ("enq", 2)], [("deq",), ("deq",)]])
        a = run_schedule(sc, [0, 1, 0, 0, 1, 1, 0])
        b = run_schedule(sc, [0, 1, 0, 0, 1, 1, 0])
        sig_a = [(e.thread_id, e.kind, repr(e.payload_id)) for e in a.history.events]
        sig_b = [(e.thread_id, e.kind, repr(e.payload_id)) for e in b.history.events]
        assert sig_a == sig_b
        assert a.decisions == b.decisions

    def test_same_seed_same_sampled_outcomes(self):
        sc = Scenario(threads=[[("enq", 1)], [("deq",)]])
        r1 = explore_interleavings(sc, mode="sampled", sample_limit=40, seed=9)
        r2 = explore_interleavings(sc, mode="sampled", sample_limit=40, seed=9)
        sig = lambda r: [[(e.thread_id, e.kind, repr(e.payload_id))
                          for e in h.events] for h in r.histories]
        assert sig(r1) == sig(r2)


class TestStallsAndTruncation:
    def test_unknown_phase_rejected(self):
        with pytest.raises(ValueError):
            resolve_phase("warp_core_breach")

    def test_stalled_thread_excluded_until_resumed(self):
        sc = Scenario(threads=[[("deq",)]],
                      setup=lambda q: q.enqueue(5))
        ctl = start_scripted(sc, stalls=[(0, "claim")])
        ctl.run_until_blocked(0)
        assert ctl._stalled[0]
        assert ctl.label_of(0) == "deq:claim"
        assert ctl.runnable() == []
        ctl.handles[0].resume()
        ctl.run_until_blocked(0)
        out = ctl.finish()
        assert returns_of(out.history) == [5]

    def test_spinning_producer_reports_truncation(self):
        # Freezing a producer between its link and its tail bump leaves
        # the tail stale; the other producer can only retry, so a
        # schedule that never resumes the first one must be cut off.
        sc = Scenario(threads=[[("enq", 1)], [("enq", 2)]])
        out = run_schedule(sc, stalls=[(0, "enq:link")], max_steps=60)
        assert out.truncated
        assert not out.completed
