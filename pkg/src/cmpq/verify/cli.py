"""Verification CLI: runs the desk-scale interleaving suites and fault
scenarios, printing one line per check and serializing any failure
witness as a readable trace."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .checkers import check_linearizable_fifo
from .scenarios import (force_recycle_scenario, force_recycle_sweep,
                        producer_stall_scenario, retry_injection_scenario,
                        stall_bounded_reclamation)
from .scheduler import Scenario, explore_interleavings

#: The desk-scale shapes: producers/consumers and their scripted ops.
DESK_SCENARIOS = {
    "1P1C-2ops": Scenario(threads=[[("enq", 1)], [("deq",)]]),
    "2P1C-3ops": Scenario(threads=[[("enq", 1)], [("enq", 2)], [("deq",)]]),
    "1P2C-3ops": Scenario(threads=[[("enq", 1)], [("deq",)], [("deq",)]]),
}


def run_desk_suite(sample_limit: int, seed: int,
                   witness_lines: List[str]) -> bool:
    ok = True
    for name, scenario in DESK_SCENARIOS.items():
        full = len(scenario.threads) <= 2
        result = explore_interleavings(
            scenario, mode="full" if full else "sampled",
            sample_limit=sample_limit, seed=seed)
        failures = 0
        for hist in result.histories:
            verdict = check_linearizable_fifo(hist)
            if not verdict.ok:
                failures += 1
                witness_lines.append(f"== {name}: non-linearizable history ==")
                witness_lines.append(repr(verdict.witness))
                witness_lines.extend(verdict.trace)
        status = "PASS" if failures == 0 else "FAIL"
        print(f"{status}: {name} [{result.mode}] schedules={result.schedules} "
              f"checked={len(result.histories)} truncated={result.truncated} "
              f"failures={failures}")
        ok = ok and failures == 0
    return ok


def run_fault_suite(seed: int, witness_lines: List[str]) -> bool:
    ok = True
    checks = [
        ("forced-recycle cursor guard", force_recycle_scenario),
        ("forced-recycle position sweep", force_recycle_sweep),
        ("producer stall isolation", producer_stall_scenario),
        ("transient retry delivery", retry_injection_scenario),
    ]
    for name, fn in checks:
        result = fn()
        print(("PASS" if result.ok else "FAIL") + f": {name}")
        if not result.ok:
            ok = False
            witness_lines.append(f"== {name} ==")
            witness_lines.append(repr(result.witness))
            witness_lines.extend(result.trace)
    stall = stall_bounded_reclamation(seed=seed)
    good = stall["ok"] and stall["stalled_node_freed"]
    print(("PASS" if good else "FAIL") +
          f": bounded reclamation under stall "
          f"(in_use={stall['in_use']} bound={stall['bound']})")
    if not good:
        ok = False
        witness_lines.append("== bounded reclamation under stall ==")
        witness_lines.append(repr({k: v for k, v in stall.items()
                                   if k != "free_log"}))
    return ok


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cmpq-verify",
        description="Run the queue's desk-scale verification suites.")
    parser.add_argument("--witness-out", metavar="PATH", default=None,
                        help="also write failure witnesses to this file")
    parser.add_argument("--samples", type=int, default=2000,
                        help="schedules per sampled scenario (default 2000)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    witness_lines: List[str] = []
    ok = run_desk_suite(args.samples, args.seed, witness_lines)
    ok = run_fault_suite(args.seed, witness_lines) and ok
    if witness_lines:
        text = "\n".join(witness_lines)
        print(text)
        if args.witness_out:
            with open(args.witness_out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
            print(f"witnesses written to {args.witness_out}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
