"""Benchmark CLI.

    cmpq-bench run --impl cmp|locked --producers P --consumers C --items N
                   [--load ITERS] [--reps R] [--round-robin] [--pin]
                   [--window W] [--trigger N] [--min-batch B]
                   [--out PATH --format csv|json|md] [--raw-samples PATH]
    cmpq-bench analyze --raw-samples PATH [--out PATH --format csv|json|md]

Exit status is zero only when every run passed its conservation check.
"""

from __future__ import annotations

import argparse
import sys
import time
from typing import List, Optional

from .report import analyze_raw_samples, emit_report, write_raw_samples
from .runner import (BenchConfig, BenchSession, ConservationError, IMPLS,
                     run_config, run_matrix)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmpq-bench",
        description="Throughput/latency benchmark for the cmpq queue.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a producer/consumer benchmark")
    run.add_argument("--impl", default="cmp",
                     help="implementation(s): cmp, locked, or a comma list")
    run.add_argument("--producers", type=int, default=1, metavar="P")
    run.add_argument("--consumers", type=int, default=1, metavar="C")
    run.add_argument("--items", type=int, default=100_000, metavar="N")
    run.add_argument("--load", type=int, default=0, metavar="ITERS",
                     help="synthetic work iterations per op; also runs the "
                          "matching unloaded baseline and reports retention")
    run.add_argument("--reps", type=int, default=1, metavar="R")
    run.add_argument("--round-robin", action="store_true",
                     help="interleave repetitions across implementations")
    run.add_argument("--pin", action="store_true",
                     help="pin workers to cpus round-robin")
    run.add_argument("--window", type=int, default=4096, metavar="W")
    run.add_argument("--trigger", type=int, default=1024, metavar="N")
    run.add_argument("--min-batch", type=int, default=32, metavar="B")
    run.add_argument("--warmup", type=int, default=1000)
    run.add_argument("--sample-rate", type=int, default=64,
                     help="latency sampling: 1 op in this many")
    run.add_argument("--out", default=None, metavar="PATH")
    run.add_argument("--format", default="md", choices=("csv", "json", "md"))
    run.add_argument("--raw-samples", default=None, metavar="PATH",
                     help="save the first run's raw latency samples here")

    an = sub.add_parser("analyze",
                        help="recompute a report from saved raw samples")
    an.add_argument("--raw-samples", required=True, metavar="PATH")
    an.add_argument("--out", default=None, metavar="PATH")
    an.add_argument("--format", default="csv", choices=("csv", "json", "md"))
    return parser


def _config_for(args, impl: str, load: int) -> BenchConfig:
    return BenchConfig(
        producers=args.producers,
        consumers=args.consumers,
        total_items=args.items,
        impl=impl,
        synthetic_load=load,
        repetitions=args.reps,
        warmup_items=args.warmup,
        latency_sample_rate=args.sample_rate,
        window=args.window,
        trigger=args.trigger,
        min_batch=args.min_batch,
        pin=args.pin,
    )


def _cmd_run(args) -> int:
    impls = [s.strip() for s in args.impl.split(",") if s.strip()]
    for impl in impls:
        if impl not in IMPLS:
            print(f"unknown impl {impl!r}; choose from {IMPLS}",
                  file=sys.stderr)
            return 2

    raw_written = False

    def runner(config: BenchConfig):
        nonlocal raw_written
        t0 = time.perf_counter_ns()
        report = run_config(config)
        if args.raw_samples and not raw_written:
            raw_written = True
            write_raw_samples(
                args.raw_samples,
                {"impl": config.impl, "producers": config.producers,
                 "consumers": config.consumers, "items": config.total_items,
                 "load": config.synthetic_load,
                 "elapsed_ns": time.perf_counter_ns() - t0},
                report.raw_enq_ns, report.raw_deq_ns)
        return report

    reports = []
    try:
        if args.load > 0:
            # Baseline first, then the loaded run, per implementation.
            session = BenchSession(runner=lambda c: run_matrix(
                [c], round_robin=False, runner=runner)[0])
            for impl in impls:
                base = session.run(_config_for(args, impl, 0))
                loaded = session.run_retention(_config_for(args, impl, args.load))
                reports.extend([base, loaded])
        else:
            configs = [_config_for(args, impl, 0) for impl in impls]
            reports = run_matrix(configs, round_robin=args.round_robin,
                                 runner=runner)
    except ConservationError as exc:
        print(f"BENCHMARK INVALID: {exc}", file=sys.stderr)
        return 1
    emit_report(reports, fmt=args.format, out=args.out)
    if args.out:
        print(f"report written to {args.out}")
    return 0


def _cmd_analyze(args) -> int:
    report = analyze_raw_samples(args.raw_samples)
    emit_report([report], fmt=args.format, out=args.out)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_analyze(args)


if __name__ == "__main__":
    sys.exit(main())
