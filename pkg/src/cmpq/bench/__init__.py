"""Benchmark harness: thread-matrix runs, outlier-filtered latency
statistics, retention under synthetic load, and report emission."""

from .report import (COLUMNS, analyze_raw_samples, emit_report,
                     read_raw_samples, write_raw_samples)
from .runner import (BenchConfig, BenchReport, BenchSession,
                     ConservationError, IMPLS, build_queue, run_config,
                     run_matrix, synthetic_work)
from .stats import percentile, three_sigma_filter

__all__ = [
    "BenchConfig",
    "BenchReport",
    "BenchSession",
    "COLUMNS",
    "ConservationError",
    "IMPLS",
    "analyze_raw_samples",
    "build_queue",
    "emit_report",
    "percentile",
    "read_raw_samples",
    "run_config",
    "run_matrix",
    "synthetic_work",
    "three_sigma_filter",
    "write_raw_samples",
]
