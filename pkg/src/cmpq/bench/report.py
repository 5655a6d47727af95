"""Report emission and the raw-sample file format.

Output is deterministic: the same reports produce byte-identical csv,
json, and markdown, and a saved raw-sample file re-analyzes to the same
bytes every time.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from typing import Dict, List, Optional, Sequence

from .runner import BenchReport
from .stats import percentile, three_sigma_filter

#: Wire column order for every format.
COLUMNS = ("impl", "P", "C", "throughput", "avg_enq", "p99_enq",
           "avg_deq", "p99_deq", "filtered_fraction", "retention")


def _row_values(r: BenchReport) -> list:
    return [r.impl, r.producers, r.consumers, r.throughput,
            r.avg_enq_ns, r.p99_enq_ns, r.avg_deq_ns, r.p99_deq_ns,
            r.filtered_fraction, r.retention]


def _fmt_csv(reports: Sequence[BenchReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in reports:
        row = _row_values(r)
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def _fmt_json(reports: Sequence[BenchReport]) -> str:
    rows = [dict(zip(COLUMNS, _row_values(r))) for r in reports]
    return json.dumps(rows, indent=2) + "\n"


def _fmt_md(reports: Sequence[BenchReport]) -> str:
    lines = ["| " + " | ".join(COLUMNS) + " |",
             "|" + "|".join(["---"] * len(COLUMNS)) + "|"]
    for r in reports:
        cells = [
            r.impl, str(r.producers), str(r.consumers),
            f"{r.throughput:.0f}",
            f"{r.avg_enq_ns:.1f}", f"{r.p99_enq_ns:.1f}",
            f"{r.avg_deq_ns:.1f}", f"{r.p99_deq_ns:.1f}",
            f"{r.filtered_fraction:.4f}",
            "-" if r.retention is None else f"{r.retention:.3f}",
        ]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


_FORMATS = {"csv": _fmt_csv, "json": _fmt_json, "md": _fmt_md}


def emit_report(reports: Sequence[BenchReport], fmt: str = "csv",
                out: Optional[str] = None) -> bytes:
    """Render reports in the stable column order; write to ``out`` (a
    path) or stdout when no path is given. Returns the rendered bytes."""
    try:
        text = _FORMATS[fmt](reports)
    except KeyError:
        raise ValueError(f"format must be one of {sorted(_FORMATS)}") from None
    data = text.encode("utf-8")
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "wb") as fh:
            fh.write(data)
    return data


# -- raw sample files --------------------------------------------------------

def write_raw_samples(path: str, meta: Dict[str, object],
                      enq_ns: Sequence[int], deq_ns: Sequence[int]) -> None:
    """One duration (ns) per line, with the run configuration in header
    comments and a kind marker before each section."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# cmpq raw latency samples, nanoseconds, one per line\n")
        fh.write("# config: " +
                 " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        fh.write("# kind: enq\n")
        for v in enq_ns:
            fh.write(f"{v}\n")
        fh.write("# kind: deq\n")
        for v in deq_ns:
            fh.write(f"{v}\n")


def read_raw_samples(path: str):
    """Parse a raw-sample file into (meta dict, {"enq": [...], "deq": [...]})."""
    meta: Dict[str, str] = {}
    sections: Dict[str, List[int]] = {"enq": [], "deq": []}
    current = "enq"
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.startswith("config:"):
                    for pair in body[len("config:"):].split():
                        k, _, v = pair.partition("=")
                        meta[k] = v
                elif body.startswith("kind:"):
                    current = body[len("kind:"):].strip()
                    sections.setdefault(current, [])
                continue
            sections[current].append(int(line))
    return meta, sections


def analyze_raw_samples(path: str) -> BenchReport:
    """Recompute a report from a saved raw-sample file.

    The pipeline (outlier filter, averages, nearest-rank percentiles,
    throughput from the recorded elapsed time) is pure arithmetic over
    the file contents, so repeated runs are byte-identical.
    """
    meta, sections = read_raw_samples(path)
    enq_kept, enq_removed = three_sigma_filter(sections.get("enq", []))
    deq_kept, deq_removed = three_sigma_filter(sections.get("deq", []))
    n_e = len(sections.get("enq", []))
    n_d = len(sections.get("deq", []))
    combined = ((enq_removed * n_e + deq_removed * n_d) / (n_e + n_d)
                if n_e + n_d else 0.0)
    items = int(meta.get("items", 0))
    elapsed_ns = int(meta.get("elapsed_ns", 0))
    throughput = items / (elapsed_ns / 1e9) if elapsed_ns else 0.0
    return BenchReport(
        impl=meta.get("impl", "?"),
        producers=int(meta.get("producers", 0)),
        consumers=int(meta.get("consumers", 0)),
        throughput=throughput,
        avg_enq_ns=float(enq_kept.mean()) if enq_kept.size else 0.0,
        p99_enq_ns=percentile(enq_kept, 99) if enq_kept.size else 0.0,
        avg_deq_ns=float(deq_kept.mean()) if deq_kept.size else 0.0,
        p99_deq_ns=percentile(deq_kept, 99) if deq_kept.size else 0.0,
        filtered_fraction=combined,
        total_items=items,
    )
