"""Summary statistics, result-table rendering and CSV/JSON export.

Quantiles use linear interpolation between order statistics (position
``(n - 1) * p``), the usual "type 7" definition.
"""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import InputError
from .scenario import SCENARIOS
from .workload import RequestRecord

CSV_HEADER = ["test", "scenario", "profile", "thread", "seq", "start_ms", "elapsed_ms", "success",
              "chain_len", "chain_mode"]
STEADY_FRACTION = 0.6


class ExportError(OSError):
    pass


def median(values: Sequence[float]) -> float:
    if not values:
        raise InputError("median of an empty sample")
    xs = sorted(values)
    n = len(xs)
    mid = n // 2
    if n % 2:
        return xs[mid]
    return (xs[mid - 1] + xs[mid]) / 2


def _quantile_sorted(xs, p):
    h = (len(xs) - 1) * p
    lo = math.floor(h)
    hi = math.ceil(h)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def quantile(values: Sequence[float], p: float) -> float:
    if not values:
        raise InputError("quantile of an empty sample")
    return _quantile_sorted(sorted(values), p)


def iqr(values: Sequence[float]) -> float:
    if not values:
        raise InputError("iqr of an empty sample")
    xs = sorted(values)
    return _quantile_sorted(xs, 0.75) - _quantile_sorted(xs, 0.25)


def throughput_series(records: Iterable[RequestRecord], duration_ms: float = 0.0) -> list[tuple[int, int]]:
    """Successful responses per completion second, contiguous from second 0."""
    counts: dict[int, int] = {}
    for r in records:
        if r.success:
            s = int((r.start_ms + r.elapsed_ms) // 1000)
            counts[s] = counts.get(s, 0) + 1
    if not counts:
        return []
    last = max(max(counts), math.ceil(duration_ms / 1000) - 1)
    return [(s, counts.get(s, 0)) for s in range(last + 1)]


def steady_throughput(series: Sequence[tuple[int, int]], duration_ms: Optional[float] = None) -> float:
    """Mean successful responses/s over the middle 60% of the run."""
    if not series:
        return 0.0
    span = duration_ms / 1000 if duration_ms else len(series)
    lo = int(span * (1 - STEADY_FRACTION) / 2)
    hi = max(lo + 1, int(span * (1 + STEADY_FRACTION) / 2))
    window = [c for s, c in series if lo <= s < hi]
    return sum(window) / (hi - lo)


@dataclass
class SummaryStats:
    median_ms: Optional[float]
    iqr_ms: Optional[float]
    count: int
    success_count: int
    throughput_series: list = field(default_factory=list)
    steady_rps: float = 0.0


def summarize(records: Sequence[RequestRecord], duration_ms: Optional[float] = None,
              repetitions: int = 1) -> SummaryStats:
    ok = [r.elapsed_ms for r in records if r.success]
    series = throughput_series(records, duration_ms or 0.0)
    return SummaryStats(
        median_ms=median(ok) if ok else None,
        iqr_ms=iqr(ok) if ok else None,
        count=len(records),
        success_count=len(ok),
        throughput_series=series,
        steady_rps=steady_throughput(series, duration_ms) / repetitions,
    )


def format_cell(stats: Optional[SummaryStats]) -> str:
    # str.format rounds the exact binary value, ties to even
    if stats is None or stats.median_ms is None:
        return "n/a"
    return f"{stats.median_ms:.1f} - {stats.iqr_ms:.1f}"


def render_table(cells: dict) -> str:
    """Render ``{(row_label, scenario): SummaryStats | None}`` as a scenario-column grid."""
    if not cells:
        raise InputError("nothing to render")
    rows = []
    for row, _ in cells:
        if row not in rows:
            rows.append(row)
    cols = [s for s in SCENARIOS if any((r, s) in cells for r in rows)]
    cols += [s for _, s in cells if s not in cols]
    body = [[row] + [format_cell(cells.get((row, c))) for c in cols] for row in rows]
    head = [""] + cols
    widths = [max(len(line[i]) for line in [head] + body) for i in range(len(head))]
    out = []
    for line in [head] + body:
        out.append(" | ".join(v.ljust(w) for v, w in zip(line, widths)).rstrip())
    return "\n".join(out) + "\n"


_CELL = re.compile(r"(-?\d+\.\d) - (-?\d+\.\d)")


def parse_table(text: str) -> dict:
    lines = [l for l in text.splitlines() if l.strip()]
    cols = [c.strip() for c in lines[0].split("|")][1:]
    out = {}
    for line in lines[1:]:
        parts = [p.strip() for p in line.split("|")]
        for col, cell in zip(cols, parts[1:]):
            m = _CELL.fullmatch(cell)
            out[(parts[0], col)] = (float(m.group(1)), float(m.group(2))) if m else None
    return out


def _row(r: RequestRecord) -> list:
    return [r.test_id, r.scenario, r.profile, r.thread, r.seq, repr(float(r.start_ms)),
            repr(float(r.elapsed_ms)), int(r.success), r.chain_len, r.chain_mode]


def export_records(records: Iterable[RequestRecord], path) -> Path:
    path = Path(path)
    rows = sorted(records, key=lambda r: (r.test_id, r.thread, r.seq))
    try:
        with path.open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(CSV_HEADER)
            w.writerows(_row(r) for r in rows)
    except OSError as e:
        raise ExportError(f"cannot write {path}: {e.strerror or e}") from e
    return path


def read_records(path) -> list[RequestRecord]:
    with Path(path).open(newline="") as f:
        return [RequestRecord(row["test"], row["scenario"], row["profile"], int(row["thread"]), int(row["seq"]),
                              float(row["start_ms"]), float(row["elapsed_ms"]), row["success"] == "1",
                              int(row["chain_len"]), row["chain_mode"])
                for row in csv.DictReader(f)]


def summary_json(test: str, scenario: str, profile: str, stats: SummaryStats) -> str:
    return json.dumps({
        "test": test,
        "scenario": scenario,
        "profile": profile,
        "median_ms": stats.median_ms,
        "iqr_ms": stats.iqr_ms,
        "count": stats.count,
        "success_count": stats.success_count,
        "steady_rps": stats.steady_rps,
    })
