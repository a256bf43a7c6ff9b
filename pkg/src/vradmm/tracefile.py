"""CSV export of run traces.

Floats are written with 17 significant digits, which round-trips every
float64 exactly; NaN marks quantities that were not computed.  Files are
UTF-8 with LF line endings.
"""

from __future__ import annotations

import io
import math
from pathlib import Path

import numpy as np

from .engine import IterationRecord, RunTrace

__all__ = ["TRACE_COLUMNS", "TraceTable", "write_trace", "format_trace", "read_trace",
           "write_bench", "format_bench", "read_bench", "records_equal"]

TRACE_COLUMNS = ("t", "epoch", "effective_passes", "objective", "r_grad", "r_subgrad",
                 "r_feas", "theta", "lyapunov", "realized_variance", "wall_ms")
_INT_COLUMNS = {"t", "epoch"}


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _columns(trace: RunTrace) -> tuple[str, ...]:
    return TRACE_COLUMNS + (("test_loss",) if trace.has_test_loss else ())


def _row(rec: IterationRecord, cols) -> list[str]:
    return [_fmt(getattr(rec, c)) for c in cols]


def format_trace(trace: RunTrace) -> str:
    cols = _columns(trace)
    lines = [",".join(cols)]
    lines.extend(",".join(_row(r, cols)) for r in trace.records)
    return "\n".join(lines) + "\n"


def _write_text(text: str, path) -> None:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        raise OSError(e.errno, f"cannot write trace {path}: {e.strerror}") from None


def write_trace(trace: RunTrace, path) -> None:
    _write_text(format_trace(trace), path)


def format_bench(traces: dict) -> str:
    """Long format: one block per algorithm, with a leading ``algorithm`` column."""
    if not traces:
        raise ValueError("no traces to write")
    test = any(tr.has_test_loss for tr in traces.values())
    cols = TRACE_COLUMNS + (("test_loss",) if test else ())
    lines = [",".join(("algorithm",) + cols)]
    for name, tr in traces.items():
        for r in tr.records:
            lines.append(",".join([name] + _row(r, cols)))
    return "\n".join(lines) + "\n"


def write_bench(traces: dict, path) -> None:
    _write_text(format_bench(traces), path)


class TraceTable:
    """Columns of a parsed trace file (``name -> ndarray``)."""

    def __init__(self, header: list[str], columns: dict):
        self.header = header
        self.columns = columns

    def __getitem__(self, name):
        return self.columns[name]

    def __len__(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def records(self) -> list[IterationRecord]:
        out = []
        for k in range(len(self)):
            kw = {c: self.columns[c][k] for c in self.header if c != "algorithm"}
            kw = {c: int(v) if c in _INT_COLUMNS else float(v) for c, v in kw.items()}
            out.append(IterationRecord(**kw))
        return out


def _parse(text: str, leading: tuple[str, ...]) -> TraceTable:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ValueError("empty trace file")
    header = lines[0].split(",")
    expect = list(leading + TRACE_COLUMNS)
    if header[:len(expect)] != expect or header[len(expect):] not in ([], ["test_loss"]):
        raise ValueError(f"unexpected trace header {lines[0]!r}")
    raw = {c: [] for c in header}
    for no, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise ValueError(f"line {no}: expected {len(header)} fields, got {len(parts)}")
        for c, p in zip(header, parts):
            raw[c].append(p)
    cols = {}
    for c, vals in raw.items():
        if c == "algorithm":
            cols[c] = np.array(vals, dtype=object)
        elif c in _INT_COLUMNS:
            cols[c] = np.array([int(v) for v in vals], dtype=np.int64)
        else:
            cols[c] = np.array([float(v) for v in vals], dtype=np.float64)
    return TraceTable(header, cols)


def read_trace(source) -> TraceTable:
    """Parse a trace written by :func:`write_trace` (path or text stream)."""
    text = source.read() if isinstance(source, io.TextIOBase) else Path(source).read_text(encoding="utf-8")
    return _parse(text, ())


def read_bench(source) -> TraceTable:
    text = source.read() if isinstance(source, io.TextIOBase) else Path(source).read_text(encoding="utf-8")
    return _parse(text, ("algorithm",))


def records_equal(a: IterationRecord, b: IterationRecord) -> bool:
    """Field-wise equality treating NaN as equal to NaN."""
    for c in TRACE_COLUMNS + ("test_loss",):
        x, y = getattr(a, c), getattr(b, c)
        if not (x == y or (isinstance(x, float) and math.isnan(x) and math.isnan(y))):
            return False
    return True
