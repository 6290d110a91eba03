"""Report records: one row per reported cell, written as a long-format
CSV and as an aligned text summary."""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass

__all__ = ["ReportRow", "write_report_csv", "write_report_text", "format_report"]


@dataclass(frozen=True)
class ReportRow:
    key: str  # e.g. "table1/simple_glm/q2"
    value: float | str
    sd: float | None = None
    method: str | None = None
    seed: int | None = None


def _atomic_write(path: str | os.PathLike, text: str) -> None:
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def write_report_csv(rows: list[ReportRow], path: str | os.PathLike) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["key", "value", "sd", "method", "seed"])
    for r in rows:
        writer.writerow(
            [r.key, _fmt(r.value), "" if r.sd is None else _fmt(r.sd), r.method or "", "" if r.seed is None else r.seed]
        )
    _atomic_write(path, buf.getvalue())


def format_report(rows: list[ReportRow]) -> str:
    width = max((len(r.key) for r in rows), default=0)
    lines = []
    for r in rows:
        extras = []
        if r.sd is not None:
            extras.append(f"sd={_fmt(r.sd)}")
        if r.method:
            extras.append(f"method={r.method}")
        if r.seed is not None:
            extras.append(f"seed={r.seed}")
        tail = ("  [" + ", ".join(extras) + "]") if extras else ""
        lines.append(f"{r.key.ljust(width)} = {_fmt(r.value)}{tail}")
    return "\n".join(lines) + "\n"


def write_report_text(rows: list[ReportRow], path: str | os.PathLike) -> None:
    _atomic_write(path, format_report(rows))
