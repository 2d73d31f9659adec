"""Traceability report files.

CSV with the row header `part_id,site_id,target_cnm,peak_applied_cnm,
validated,ts_ms`, UTF-8, LF line endings. Session identity and duration ride
in a single leading `#` comment line so a report file round-trips to the same
report object without a sidecar.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .session import Method, ReportRow, TighteningReport

REPORT_HEADER = ("part_id", "site_id", "target_cnm", "peak_applied_cnm",
                 "validated", "ts_ms")


class ReportError(ValueError):
    pass


def report_to_text(report: TighteningReport) -> str:
    for row in report.rows:
        if row.validated and row.peak_applied_cnm < row.target_cnm:
            raise ReportError(
                f"row {row.part_id}/{row.site_id}: validated but peak "
                f"{row.peak_applied_cnm} < target {row.target_cnm}"
            )
    out = io.StringIO()
    out.write(f"# session_id={report.session_id} method={report.method.value} "
              f"total_duration_s={report.total_duration_s}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in report.rows:
        writer.writerow([row.part_id, row.site_id, row.target_cnm,
                         row.peak_applied_cnm,
                         "true" if row.validated else "false", row.ts_ms])
    return out.getvalue()


def write_report(report: TighteningReport, path) -> None:
    Path(path).write_text(report_to_text(report), encoding="utf-8", newline="")


def read_report(path) -> TighteningReport:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ReportError(f"cannot read report {path}: {e}") from e
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ReportError(f"{path}: missing metadata line")
    meta: dict[str, str] = {}
    for item in lines[0][2:].split():
        key, _, value = item.partition("=")
        meta[key] = value
    try:
        session_id = meta["session_id"]
        method = Method(meta["method"])
        duration = float(meta["total_duration_s"])
    except (KeyError, ValueError) as e:
        raise ReportError(f"{path}: bad metadata line: {e}") from e
    reader = csv.reader(lines[1:])
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise ReportError(f"{path}: missing header row") from None
    if header != REPORT_HEADER:
        raise ReportError(f"{path}: unexpected header {header!r}")
    rows = []
    for rec in reader:
        if len(rec) != len(REPORT_HEADER):
            raise ReportError(f"{path}: bad row {rec!r}")
        part_id, site_id, target, peak, validated, ts = rec
        if validated not in ("true", "false"):
            raise ReportError(f"{path}: bad validated value {validated!r}")
        rows.append(ReportRow(part_id, site_id, int(target), int(peak),
                              validated == "true", int(ts)))
    return TighteningReport(session_id, method, tuple(rows), duration)
