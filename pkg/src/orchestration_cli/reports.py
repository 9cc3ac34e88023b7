"""Line-oriented ``key=value`` reports, loss traces and CSV tables."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence

import numpy as np

from velocity_optimization import TraceEntry

SUMMARY_FIELDS = ("fa_ssd", "dice_mean")


def format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_report(values: Mapping[str, object]) -> str:
    return "".join(f"{key}={format_value(value)}\n" for key, value in values.items())


def write_report(values: Mapping[str, object], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_report(values))
    return path


def read_report(path: Path) -> Dict[str, str]:
    """Parse a ``key=value`` file; blank lines and ``#`` comments are skipped."""

    out: Dict[str, str] = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: malformed report line {line!r}")
        out[key.strip()] = value.strip()
    return out


def trace_line(entry: TraceEntry) -> str:
    r = entry.report
    return (
        f"level={entry.level + 1} iter={entry.iteration} event={entry.event} step={entry.step!r} "
        f"total={r.total!r} eds={r.eds!r} ncc={r.ncc!r} be={r.be!r}"
    )


def write_trace(trace: Iterable[TraceEntry], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(trace_line(entry) + "\n" for entry in trace))
    return path


def write_table(rows: Sequence[Mapping[str, object]], path: Path) -> Path:
    """Write rows as CSV; the header is the union of keys in first-seen order."""

    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_value(value) for key, value in row.items()})
    return path


def read_table(path: Path) -> List[Dict[str, str]]:
    with path.open(newline="") as handle:
        return list(csv.DictReader(handle))


def summarize_rows(
    rows: Iterable[Mapping[str, object]],
    fields: Sequence[str] = SUMMARY_FIELDS,
    *,
    group_by: str = "mode",
) -> List[Dict[str, object]]:
    """Per-group count, mean and sample standard deviation of numeric columns.

    Groups keep first-seen order. Blank cells are skipped, so a column that only
    some groups carry (e.g. ``total`` for registered modes) does not break the rest.
    """

    groups: Dict[str, List[Mapping[str, object]]] = {}
    for row in rows:
        if group_by not in row:
            raise ValueError(f"table row has no {group_by!r} column: {dict(row)!r}")
        groups.setdefault(str(row[group_by]), []).append(row)

    summary: List[Dict[str, object]] = []
    for name, members in groups.items():
        out: Dict[str, object] = {group_by: name, "n": len(members)}
        for field in fields:
            values = np.array(
                [float(str(m[field])) for m in members if m.get(field) not in (None, "")],
                dtype=np.float64,
            )
            if values.size == 0:
                out[f"{field}_mean"] = ""
                out[f"{field}_std"] = ""
                continue
            out[f"{field}_mean"] = float(values.mean())
            out[f"{field}_std"] = float(values.std(ddof=1)) if values.size > 1 else 0.0
        summary.append(out)
    return summary
