"""Table rendering for CLI outputs: CSV, JSON and Markdown.

Undefined values (``None``) become an empty CSV cell, JSON ``null`` and
"Undefined" in Markdown.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

FORMATS = ("csv", "json", "md")
UNDEFINED_MD = "Undefined"


def _cell(value, undefined: str) -> str:
    if value is None:
        return undefined
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def to_csv(rows: Iterable[Mapping], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c), "") for c in columns])
    return buf.getvalue()


def to_json(rows: Iterable[Mapping], columns: Sequence[str]) -> str:
    return json.dumps([{c: row.get(c) for c in columns} for row in rows], indent=1, ensure_ascii=False) + "\n"


def to_markdown(rows: Iterable[Mapping], columns: Sequence[str]) -> str:
    lines = ["| " + " | ".join(columns) + " |", "|" + "|".join("---" for _ in columns) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(_cell(row.get(c), UNDEFINED_MD) for c in columns) + " |")
    return "\n".join(lines) + "\n"


def render(rows: Iterable[Mapping], columns: Sequence[str], fmt: str) -> str:
    rows = list(rows)
    if fmt == "csv":
        return to_csv(rows, columns)
    if fmt == "json":
        return to_json(rows, columns)
    if fmt == "md":
        return to_markdown(rows, columns)
    raise ValueError(f"unknown format {fmt!r}")


def write_table(out_dir: Path, stem: str, rows: Sequence[Mapping], columns: Sequence[str],
                formats: Iterable[str] = ("csv", "json")) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in dict.fromkeys(formats):
        path = out_dir / f"{stem}.{fmt}"
        path.write_text(render(rows, columns, fmt), encoding="utf-8")
        written.append(path)
    return written
