"""Tool report parsers and normalization into the uniform findings format.

Each tool adapter names a parser id.  A parser turns the raw report bytes into
``RawFinding`` records (banners and progress lines are dropped); ``normalize``
then maps each raw identifier through the taxonomy's mapping database.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, NamedTuple

from sastmeta.errors import MalformedReport, SchemaError, UnknownParser
from sastmeta.taxonomy import OUT_OF_SCOPE, SENTINELS, UNMAPPED, Taxonomy, map_raw_finding


class Location(NamedTuple):
    file: str
    line: int | None = None


@dataclass(frozen=True)
class RawFinding:
    tool_id: str
    raw_identifier: str
    location: Location | None = None
    message: str = ""

    def __post_init__(self):
        if not self.raw_identifier:
            raise ValueError("raw_identifier must be non-empty")
        if self.location is not None and self.location.line is not None and self.location.line < 1:
            raise ValueError(f"line must be >= 1, got {self.location.line}")


@dataclass(frozen=True)
class NormalizedFinding:
    tool_id: str
    apk_id: str
    unified_type: str
    raw_identifier: str
    location: Location | None = None
    message: str = ""

    @property
    def out_of_scope(self) -> bool:
        return self.unified_type == OUT_OF_SCOPE

    @property
    def countable(self) -> bool:
        """Whether the finding may enter any metric."""
        return self.unified_type not in SENTINELS


# --- grammars -----------------------------------------------------------------

def _positive_line(value: str, context: str) -> int:
    try:
        line = int(value)
    except ValueError:
        raise MalformedReport(f"{context}: line {value!r} is not an integer") from None
    if line < 1:
        raise MalformedReport(f"{context}: line {line} is not positive")
    return line


def parse_tsv(tool_id: str, text: str) -> list[RawFinding]:
    """``RULE_ID<TAB>FILE<TAB>LINE<TAB>MESSAGE``; ``#`` lines are comments."""
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise MalformedReport(f"line {n}: expected 4 tab-separated fields, got {len(parts)}")
        rule_id, file, line_no, message = parts
        if not rule_id:
            raise MalformedReport(f"line {n}: empty rule id")
        out.append(RawFinding(tool_id, rule_id, Location(file, _positive_line(line_no, f"line {n}")), message))
    return out


def parse_json(tool_id: str, text: str) -> list[RawFinding]:
    """``{"findings": [{"id", "file"?, "line"?, "message"?}, ...]}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedReport(f"invalid JSON report: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("findings"), list):
        raise MalformedReport("JSON report lacks a 'findings' list")
    out = []
    for i, item in enumerate(doc["findings"]):
        if not isinstance(item, dict) or not item.get("id"):
            raise MalformedReport(f"finding #{i} has no id")
        loc = None
        if item.get("file"):
            line = item.get("line")
            if line is not None and (not isinstance(line, int) or line < 1):
                raise MalformedReport(f"finding #{i}: bad line {line!r}")
            loc = Location(item["file"], line)
        out.append(RawFinding(tool_id, str(item["id"]), loc, str(item.get("message", ""))))
    return out


_BRACKET = re.compile(r"^\[(Critical|Warning|Notice)\]\s+([A-Z0-9_]+)(?::\s*(.*))?$")
_ARROW = re.compile(r"^\s+->\s+(\S+?)(?::(\d+))?\s*$")


def parse_bracket(tool_id: str, text: str) -> list[RawFinding]:
    """``[Critical] VECTOR_ID: message`` records, optionally followed by ``-> file:line``.

    ``[Info]`` lines are safe-check notices, not findings.
    """
    out: list[RawFinding] = []
    for line in text.splitlines():
        m = _BRACKET.match(line)
        if m:
            out.append(RawFinding(tool_id, m.group(2), None, (m.group(3) or "").strip()))
            continue
        a = _ARROW.match(line)
        if a and out and out[-1].location is None:
            prev = out[-1]
            ln = int(a.group(2)) if a.group(2) else None
            out[-1] = RawFinding(prev.tool_id, prev.raw_identifier, Location(a.group(1), ln or None), prev.message)
    return out


_BLOCK_FIELD = re.compile(r"^\s+(\w+):\s*(.*)$")


def parse_block(tool_id: str, text: str) -> list[RawFinding]:
    """Indented blocks headed by ``Vulnerability: <name>`` with File/Line/Description fields."""
    out: list[RawFinding] = []
    current: dict | None = None

    def flush():
        if current is None:
            return
        loc = None
        if current.get("file"):
            line = _positive_line(current["line"], current["name"]) if current.get("line") else None
            loc = Location(current["file"], line)
        out.append(RawFinding(tool_id, current["name"], loc, current.get("description", "")))

    for line in text.splitlines():
        if line.startswith("Vulnerability:"):
            flush()
            name = line.split(":", 1)[1].strip()
            if not name:
                raise MalformedReport("vulnerability block without a name")
            current = {"name": name}
            continue
        m = _BLOCK_FIELD.match(line)
        if m and current is not None:
            current[m.group(1).lower()] = m.group(2).strip()
        elif line.strip() and not line.startswith((" ", "\t")):
            flush()
            current = None
    flush()
    return out


def parse_pipe(tool_id: str, text: str) -> list[RawFinding]:
    """``ID | file[:line] | message`` rows; lines without two pipes are banners."""
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if line.count(" | ") < 2:
            continue
        ident, where, message = (p.strip() for p in line.split(" | ", 2))
        if not ident:
            raise MalformedReport(f"line {n}: empty identifier")
        loc = None
        if where and where != "-":
            file, _, ln = where.rpartition(":")
            if file and ln.isdigit():
                loc = Location(file, _positive_line(ln, f"line {n}"))
            else:
                loc = Location(where, None)
        out.append(RawFinding(tool_id, ident, loc, message))
    return out


Grammar = Callable[[str, str], list[RawFinding]]

# parser_id -> (tool id the findings are attributed to, grammar)
PARSERS: dict[str, tuple[str, Grammar]] = {
    "refdetector": ("refdetector", parse_tsv),
    "mobsf": ("MobSF", parse_json),
    "qark": ("QARK", parse_json),
    "androbugs": ("AndroBugs", parse_bracket),
    "apkhunt": ("APKHunt", parse_pipe),
    "super": ("SUPER", parse_block),
    "jaadas": ("JAADAS", parse_json),
    "droidstatx": ("DroidStatx", parse_pipe),
    "marvin": ("Marvin", parse_pipe),
    "trueseeing": ("Trueseeing", parse_pipe),
    "ausera": ("AUSERA", parse_json),
    "speck": ("SPECK", parse_pipe),
}


def register_parser(parser_id: str, tool_id: str, grammar: Grammar) -> None:
    PARSERS[parser_id] = (tool_id, grammar)


def parser_tool(parser_id: str) -> str:
    try:
        return PARSERS[parser_id][0]
    except KeyError:
        raise UnknownParser(parser_id) from None


def parse_report(parser_id: str, report_text: bytes | str) -> list[RawFinding]:
    try:
        tool_id, grammar = PARSERS[parser_id]
    except KeyError:
        raise UnknownParser(parser_id) from None
    if isinstance(report_text, bytes):
        report_text = report_text.decode("utf-8", errors="replace")
    return grammar(tool_id, report_text)


def normalize(tax: Taxonomy, apk_id: str, raws: Iterable[RawFinding]) -> list[NormalizedFinding]:
    raws = list(raws)
    tools = {r.tool_id for r in raws}
    if len(tools) > 1:
        raise ValueError(f"normalize expects findings from one tool, got {sorted(tools)}")
    return [
        NormalizedFinding(
            tool_id=r.tool_id,
            apk_id=apk_id,
            unified_type=map_raw_finding(tax, r.tool_id, r.raw_identifier),
            raw_identifier=r.raw_identifier,
            location=r.location,
            message=r.message,
        )
        for r in raws
    ]


def dedupe(findings: Iterable[NormalizedFinding], granularity: str = "per_type") -> list[NormalizedFinding]:
    """Drop repeats, first occurrence wins.

    ``per_type`` keeps one finding per (tool, apk, type), which is the level
    ground truth is labeled at; ``per_location`` also keys on file and line.
    """
    if granularity not in ("per_type", "per_location"):
        raise ValueError(f"unknown granularity {granularity!r}")
    seen = set()
    out = []
    for f in findings:
        key = (f.tool_id, f.apk_id, f.unified_type)
        if granularity == "per_location":
            key += (f.location,)
        if key not in seen:
            seen.add(key)
            out.append(f)
    return out


# --- findings files (JSON lines) ------------------------------------------------

def finding_to_record(f: NormalizedFinding) -> dict:
    return {
        "tool": f.tool_id,
        "apk": f.apk_id,
        "type": f.unified_type,
        "raw": f.raw_identifier,
        "file": f.location.file if f.location else None,
        "line": f.location.line if f.location else None,
        "message": f.message,
    }


def finding_from_record(rec: dict) -> NormalizedFinding:
    try:
        loc = Location(rec["file"], rec["line"]) if rec.get("file") else None
        return NormalizedFinding(rec["tool"], rec["apk"], rec["type"], rec["raw"], loc, rec.get("message", ""))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad finding record {rec!r}: missing {exc}") from None


def dumps_findings(findings: Iterable[NormalizedFinding]) -> str:
    return "".join(json.dumps(finding_to_record(f), ensure_ascii=False) + "\n" for f in findings)


def write_findings(path: str | Path, findings: Iterable[NormalizedFinding]) -> None:
    Path(path).write_text(dumps_findings(findings), encoding="utf-8")


def read_findings(path: str | Path, tax: Taxonomy | None = None) -> list[NormalizedFinding]:
    """Read a JSON-lines findings file, validating types against ``tax`` if given."""
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{n}: {exc}") from None
        f = finding_from_record(rec)
        if tax is not None and f.unified_type not in SENTINELS and not tax.is_known_type(f.unified_type):
            raise SchemaError(f"{path}:{n}: unknown type {f.unified_type!r}")
        out.append(f)
    return out


__all__ = [
    "Location",
    "NormalizedFinding",
    "OUT_OF_SCOPE",
    "PARSERS",
    "RawFinding",
    "UNMAPPED",
    "dedupe",
    "normalize",
    "parse_report",
    "read_findings",
    "register_parser",
    "write_findings",
]
