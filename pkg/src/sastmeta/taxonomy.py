"""Unified vulnerability taxonomy and the per-tool identifier mapping database.

The shipped ``data/taxonomy.json`` encodes the 67 unified types, the star matrix
of which tool supports which type, per-tool tool-only ("unique") type records
and the raw-identifier mappings used to normalize reports.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple

import jsonschema

from sastmeta.errors import InvariantError, SchemaError, UnknownTool

OUT_OF_SCOPE = "OUT_OF_SCOPE"
UNMAPPED = "UNMAPPED"
SENTINELS = frozenset({OUT_OF_SCOPE, UNMAPPED})

EXPECTED_TYPE_COUNT = 67
EXPECTED_CATEGORY_COUNT = 5
MIN_SUPPORTING_TOOLS = 2

TAXONOMY_SCHEMA = {
    "type": "object",
    "required": ["version", "categories", "types", "unique", "mappings"],
    "properties": {
        "version": {"type": "string"},
        "categories": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["code", "name"],
                "properties": {"code": {"type": "string"}, "name": {"type": "string"}},
            },
        },
        "types": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "name", "category", "tools"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "name": {"type": "string", "minLength": 1},
                    "category": {"type": "string"},
                    "tools": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "unique": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["tool", "count", "names"],
                "properties": {
                    "tool": {"type": "string"},
                    "count": {"type": "integer", "minimum": 0},
                    "names": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "mappings": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["tool", "kind", "pattern", "target"],
                "properties": {
                    "tool": {"type": "string"},
                    "kind": {"enum": ["exact", "regex"]},
                    "pattern": {"type": "string", "minLength": 1},
                    "target": {"type": "string"},
                },
            },
        },
    },
}


def slugify(text: str) -> str:
    return re.sub(r"[^A-Z0-9]+", "_", text.upper()).strip("_")


def unique_type_id(tool: str, name: str) -> str:
    """Id under which a tool-only type is addressable (mappings, ground truth)."""
    return f"UNIQUE.{slugify(tool)}.{slugify(name)}"


@dataclass(frozen=True)
class UnifiedType:
    id: str
    name: str
    category: str
    supporting_tools: frozenset[str]


@dataclass(frozen=True)
class MappingEntry:
    tool_id: str
    match_kind: str  # "exact" | "regex"
    raw_pattern: str
    target: str
    _compiled: re.Pattern | None = field(default=None, compare=False, repr=False)

    def matches(self, raw: str) -> bool:
        if self.match_kind == "exact":
            return raw.strip() == self.raw_pattern
        return self._compiled.search(raw) is not None


@dataclass(frozen=True)
class UniqueTypes:
    tool: str
    count: int
    names: tuple[str, ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(unique_type_id(self.tool, n) for n in self.names)


@dataclass(frozen=True)
class Taxonomy:
    version: str
    categories: dict[str, str]
    types: tuple[UnifiedType, ...]
    mappings: tuple[MappingEntry, ...]
    unique_types: tuple[UniqueTypes, ...]

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {t.id: t for t in self.types})
        by_tool: dict[str, list[MappingEntry]] = {}
        for m in self.mappings:
            by_tool.setdefault(m.tool_id, []).append(m)
        object.__setattr__(self, "_mappings_by_tool", by_tool)

    @property
    def type_ids(self) -> frozenset[str]:
        return frozenset(self._by_id)

    def get(self, type_id: str) -> UnifiedType:
        return self._by_id[type_id]

    def __contains__(self, type_id: str) -> bool:
        return type_id in self._by_id

    @property
    def tools(self) -> list[str]:
        """Tools of the star matrix, in column order of first appearance."""
        seen: dict[str, None] = {}
        for u in self.unique_types:
            seen.setdefault(u.tool)
        for t in self.types:
            for tool in sorted(t.supporting_tools):
                seen.setdefault(tool)
        return list(seen)

    @property
    def mapped_tools(self) -> frozenset[str]:
        return frozenset(self._mappings_by_tool)

    def unique_ids(self) -> dict[str, str]:
        """Map of tool-only type id -> owning tool."""
        return {uid: u.tool for u in self.unique_types for uid in u.ids}

    def is_known_type(self, type_id: str) -> bool:
        return type_id in self._by_id or type_id in self.unique_ids()

    def supported_types(self, tool_id: str) -> frozenset[str]:
        """Unified and tool-only type ids the tool can report."""
        ids = {t.id for t in self.types if tool_id in t.supporting_tools}
        for u in self.unique_types:
            if u.tool == tool_id:
                ids.update(u.ids)
        for m in self._mappings_by_tool.get(tool_id, ()):
            if m.target != OUT_OF_SCOPE:
                ids.add(m.target)
        return frozenset(ids)

    def entries_for(self, tool_id: str) -> list[MappingEntry]:
        try:
            return self._mappings_by_tool[tool_id]
        except KeyError:
            raise UnknownTool(tool_id) from None


def _check_invariants(tax: Taxonomy, strict_counts: bool) -> None:
    ids, names = set(), set()
    for t in tax.types:
        if t.id in ids:
            raise InvariantError(f"duplicate type id {t.id!r}")
        if t.name in names:
            raise InvariantError(f"duplicate type name {t.name!r} ({t.id})")
        ids.add(t.id)
        names.add(t.name)
        if t.category not in tax.categories:
            raise InvariantError(f"type {t.id!r} has unknown category {t.category!r}")
        if len(t.supporting_tools) < MIN_SUPPORTING_TOOLS:
            raise InvariantError(
                f"type {t.id!r} is supported by {len(t.supporting_tools)} tool(s); "
                f"at least {MIN_SUPPORTING_TOOLS} required"
            )
    for u in tax.unique_types:
        if len(u.names) > u.count:
            raise InvariantError(f"unique record for {u.tool!r} lists more names than its count")
    valid_targets = ids | set(tax.unique_ids()) | {OUT_OF_SCOPE}
    seen: dict[tuple[str, str, str], str] = {}
    for m in tax.mappings:
        if m.target not in valid_targets:
            raise InvariantError(f"mapping {m.tool_id}:{m.raw_pattern!r} targets unknown type {m.target!r}")
        key = (m.tool_id, m.match_kind, m.raw_pattern)
        if key in seen and seen[key] != m.target:
            raise InvariantError(
                f"ambiguous mapping for {m.tool_id}:{m.raw_pattern!r} ({seen[key]} vs {m.target})"
            )
        seen[key] = m.target
    if strict_counts:
        if len(tax.types) != EXPECTED_TYPE_COUNT:
            raise InvariantError(f"expected {EXPECTED_TYPE_COUNT} types, found {len(tax.types)}")
        present = {t.category for t in tax.types}
        if len(present) != EXPECTED_CATEGORY_COUNT:
            raise InvariantError(f"expected {EXPECTED_CATEGORY_COUNT} categories, found {len(present)}")


def parse_taxonomy(doc: object, strict_counts: bool = True) -> Taxonomy:
    try:
        jsonschema.validate(doc, TAXONOMY_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"taxonomy: {exc.message} at {list(exc.absolute_path)}") from None

    mappings = []
    for m in doc["mappings"]:
        compiled = None
        if m["kind"] == "regex":
            try:
                compiled = re.compile(m["pattern"])
            except re.error as exc:
                raise SchemaError(f"bad regex for {m['tool']}: {m['pattern']!r}: {exc}") from None
        mappings.append(MappingEntry(m["tool"], m["kind"], m["pattern"], m["target"], compiled))

    tax = Taxonomy(
        version=doc["version"],
        categories={c["code"]: c["name"] for c in doc["categories"]},
        types=tuple(
            UnifiedType(t["id"], t["name"], t["category"], frozenset(t["tools"])) for t in doc["types"]
        ),
        mappings=tuple(mappings),
        unique_types=tuple(UniqueTypes(u["tool"], u["count"], tuple(u["names"])) for u in doc["unique"]),
    )
    _check_invariants(tax, strict_counts)
    return tax


def load_taxonomy(path: str | Path | None = None, strict_counts: bool = True) -> Taxonomy:
    """Load and validate a taxonomy file; ``None`` loads the shipped one.

    ``strict_counts=False`` skips the 67-type / 5-category check so reduced
    taxonomies can be used in tests and experiments.
    """
    if path is None:
        text = resources.files("sastmeta").joinpath("data/taxonomy.json").read_text(encoding="utf-8")
        where = "<shipped taxonomy>"
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise SchemaError(f"{path}: {exc.strerror}") from None
        where = str(path)
    if not text.strip():
        raise SchemaError(f"{where}: empty file")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{where}: {exc}") from None
    return parse_taxonomy(doc, strict_counts=strict_counts)


def map_raw_finding(tax: Taxonomy, tool_id: str, raw: str) -> str:
    """Resolve a tool's raw identifier to a unified id, OUT_OF_SCOPE or UNMAPPED.

    Exact entries win over regex entries; within a kind the longest pattern
    wins, ties broken by pattern text so the result never depends on file order.
    """
    entries = tax.entries_for(tool_id)
    for kind in ("exact", "regex"):
        hits = [m for m in entries if m.match_kind == kind and m.matches(raw)]
        if hits:
            best = min(hits, key=lambda m: (-len(m.raw_pattern), m.raw_pattern))
            return best.target
    return UNMAPPED


@dataclass(frozen=True)
class CoverageRow:
    tool: str
    overlapped_count: int
    overlapped_pct: int
    unique_count: int
    out_of_scope_count: int

    @property
    def overlapped_ratio(self) -> float:
        return self.overlapped_count / EXPECTED_TYPE_COUNT


def _percent_half_up(num: int, den: int) -> int:
    if den == 0:
        return 0
    return int((Decimal(100 * num) / Decimal(den)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def coverage_report(tax: Taxonomy, tools: Iterable[str] | None = None) -> dict[str, CoverageRow]:
    """Per-tool overlapped / unique / out-of-scope counts.

    The percentage is taken against the fixed taxonomy size (67), matching how
    coverage is quoted for the shipped data.
    """
    tool_list = list(tools) if tools is not None else tax.tools
    unique = {u.tool: u.count for u in tax.unique_types}
    report = {}
    for tool in tool_list:
        overlapped = sum(1 for t in tax.types if tool in t.supporting_tools)
        oos = sum(1 for m in tax.mappings if m.tool_id == tool and m.target == OUT_OF_SCOPE)
        report[tool] = CoverageRow(
            tool=tool,
            overlapped_count=overlapped,
            overlapped_pct=_percent_half_up(overlapped, EXPECTED_TYPE_COUNT),
            unique_count=unique.get(tool, 0),
            out_of_scope_count=oos,
        )
    return report


class SupportGroups(NamedTuple):
    overlapped: frozenset[str]
    unique: frozenset[str]
    unsupported: frozenset[str]


def support_count(tax: Taxonomy, type_id: str) -> int:
    if type_id in tax:
        return len(tax.get(type_id).supporting_tools)
    return 1 if type_id in tax.unique_ids() else 0


def support_groups(tax: Taxonomy, type_set: Iterable[str]) -> SupportGroups:
    """Partition type ids by how many tools support them (>=2, 1, 0).

    Ids the taxonomy does not know (benchmark-only types) land in ``unsupported``.
    """
    groups: dict[str, set[str]] = {"overlapped": set(), "unique": set(), "unsupported": set()}
    for type_id in type_set:
        n = support_count(tax, type_id)
        key = "overlapped" if n >= 2 else "unique" if n == 1 else "unsupported"
        groups[key].add(type_id)
    return SupportGroups(*(frozenset(groups[k]) for k in ("overlapped", "unique", "unsupported")))
