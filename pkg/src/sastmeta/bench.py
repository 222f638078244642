"""Ground-truth benchmarks, seeded sampling and the incremental-variance probe."""

from __future__ import annotations

import json
import random
import statistics
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import jsonschema

from sastmeta.errors import InsufficientStates, InvariantError, SchemaError, TypeAbsent
from sastmeta.metrics import b_recall

VULNERABLE = "vulnerable"
SECURE = "secure"
VARIANCE_THRESHOLD = 1e-3

GROUND_TRUTH_SCHEMA = {
    "type": "object",
    "required": ["benchmark_id", "instances"],
    "properties": {
        "benchmark_id": {"type": "string", "minLength": 1},
        "secure_versions": {"type": "boolean"},
        "apks": {"type": "array", "items": {"type": "string"}},
        "extra_types": {"type": "array", "items": {"type": "string"}},
        "instances": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["apk", "type", "variant"],
                "properties": {
                    "apk": {"type": "string", "minLength": 1},
                    "type": {"type": "string", "minLength": 1},
                    "variant": {"enum": [VULNERABLE, SECURE]},
                    "source_ref": {"type": ["string", "null"]},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class GroundTruthInstance:
    apk_id: str
    unified_type: str
    variant: str
    benchmark_id: str
    source_ref: str | None = None

    @property
    def pair(self) -> tuple[str, str]:
        return (self.apk_id, self.unified_type)


@dataclass(frozen=True)
class Benchmark:
    benchmark_id: str
    instances: tuple[GroundTruthInstance, ...]
    apks: frozenset[str]
    secure_versions: bool = False
    extra_types: frozenset[str] = field(default_factory=frozenset)

    def vulnerable_pairs(self) -> set[tuple[str, str]]:
        return {i.pair for i in self.instances if i.variant == VULNERABLE}

    def secure_pairs(self) -> set[tuple[str, str]]:
        return {i.pair for i in self.instances if i.variant == SECURE}

    @property
    def has_negatives(self) -> bool:
        return any(i.variant == SECURE for i in self.instances)

    def type_ids(self) -> frozenset[str]:
        return frozenset(i.unified_type for i in self.instances)

    def count_by_type(self, variant: str = VULNERABLE) -> dict[str, int]:
        counts: dict[str, int] = {}
        for i in self.instances:
            if i.variant == variant:
                counts[i.unified_type] = counts.get(i.unified_type, 0) + 1
        return counts

    def with_instances(self, instances: Iterable[GroundTruthInstance]) -> "Benchmark":
        kept = tuple(instances)
        return replace(self, instances=kept, apks=frozenset(i.apk_id for i in kept))


def parse_ground_truth(doc: object, tax=None) -> Benchmark:
    try:
        jsonschema.validate(doc, GROUND_TRUTH_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"ground truth: {exc.message} at {list(exc.absolute_path)}") from None
    bid = doc["benchmark_id"]
    secure_ok = doc.get("secure_versions", False)
    extra = frozenset(doc.get("extra_types", ()))
    instances, seen = [], set()
    for rec in doc["instances"]:
        inst = GroundTruthInstance(rec["apk"], rec["type"], rec["variant"], bid, rec.get("source_ref"))
        key = (inst.apk_id, inst.unified_type, inst.variant)
        if key in seen:
            raise InvariantError(f"duplicate instance {key}")
        seen.add(key)
        if inst.variant == SECURE and not secure_ok:
            raise InvariantError(f"{bid} declares no secure versions but lists secure instance {key}")
        if tax is not None and inst.unified_type not in extra and not tax.is_known_type(inst.unified_type):
            raise InvariantError(f"unknown vulnerability type {inst.unified_type!r}")
        instances.append(inst)
    apks = frozenset(doc["apks"]) if "apks" in doc else frozenset(i.apk_id for i in instances)
    orphans = {i.apk_id for i in instances} - apks
    if orphans:
        raise InvariantError(f"instances reference undeclared apks: {sorted(orphans)[:5]}")
    return Benchmark(bid, tuple(instances), apks, secure_ok, extra)


def load_ground_truth(path: str | Path, tax=None) -> Benchmark:
    """Load a ground-truth file; with ``tax``, every type must be known to it
    (or listed under ``extra_types`` as benchmark-only)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return parse_ground_truth(doc, tax)


def shipped_benchmark(name: str = "cve_based", tax=None) -> Benchmark:
    text = resources.files("sastmeta").joinpath(f"data/benchmarks/{name}.json").read_text(encoding="utf-8")
    return parse_ground_truth(json.loads(text), tax)


def benchmark_to_doc(b: Benchmark) -> dict:
    doc = {"benchmark_id": b.benchmark_id}
    if b.secure_versions:
        doc["secure_versions"] = True
    if b.extra_types:
        doc["extra_types"] = sorted(b.extra_types)
    doc["apks"] = sorted(b.apks)
    doc["instances"] = [
        {"apk": i.apk_id, "type": i.unified_type, "variant": i.variant, "source_ref": i.source_ref}
        for i in b.instances
    ]
    return doc


def dump_ground_truth(b: Benchmark) -> str:
    return json.dumps(benchmark_to_doc(b), indent=1, ensure_ascii=False) + "\n"


def _seeded_order(instances: list[GroundTruthInstance], seed: int, type_id: str) -> list[GroundTruthInstance]:
    """Seeded permutation of one type's instances.

    Each type draws from its own stream so per-type picks do not depend on
    which other types exist, and growing ``k`` only ever appends to the pick.
    """
    ordered = sorted(instances, key=lambda i: (i.apk_id, i.source_ref or ""))
    random.Random(f"{seed}:{type_id}").shuffle(ordered)
    return ordered


def _cap(b: Benchmark, types: Iterable[str], k: int, seed: int) -> Benchmark:
    if k < 1:
        raise ValueError("cap must be >= 1")
    keep: set[int] = set()
    by_type: dict[str, list[GroundTruthInstance]] = {}
    for inst in b.instances:
        if inst.variant == VULNERABLE:
            by_type.setdefault(inst.unified_type, []).append(inst)
    for t in types:
        keep.update(id(i) for i in _seeded_order(by_type.get(t, []), seed, t)[:k])
    capped = set(types)
    return b.with_instances(
        i for i in b.instances
        if i.variant != VULNERABLE or i.unified_type not in capped or id(i) in keep
    )


def undersample(b: Benchmark, cap: int, seed: int) -> Benchmark:
    """Keep at most ``cap`` vulnerable instances of every type; secure ones untouched."""
    return _cap(b, b.count_by_type().keys(), cap, seed)


def cap_sample(b: Benchmark, types: Sequence[str], per_type: int, seed: int) -> Benchmark:
    """Keep ``per_type`` seeded-random vulnerable instances of each listed type only."""
    present = b.count_by_type()
    for t in types:
        if t not in present:
            raise TypeAbsent(t)
    return _cap(b, types, per_type, seed)


@dataclass(frozen=True)
class ProbeResult:
    tool: str
    series: tuple[float, ...]
    variance: float
    passes: bool


def probe_series(
    series_by_tool: Mapping[str, Sequence[float]], threshold: float = VARIANCE_THRESHOLD
) -> dict[str, ProbeResult]:
    """Sample variance (n-1 denominator) of each tool's B_Recall series."""
    out = {}
    for tool, series in series_by_tool.items():
        if len(series) < 2:
            raise InsufficientStates(f"{tool}: need at least 2 states, got {len(series)}")
        var = statistics.variance(series)
        out[tool] = ProbeResult(tool, tuple(series), var, var < threshold)
    return out


def variance_probe(
    b: Benchmark,
    findings_per_state: Sequence[Mapping[str, list]],
    types: Sequence[str],
    sizes: Sequence[int] = (30, 40, 50, 60),
    seed: int = 42,
    threshold: float = VARIANCE_THRESHOLD,
) -> dict[str, ProbeResult]:
    """Recompute each tool's B_Recall as the listed types grow through ``sizes``.

    ``findings_per_state[k]`` maps tool id to that tool's findings when state k
    (the benchmark capped at ``sizes[k]`` per listed type) was scanned.
    """
    if len(findings_per_state) < 2:
        raise InsufficientStates(f"need at least 2 states, got {len(findings_per_state)}")
    if len(sizes) < len(findings_per_state):
        raise ValueError("one size per state is required")
    series: dict[str, list[float]] = {}
    for size, per_tool in zip(sizes, findings_per_state):
        state = cap_sample(b, types, size, seed)
        for tool, findings in per_tool.items():
            series.setdefault(tool, []).append(b_recall(findings, state))
    return probe_series(series, threshold)
