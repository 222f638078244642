"""Confusion counts, effectiveness ratios and benchmark recall.

Matching is at (apk, unified type) granularity.  Ratios whose denominator is
zero are ``None`` (reported as Undefined) rather than 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from sastmeta.errors import EmptyBenchmark

if TYPE_CHECKING:
    from sastmeta.bench import Benchmark
    from sastmeta.normalizer import NormalizedFinding
    from sastmeta.taxonomy import Taxonomy

Pair = tuple[str, str]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int | None  # None when the benchmark has no secure variants / safe labels
    tool_id: str = ""
    benchmark_id: str = ""
    type_filter: frozenset[str] | None = None


@dataclass(frozen=True)
class EffectivenessRow:
    precision: float | None
    recall: float | None
    fpr: float | None
    f1: float | None
    b_recall: float | None = None
    support: dict = field(default_factory=dict)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def f1_score(precision: float | None, recall: float | None) -> float | None:
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


def found_pairs(findings: Iterable["NormalizedFinding"], types: frozenset[str] | set[str] | None = None) -> set[Pair]:
    """(apk, type) pairs flagged by countable findings, optionally restricted to ``types``."""
    return {
        (f.apk_id, f.unified_type)
        for f in findings
        if f.countable and (types is None or f.unified_type in types)
    }


def confusion(
    findings: Iterable["NormalizedFinding"],
    truth: "Benchmark",
    supported: Iterable[str],
    type_filter: Iterable[str] | None = None,
    tool_id: str = "",
) -> ConfusionCounts:
    """Count TP/FP/FN/TN over the (apk, type) pairs of types the tool supports.

    Findings for unsupported, unmapped or out-of-scope types never count, and
    findings on pairs the benchmark says nothing about are ignored.
    """
    universe = set(supported)
    tf = frozenset(type_filter) if type_filter is not None else None
    if tf is not None:
        universe &= tf
    vulnerable = {p for p in truth.vulnerable_pairs() if p[1] in universe}
    secure = {p for p in truth.secure_pairs() if p[1] in universe} - vulnerable
    found = found_pairs(findings, universe)
    return ConfusionCounts(
        tp=len(vulnerable & found),
        fp=len(secure & found),
        fn=len(vulnerable - found),
        tn=len(secure - found) if truth.has_negatives else None,
        tool_id=tool_id,
        benchmark_id=truth.benchmark_id,
        type_filter=tf,
    )


def effectiveness(c: ConfusionCounts, b_recall: float | None = None) -> EffectivenessRow:
    # Without negatives in the benchmark an FP count of 0 means "unknown", not "none".
    precision = _ratio(c.tp, c.tp + c.fp) if c.tn is not None else None
    recall = _ratio(c.tp, c.tp + c.fn)
    fpr = _ratio(c.fp, c.fp + c.tn) if c.tn is not None else None
    return EffectivenessRow(
        precision=precision,
        recall=recall,
        fpr=fpr,
        f1=f1_score(precision, recall),
        b_recall=b_recall,
        support={"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn},
    )


def b_recall(
    findings: Iterable["NormalizedFinding"],
    truth: "Benchmark",
    supported: Iterable[str] | None = None,
) -> float:
    """Correctly identified known vulnerabilities over all known vulnerabilities.

    Secure variants never enter the denominator.  ``supported`` restricts both
    sides to the given types.
    """
    types = set(supported) if supported is not None else None
    known = {p for p in truth.vulnerable_pairs() if types is None or p[1] in types}
    if not known:
        raise EmptyBenchmark(truth.benchmark_id or "benchmark")
    return len(known & found_pairs(findings, types)) / len(known)


@dataclass(frozen=True)
class TypeRecall:
    type_id: str
    instance_count: int
    b_recall: float


def per_type_b_recall(
    findings: Iterable["NormalizedFinding"], truth: "Benchmark", min_instances: int = 5
) -> list[TypeRecall]:
    """B_Recall per type, only for types with at least ``min_instances`` vulnerable pairs."""
    found = found_pairs(findings)
    by_type: dict[str, set[Pair]] = {}
    for p in truth.vulnerable_pairs():
        by_type.setdefault(p[1], set()).add(p)
    rows = []
    for type_id in sorted(by_type):
        pairs = by_type[type_id]
        if len(pairs) >= min_instances:
            rows.append(TypeRecall(type_id, len(pairs), len(pairs & found) / len(pairs)))
    return rows


METRIC_COLUMNS = (
    "tool", "benchmark", "tp", "fp", "fn", "tn",
    "precision", "recall", "fpr", "f1", "b_recall", "supported_types",
)


def evaluate_tool(
    tax: "Taxonomy", tool_id: str, findings: list["NormalizedFinding"], truth: "Benchmark"
) -> dict:
    """One metrics-table row for a tool on a benchmark.

    ``recall`` comes from the confusion counts over the types the tool
    supports; ``b_recall`` is the benchmark recall over every known vulnerability in the
    benchmark.  ``supported_types`` (how many of the benchmark's types the tool
    supports) is reported in place of any cross-tool ranking.
    """
    supported = tax.supported_types(tool_id)
    c = confusion(findings, truth, supported, tool_id=tool_id)
    in_bench = supported & truth.type_ids()
    try:
        br = b_recall(findings, truth)
    except EmptyBenchmark:
        br = None
    row = effectiveness(c, br)
    return {
        "tool": tool_id,
        "benchmark": truth.benchmark_id,
        "tp": c.tp,
        "fp": c.fp,
        "fn": c.fn,
        "tn": c.tn,
        "precision": row.precision,
        "recall": row.recall,
        "fpr": row.fpr,
        "f1": row.f1,
        "b_recall": row.b_recall,
        "supported_types": len(in_bench),
    }
