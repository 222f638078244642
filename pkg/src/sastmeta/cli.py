"""Command-line entry point: scan, evaluate, coverage, sample and report.

Exit codes: 0 success, 1 when an adapter command could not be started during
a scan, 2 for configuration or schema errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from sastmeta import __version__
from sastmeta.bench import Benchmark, cap_sample, dump_ground_truth, load_ground_truth, undersample
from sastmeta.errors import SastMetaError
from sastmeta.metrics import METRIC_COLUMNS, evaluate_tool, per_type_b_recall
from sastmeta.normalizer import dedupe, read_findings, write_findings
from sastmeta.refdetector.bundle import is_bundle
from sastmeta.report import FORMATS, render, write_table
from sastmeta.runner import (
    SPAWN_ERROR,
    dump_matrix,
    load_adapters,
    load_matrix,
    run_matrix,
    time_stats,
)
from sastmeta.taxonomy import coverage_report, load_taxonomy, support_groups

EXIT_OK, EXIT_SPAWN, EXIT_CONFIG = 0, 1, 2
DEFAULT_SEED = 42

COVERAGE_COLUMNS = ("tool", "overlapped", "overlapped_pct", "unique", "out_of_scope")
PER_TYPE_COLUMNS = ("tool", "benchmark", "type", "instances", "b_recall")
GROUP_COLUMNS = ("benchmark", "group", "count", "types")
MATRIX_COLUMNS = ("apk", "tool", "status", "duration_seconds", "findings", "detail")


class ConfigError(SastMetaError):
    """A path given on the command line is missing or unusable."""


def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _taxonomy(args):
    return load_taxonomy(_existing(args.taxonomy, "taxonomy"))


def _emit(text: str) -> None:
    sys.stdout.write(text)


def _expand_apks(paths: list[str]) -> list[Path]:
    """Bundle dirs and app files as given; a plain directory contributes its entries."""
    out = []
    for raw in paths:
        p = _existing(raw, "app bundle")
        if p.is_dir() and not is_bundle(p):
            out.extend(sorted(c for c in p.iterdir() if not c.name.startswith(".")))
        else:
            out.append(p)
    names = [p.name for p in out]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigError(f"app ids must be unique, repeated: {dupes}")
    return out


# --- scan -----------------------------------------------------------------------

def cmd_scan(args) -> int:
    tax = _taxonomy(args)
    cfgs = load_adapters(_existing(args.adapters, "adapter config"))
    if args.timeout is not None:
        if args.timeout <= 0:
            raise ConfigError("--timeout must be positive")
        cfgs = [replace(c, timeout_seconds=args.timeout) for c in cfgs]
    if args.tools:
        wanted = set(args.tools.split(","))
        unknown = wanted - {c.tool_id for c in cfgs}
        if unknown:
            raise ConfigError(f"no adapter for tools {sorted(unknown)}")
        cfgs = [c for c in cfgs if c.tool_id in wanted]
    apks = _expand_apks(args.apks)
    if args.jobs < 1 or args.repeats < 1:
        raise ConfigError("--jobs and --repeats must be >= 1")

    matrix = run_matrix(cfgs, apks, tax, repeats=args.repeats, jobs=args.jobs)
    out = Path(args.out)
    for o in matrix.outcomes:
        d = out / "findings" / o.tool_id
        d.mkdir(parents=True, exist_ok=True)
        write_findings(d / f"{o.apk_id}.jsonl", o.findings)
    (out / "matrix.json").write_text(dump_matrix(matrix), encoding="utf-8")

    rows = [
        {"apk": o.apk_id, "tool": o.tool_id, "status": o.status, "duration_seconds": o.duration_seconds,
         "findings": len(o.findings), "detail": o.detail}
        for o in matrix.outcomes
    ]
    _emit(render(rows, MATRIX_COLUMNS, args.format))
    return EXIT_SPAWN if any(o.status == SPAWN_ERROR for o in matrix.outcomes) else EXIT_OK


# --- evaluate -------------------------------------------------------------------

def _load_findings_dir(path: Path, tax) -> list:
    if not path.is_dir():
        raise ConfigError(f"findings directory not found: {path}")
    findings = []
    for f in sorted(path.rglob("*.jsonl")):
        findings.extend(read_findings(f, tax))
    return dedupe(findings, "per_type")


def _coverage_rows(tax) -> list[dict]:
    return [
        {"tool": r.tool, "overlapped": r.overlapped_count, "overlapped_pct": r.overlapped_pct,
         "unique": r.unique_count, "out_of_scope": r.out_of_scope_count}
        for r in coverage_report(tax).values()
    ]


def _group_rows(tax, truth: Benchmark) -> list[dict]:
    groups = support_groups(tax, truth.type_ids())
    return [
        {"benchmark": truth.benchmark_id, "group": name, "count": len(ids), "types": " ".join(sorted(ids))}
        for name, ids in groups._asdict().items()
    ]


def cmd_evaluate(args) -> int:
    tax = _taxonomy(args)
    if not args.truth:
        raise ConfigError("evaluate needs at least one --truth file")
    truths = [load_ground_truth(_existing(p, "ground truth"), tax) for p in args.truth]
    findings = _load_findings_dir(Path(args.findings), tax)
    by_tool: dict[str, list] = {}
    for f in findings:
        by_tool.setdefault(f.tool_id, []).append(f)
    tools = list(tax.tools) + sorted(set(by_tool) - set(tax.tools))

    metrics, per_type, groups = [], [], []
    for truth in truths:
        groups.extend(_group_rows(tax, truth))
        for tool in tools:
            mine = by_tool.get(tool, [])
            metrics.append(evaluate_tool(tax, tool, mine, truth))
            supported = tax.supported_types(tool)
            per_type.extend(
                {"tool": tool, "benchmark": truth.benchmark_id, "type": r.type_id,
                 "instances": r.instance_count, "b_recall": r.b_recall}
                for r in per_type_b_recall(mine, truth)
                if r.type_id in supported
            )

    out = Path(args.out)
    formats = ("csv", "json", args.format)
    write_table(out, "metrics", metrics, METRIC_COLUMNS, formats)
    write_table(out, "per_type", per_type, PER_TYPE_COLUMNS, formats)
    write_table(out, "coverage", _coverage_rows(tax), COVERAGE_COLUMNS, formats)
    write_table(out, "groups", groups, GROUP_COLUMNS, formats)
    _emit(render(metrics, METRIC_COLUMNS, args.format))
    return EXIT_OK


# --- coverage / sample / report ---------------------------------------------------

def cmd_coverage(args) -> int:
    tax = _taxonomy(args)
    rows = _coverage_rows(tax)
    if args.out:
        write_table(Path(args.out), "coverage", rows, COVERAGE_COLUMNS, ("csv", "json", args.format))
    _emit(render(rows, COVERAGE_COLUMNS, args.format))
    return EXIT_OK


def cmd_sample(args) -> int:
    tax = _taxonomy(args)
    truth = load_ground_truth(_existing(args.truth, "ground truth"), tax)
    if args.types:
        if args.per_type is None:
            raise ConfigError("--types needs --per-type")
        sampled = cap_sample(truth, args.types.split(","), args.per_type, args.seed)
    else:
        if args.cap < 1:
            raise ConfigError("--cap must be >= 1")
        sampled = undersample(truth, args.cap, args.seed)
    text = dump_ground_truth(sampled)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        counts = sampled.count_by_type()
        print(f"{len(sampled.instances)} instances, {len(counts)} types, {len(sampled.apks)} apks -> {out}",
              file=sys.stderr)
    else:
        _emit(text)
    return EXIT_OK


def _parse_buckets(spec: str | None) -> list[tuple[float, float]]:
    if not spec:
        return []
    buckets = []
    for part in spec.split(","):
        try:
            lo, hi = part.split(":")
            buckets.append((float(lo), float(hi) if hi not in ("", "inf") else float("inf")))
        except ValueError:
            raise ConfigError(f"bad size bucket {part!r}, expected LO:HI") from None
    return buckets


def cmd_report(args) -> int:
    if not args.matrix and not args.metrics:
        raise ConfigError("report needs --matrix or --metrics")
    if args.metrics:
        path = _existing(args.metrics, "metrics file")
        try:
            rows = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        _emit(render(rows, METRIC_COLUMNS, args.format))
    if args.matrix:
        matrix = load_matrix(_existing(args.matrix, "scan matrix"))
        buckets = _parse_buckets(args.buckets)
        try:
            stats = time_stats(matrix, buckets)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        labels = list(next(iter(stats.values())).bucket_means) if stats else []
        columns = ("tool", "mean_seconds", "failed", "ok", *labels)
        rows = [
            {"tool": s.tool_id, "mean_seconds": s.mean_seconds, "failed": s.failed_count, "ok": s.ok_count,
             **s.bucket_means}
            for s in stats.values()
        ]
        if args.out:
            write_table(Path(args.out), "time_stats", rows, columns, ("csv", "json", args.format))
        _emit(render(rows, columns, args.format))
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--taxonomy", help="taxonomy JSON (default: the shipped one)")
    common.add_argument("--format", choices=FORMATS, default="csv", help="table format on stdout")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for all sampling (default 42)")

    parser = argparse.ArgumentParser(prog="sastmeta", description="Meta-evaluation of Android SAST tools.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", parents=[common], help="run tool adapters over app bundles")
    p.add_argument("apks", nargs="+", help="app bundles, or directories holding them")
    p.add_argument("--adapters", help="adapter config JSON (default: built-in reference detector)")
    p.add_argument("--tools", help="comma-separated subset of adapter tool ids")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--timeout", type=int, help="override every adapter's timeout, in seconds")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("evaluate", parents=[common], help="metrics against ground truth")
    p.add_argument("findings", help="directory of .jsonl findings files (searched recursively)")
    p.add_argument("--truth", action="append", default=[], help="ground-truth JSON; repeatable")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("coverage", parents=[common], help="per-tool coverage of the taxonomy")
    p.add_argument("--out", help="also write coverage tables into this directory")
    p.set_defaults(func=cmd_coverage)

    def add_sample(sp):
        sp.add_argument("--truth", required=True, help="ground-truth JSON to sample from")
        sp.add_argument("--cap", type=int, default=3, help="max vulnerable instances per type (default 3)")
        sp.add_argument("--types", help="comma-separated types to cap instead of all (with --per-type)")
        sp.add_argument("--per-type", type=int)
        sp.add_argument("--out", help="write the sampled ground truth here instead of stdout")
        sp.set_defaults(func=cmd_sample)

    add_sample(sub.add_parser("sample", parents=[common], help="seeded benchmark sampling"))
    bench = sub.add_parser("bench", help="benchmark utilities")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    add_sample(bench_sub.add_parser("sample", parents=[common], help="same as the top-level sample"))

    p = sub.add_parser("report", parents=[common], help="render time statistics or metrics tables")
    p.add_argument("--matrix", help="matrix.json written by scan")
    p.add_argument("--metrics", help="metrics.json written by evaluate")
    p.add_argument("--buckets", help="APK size buckets in MB, e.g. 0:1,1:10,10:inf")
    p.add_argument("--out", help="also write time_stats tables into this directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SastMetaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
