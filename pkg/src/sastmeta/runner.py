"""Run tool adapters over app bundles with timeouts, timing and failure classes."""

from __future__ import annotations

import json
import os
import re
import shlex
import signal
import statistics
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from sastmeta.errors import MalformedReport, SastMetaError, SchemaError, SpawnError, UnknownParser
from sastmeta.normalizer import (
    NormalizedFinding,
    PARSERS,
    finding_from_record,
    finding_to_record,
    normalize,
    parse_report,
)
from sastmeta.refdetector.bundle import bundle_size_mb
from sastmeta.taxonomy import Taxonomy

OK = "Ok"
TIMEOUT = "Timeout"
DECOMPILE_FAILURE = "DecompileFailure"
ANALYSIS_FAILURE = "AnalysisFailure"
TOOL_LOGIC_ERROR = "ToolLogicError"
# Not a tool failure: the adapter command itself could not be started.
SPAWN_ERROR = "SpawnError"
STATUSES = (OK, TIMEOUT, DECOMPILE_FAILURE, ANALYSIS_FAILURE, TOOL_LOGIC_ERROR, SPAWN_ERROR)
SIGNATURE_CLASSES = (DECOMPILE_FAILURE, ANALYSIS_FAILURE, TOOL_LOGIC_ERROR)

DEFAULT_TIMEOUT = 900
GRACE_SECONDS = 5.0
PLACEHOLDERS = ("{apk_path}", "{out_path}")

ADAPTERS_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["tool_id", "invocation", "parser_id"],
        "properties": {
            "tool_id": {"type": "string", "minLength": 1},
            "invocation": {
                "anyOf": [
                    {"type": "string", "minLength": 1},
                    {"type": "array", "items": {"type": "string"}, "minItems": 1},
                ]
            },
            "parser_id": {"type": "string"},
            "timeout_seconds": {"type": "integer", "exclusiveMinimum": 0},
            "failure_signatures": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["pattern", "class"],
                    "properties": {"pattern": {"type": "string"}, "class": {"enum": list(SIGNATURE_CLASSES)}},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class FailureSignature:
    pattern: str
    failure_class: str
    _regex: re.Pattern = field(compare=False, repr=False, default=None)

    def __post_init__(self):
        if self.failure_class not in SIGNATURE_CLASSES:
            raise SchemaError(f"failure signature class {self.failure_class!r} is not one of {SIGNATURE_CLASSES}")
        try:
            object.__setattr__(self, "_regex", re.compile(self.pattern))
        except re.error as exc:
            raise SchemaError(f"failure signature {self.pattern!r}: {exc}") from None

    def matches(self, output: str) -> bool:
        return self._regex.search(output) is not None


@dataclass(frozen=True)
class AdapterConfig:
    """How to invoke one tool.

    ``invocation`` is an argv template; ``{apk_path}`` and ``{out_path}`` are
    required, ``{python}`` expands to the running interpreter.
    """

    tool_id: str
    invocation: tuple[str, ...]
    parser_id: str
    timeout_seconds: float = DEFAULT_TIMEOUT
    failure_signatures: tuple[FailureSignature, ...] = ()

    def __post_init__(self):
        if isinstance(self.invocation, str):
            object.__setattr__(self, "invocation", tuple(shlex.split(self.invocation)))
        else:
            object.__setattr__(self, "invocation", tuple(self.invocation))
        if not self.timeout_seconds > 0:
            raise SchemaError(f"{self.tool_id}: timeout_seconds must be > 0")
        joined = " ".join(self.invocation)
        for ph in PLACEHOLDERS:
            if ph not in joined:
                raise SchemaError(f"{self.tool_id}: invocation lacks the {ph} placeholder")
        if self.parser_id not in PARSERS:
            raise UnknownParser(self.parser_id)

    def argv(self, apk_path: str | Path, out_path: str | Path) -> list[str]:
        values = {"apk_path": str(apk_path), "out_path": str(out_path), "python": sys.executable}
        return [re.sub(r"\{(apk_path|out_path|python)\}", lambda m: values[m.group(1)], tok) for tok in self.invocation]


def adapter_from_dict(rec: dict) -> AdapterConfig:
    sigs = tuple(FailureSignature(s["pattern"], s["class"]) for s in rec.get("failure_signatures", ()))
    return AdapterConfig(
        rec["tool_id"], rec["invocation"], rec["parser_id"], rec.get("timeout_seconds", DEFAULT_TIMEOUT), sigs
    )


def parse_adapters(doc: object, source: str = "adapters") -> list[AdapterConfig]:
    import jsonschema

    try:
        jsonschema.validate(doc, ADAPTERS_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{source}: {exc.message} at {list(exc.absolute_path)}") from None
    cfgs = [adapter_from_dict(rec) for rec in doc]
    ids = [c.tool_id for c in cfgs]
    dupes = sorted({t for t in ids if ids.count(t) > 1})
    if dupes:
        raise SchemaError(f"{source}: duplicate tool ids {dupes}")
    return cfgs


def load_adapters(path: str | Path | None = None) -> list[AdapterConfig]:
    """Load an adapter config file; ``None`` loads the built-in reference detector adapter."""
    if path is None:
        text = resources.files("sastmeta").joinpath("data/adapters.json").read_text(encoding="utf-8")
        source = "built-in adapters"
    else:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise SchemaError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{source}: {exc}") from None
    return parse_adapters(doc, source)


@dataclass(frozen=True)
class ScanOutcome:
    tool_id: str
    apk_id: str
    status: str
    duration_seconds: float
    findings: tuple[NormalizedFinding, ...] = ()
    apk_size_mb: float = 0.0
    parse_seconds: float = 0.0
    detail: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status != OK and self.findings:
            raise ValueError("only Ok outcomes carry findings")
        if self.duration_seconds < 0 or self.apk_size_mb < 0:
            raise ValueError("durations and sizes are non-negative")
        object.__setattr__(self, "findings", tuple(self.findings))

    @property
    def ok(self) -> bool:
        return self.status == OK

    @property
    def key(self) -> tuple[str, str]:
        return (self.apk_id, self.tool_id)


@dataclass(frozen=True)
class ScanMatrix:
    outcomes: tuple[ScanOutcome, ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.outcomes, key=lambda o: o.key))
        keys = [o.key for o in ordered]
        if len(set(keys)) != len(keys):
            raise ValueError("at most one outcome per (tool, apk)")
        object.__setattr__(self, "outcomes", ordered)

    def tools(self) -> list[str]:
        return sorted({o.tool_id for o in self.outcomes})

    def for_tool(self, tool_id: str) -> list[ScanOutcome]:
        return [o for o in self.outcomes if o.tool_id == tool_id]

    def findings(self, tool_id: str | None = None) -> list[NormalizedFinding]:
        return [f for o in self.outcomes if tool_id in (None, o.tool_id) for f in o.findings]


def classify_failure(cfg: AdapterConfig, exit_code: int | None, output: str) -> str:
    """Failure class for a run that produced no valid report; first matching signature wins."""
    for sig in cfg.failure_signatures:
        if sig.matches(output):
            return sig.failure_class
    return ANALYSIS_FAILURE


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGTERM)
    except ProcessLookupError:
        return
    try:
        proc.wait(timeout=GRACE_SECONDS)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        proc.wait()


def _text(data: bytes | None) -> str:
    return (data or b"").decode("utf-8", errors="replace")


def run_scan(cfg: AdapterConfig, apk: str | Path, tax: Taxonomy) -> ScanOutcome:
    """Run one adapter on one bundle.

    ``duration_seconds`` is monotonic wall clock around the child process only;
    report parsing and normalization are timed separately in ``parse_seconds``.
    """
    apk = Path(apk)
    if not apk.exists():
        raise SpawnError(f"{cfg.tool_id}: app bundle {apk} does not exist")
    apk_id = apk.name
    size = bundle_size_mb(apk)
    with tempfile.TemporaryDirectory(prefix="sastmeta-") as tmp:
        out_path = Path(tmp) / f"{cfg.tool_id}.report"
        argv = cfg.argv(apk.resolve(), out_path)
        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                argv, stdout=subprocess.PIPE, stderr=subprocess.PIPE, stdin=subprocess.DEVNULL, start_new_session=True
            )
        except OSError as exc:
            raise SpawnError(f"{cfg.tool_id}: cannot start {argv[0]!r}: {exc.strerror or exc}") from None
        try:
            out, err = proc.communicate(timeout=cfg.timeout_seconds)
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            duration = time.monotonic() - start
            proc.communicate()
            return ScanOutcome(cfg.tool_id, apk_id, TIMEOUT, duration, (), size,
                               detail=f"killed after {cfg.timeout_seconds}s")
        duration = time.monotonic() - start
        output = _text(out) + _text(err)

        if proc.returncode == 0 and out_path.is_file():
            t0 = time.monotonic()
            try:
                findings = normalize(tax, apk_id, parse_report(cfg.parser_id, out_path.read_bytes()))
            except MalformedReport as exc:
                output += f"\n{exc}"
            else:
                return ScanOutcome(cfg.tool_id, apk_id, OK, duration, tuple(findings), size, time.monotonic() - t0)
        elif proc.returncode == 0:
            output += "\nno report written"
    status = classify_failure(cfg, proc.returncode, output)
    tail = output.strip().splitlines()[-1:] or [""]
    return ScanOutcome(cfg.tool_id, apk_id, status, duration, (), size, detail=f"exit {proc.returncode}: {tail[0][:200]}")


def aggregate_runs(runs: Sequence[ScanOutcome]) -> ScanOutcome:
    """Fold repeated runs of one cell into the reported outcome.

    The cell is Ok if any run was; otherwise it takes the first run's status.
    Duration is the mean over runs sharing the reported status, and findings
    come from the first Ok run.
    """
    if not runs:
        raise ValueError("no runs to aggregate")
    first_ok = next((r for r in runs if r.ok), None)
    chosen = first_ok or runs[0]
    same = [r for r in runs if r.status == chosen.status]
    return replace(
        chosen,
        duration_seconds=statistics.fmean(r.duration_seconds for r in same),
        parse_seconds=statistics.fmean(r.parse_seconds for r in same),
    )


def _run_cell(cfg: AdapterConfig, apk: Path, tax: Taxonomy, repeats: int) -> ScanOutcome:
    runs = []
    for _ in range(repeats):
        try:
            runs.append(run_scan(cfg, apk, tax))
        except SpawnError as exc:
            size = bundle_size_mb(apk) if apk.exists() else 0.0
            runs.append(ScanOutcome(cfg.tool_id, apk.name, SPAWN_ERROR, 0.0, (), size, detail=str(exc)))
    return aggregate_runs(runs)


def run_matrix(
    cfgs: Sequence[AdapterConfig],
    apks: Sequence[str | Path],
    tax: Taxonomy,
    repeats: int = 3,
    jobs: int = 1,
) -> ScanMatrix:
    """Every adapter on every bundle, ``repeats`` times each.

    Cells run on a pool of ``jobs`` workers.  A cell that cannot start is
    recorded with status SpawnError; the matrix itself never aborts.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    cells = [(cfg, Path(apk)) for apk in apks for cfg in cfgs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        outcomes = list(pool.map(lambda c: _run_cell(c[0], c[1], tax, repeats), cells))
    return ScanMatrix(tuple(outcomes))


# --- timing statistics ---------------------------------------------------------

@dataclass(frozen=True)
class ToolTimeStats:
    tool_id: str
    mean_seconds: float | None
    failed_count: int
    ok_count: int
    bucket_means: dict[str, float | None]


def bucket_label(lo: float, hi: float) -> str:
    return f"[{lo:g},{hi:g})"


def _check_buckets(buckets: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    ordered = sorted((float(lo), float(hi)) for lo, hi in buckets)
    for lo, hi in ordered:
        if not lo < hi:
            raise ValueError(f"empty size bucket [{lo}, {hi})")
    for (_, hi), (lo2, _) in zip(ordered, ordered[1:]):
        if lo2 < hi:
            raise ValueError("size buckets overlap")
    return ordered


def time_stats(
    matrix: ScanMatrix, size_buckets: Sequence[tuple[float, float]] = ()
) -> dict[str, ToolTimeStats]:
    """Per-tool mean scan time over Ok outcomes, failure count and per-size-bucket means.

    Buckets are half-open ``[lo, hi)`` MB intervals.
    """
    buckets = _check_buckets(size_buckets)
    for o in matrix.outcomes:
        if buckets and not any(lo <= o.apk_size_mb < hi for lo, hi in buckets):
            raise ValueError(f"{o.apk_id}: size {o.apk_size_mb} MB falls in no bucket")
    stats = {}
    for tool in matrix.tools():
        outcomes = matrix.for_tool(tool)
        ok = [o for o in outcomes if o.ok]
        per_bucket = {}
        for lo, hi in buckets:
            durations = [o.duration_seconds for o in ok if lo <= o.apk_size_mb < hi]
            per_bucket[bucket_label(lo, hi)] = statistics.fmean(durations) if durations else None
        stats[tool] = ToolTimeStats(
            tool,
            statistics.fmean(o.duration_seconds for o in ok) if ok else None,
            len(outcomes) - len(ok),
            len(ok),
            per_bucket,
        )
    return stats


# --- matrix files ---------------------------------------------------------------

def outcome_to_record(o: ScanOutcome, with_findings: bool = True) -> dict:
    rec = {
        "tool": o.tool_id,
        "apk": o.apk_id,
        "status": o.status,
        "duration_seconds": o.duration_seconds,
        "parse_seconds": o.parse_seconds,
        "apk_size_mb": o.apk_size_mb,
        "detail": o.detail,
    }
    if with_findings:
        rec["findings"] = [finding_to_record(f) for f in o.findings]
    return rec


def outcome_from_record(rec: dict) -> ScanOutcome:
    return ScanOutcome(
        rec["tool"],
        rec["apk"],
        rec["status"],
        float(rec["duration_seconds"]),
        tuple(finding_from_record(f) for f in rec.get("findings", ())),
        float(rec.get("apk_size_mb", 0.0)),
        float(rec.get("parse_seconds", 0.0)),
        rec.get("detail", ""),
    )


def dump_matrix(matrix: ScanMatrix, with_findings: bool = False) -> str:
    doc = {"outcomes": [outcome_to_record(o, with_findings) for o in matrix.outcomes]}
    return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"


def load_matrix(path: str | Path) -> ScanMatrix:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return ScanMatrix(tuple(outcome_from_record(r) for r in doc["outcomes"]))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError, SastMetaError) as exc:
        raise SchemaError(f"{path}: not a scan matrix ({exc})") from None


def outcomes_by_tool(outcomes: Iterable[ScanOutcome]) -> dict[str, list[ScanOutcome]]:
    by_tool: dict[str, list[ScanOutcome]] = {}
    for o in outcomes:
        by_tool.setdefault(o.tool_id, []).append(o)
    return by_tool
