"""Whole-app scan producing the detector's TSV report."""

from __future__ import annotations

from sastmeta.normalizer import RawFinding
from sastmeta.refdetector.bundle import AppBundle
from sastmeta.refdetector.manifest import parse_manifest
from sastmeta.refdetector.rules import Rule, eval_manifest_rules, eval_source_rules

REPORT_HEADER = "# refdetector report"


def scan_findings(bundle: AppBundle, rulepack: list[Rule]) -> list[RawFinding]:
    """Manifest, source and taint findings, sorted by (file, line, rule) without repeats.

    Raises XmlError when the manifest does not parse.
    """
    doc = parse_manifest(bundle.manifest)
    found = eval_manifest_rules(doc, bundle, rulepack) + eval_source_rules(bundle, rulepack)
    unique = {}
    for f in found:
        unique.setdefault((f.location.file, f.location.line, f.raw_identifier), f)
    return [unique[k] for k in sorted(unique)]


def _clean(text: str) -> str:
    return " ".join(text.split())


def format_report(apk_id: str, findings: list[RawFinding]) -> str:
    lines = [REPORT_HEADER, f"# apk: {apk_id}"]
    for f in findings:
        lines.append(f"{f.raw_identifier}\t{f.location.file}\t{f.location.line}\t{_clean(f.message)}")
    return "\n".join(lines) + "\n"


def scan_app(bundle: AppBundle, rulepack: list[Rule]) -> str:
    return format_report(bundle.apk_id, scan_findings(bundle, rulepack))
