"""Built-in reference detector over pre-extracted manifests and source text."""

from sastmeta.refdetector.bundle import AppBundle, load_bundle
from sastmeta.refdetector.manifest import ManifestDoc, parse_manifest
from sastmeta.refdetector.rules import Rule, eval_manifest_rules, eval_source_rules, load_rulepack
from sastmeta.refdetector.scan import scan_app, scan_findings
from sastmeta.refdetector.taint import SUPER_SQL_REGEX, concat_taint

__all__ = [
    "AppBundle",
    "ManifestDoc",
    "Rule",
    "SUPER_SQL_REGEX",
    "concat_taint",
    "eval_manifest_rules",
    "eval_source_rules",
    "load_bundle",
    "load_rulepack",
    "parse_manifest",
    "scan_app",
    "scan_findings",
]
