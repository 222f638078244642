"""Rulepack loading and rule evaluation over manifests and source files."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING

import jsonschema

from sastmeta.errors import SchemaError
from sastmeta.normalizer import Location, RawFinding
from sastmeta.refdetector import javasrc
from sastmeta.refdetector.manifest import ManifestDoc, ManifestElement
from sastmeta.refdetector.taint import concat_taint

if TYPE_CHECKING:
    from sastmeta.refdetector.bundle import AppBundle
    from sastmeta.taxonomy import Taxonomy

TOOL_ID = "refdetector"
# Platform default when a manifest declares no minSdkVersion.
DEFAULT_MIN_SDK = 1

RULEPACK_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["rule_id", "unified_type", "target", "matcher"],
        "properties": {
            "rule_id": {"type": "string", "pattern": r"^[A-Z][A-Z0-9_]*$"},
            "unified_type": {"type": "string"},
            "target": {"enum": ["manifest", "source"]},
            "matcher": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["regex", "api_call", "empty_method", "manifest_attr", "exported_component"]}
                },
            },
            "preconditions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["kind", "value"],
                    "properties": {"kind": {"enum": ["min_sdk_below"]}, "value": {"type": "integer"}},
                },
            },
            "analysis": {"enum": ["none", "concat_taint"]},
            "message": {"type": "string"},
        },
    },
}


@dataclass(frozen=True)
class Rule:
    rule_id: str
    unified_type: str
    target: str
    matcher: dict
    preconditions: tuple[dict, ...] = ()
    analysis: str = "none"
    message: str = ""
    _regex: re.Pattern | None = field(default=None, compare=False, repr=False)

    def preconditions_hold(self, bundle: "AppBundle") -> bool:
        for pre in self.preconditions:
            if pre["kind"] == "min_sdk_below":
                sdk = bundle.declared_min_sdk if bundle.declared_min_sdk is not None else DEFAULT_MIN_SDK
                if not sdk < pre["value"]:
                    return False
        return True

    def finding(self, file: str, line: int, detail: str = "") -> RawFinding:
        msg = self.message + (f" ({detail})" if detail else "")
        return RawFinding(TOOL_ID, self.rule_id, Location(file, line), msg)


def parse_rulepack(doc: object, tax: "Taxonomy | None" = None) -> list[Rule]:
    try:
        jsonschema.validate(doc, RULEPACK_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"rulepack: {exc.message} at {list(exc.absolute_path)}") from None
    rules, ids = [], set()
    for r in doc:
        if r["rule_id"] in ids:
            raise SchemaError(f"rulepack: duplicate rule id {r['rule_id']}")
        ids.add(r["rule_id"])
        if tax is not None and r["unified_type"] not in tax:
            raise SchemaError(f"rulepack: rule {r['rule_id']} targets unknown type {r['unified_type']}")
        compiled = None
        if r["matcher"]["kind"] == "regex":
            try:
                compiled = re.compile(r["matcher"]["pattern"])
            except (KeyError, re.error) as exc:
                raise SchemaError(f"rulepack: rule {r['rule_id']} has a bad pattern: {exc}") from None
        rules.append(
            Rule(
                r["rule_id"], r["unified_type"], r["target"], r["matcher"],
                tuple(r.get("preconditions", ())), r.get("analysis", "none"), r.get("message", ""), compiled,
            )
        )
    return rules


def load_rulepack(path: str | Path | None = None, tax: "Taxonomy | None" = None) -> list[Rule]:
    """Load a rulepack; ``None`` loads the shipped one."""
    if path is None:
        text = resources.files("sastmeta").joinpath("data/rulepack.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"rulepack: {exc}") from None
    return parse_rulepack(doc, tax)


# --- manifest rules -------------------------------------------------------------

def _is_exported_unprotected(el: ManifestElement, app_permission: str | None) -> bool:
    if el.lookup("permission") or app_permission:
        return False
    exported = el.lookup("exported")
    if exported is not None:
        return exported == "true"
    return el.find("intent-filter") is not None


def eval_manifest_rules(doc: ManifestDoc, bundle: "AppBundle", rules: list[Rule]) -> list[RawFinding]:
    findings = []
    for rule in rules:
        if rule.target != "manifest" or not rule.preconditions_hold(bundle):
            continue
        m = rule.matcher
        if m["kind"] == "manifest_attr":
            mode = m.get("lookup", "local")
            for el in doc.iter(m["element"]):
                if el.lookup(m["attribute"], mode) == m["equals"]:
                    findings.append(rule.finding(bundle.manifest_name, el.line))
        elif m["kind"] == "exported_component":
            app = next(doc.iter("application"), None)
            app_perm = app.lookup("permission") if app is not None else None
            for tag in m["elements"]:
                for el in doc.iter(tag):
                    if _is_exported_unprotected(el, app_perm):
                        findings.append(rule.finding(bundle.manifest_name, el.line, el.lookup("name") or tag))
        else:
            raise SchemaError(f"rule {rule.rule_id}: matcher {m['kind']!r} cannot target the manifest")
    return findings


# --- source rules ---------------------------------------------------------------

def _cipher_is_weak(transformation: str, m: dict) -> bool:
    parts = transformation.split("/")
    algorithm = parts[0].upper()
    # Providers fall back to ECB/PKCS5Padding when only the algorithm is given.
    mode = parts[1].upper() if len(parts) > 1 else m.get("default_mode", "ECB")
    return algorithm in {a.upper() for a in m["algorithms"]} and mode in {x.upper() for x in m["weak_modes"]}


def _arg_matches(call: javasrc.Call, check: dict) -> bool:
    idx = check.get("index", 0)
    if idx >= len(call.args):
        return False
    arg = call.args[idx]
    kind = check["kind"]
    if kind == "flag":
        value = javasrc.resolve_int(arg, check["constants"])
        return value is not None and bool(value & check["bit"])
    if kind == "equals":
        return javasrc.strip_parens(arg) == check["value"]
    if kind == "cipher":
        literal = javasrc.string_literal_value(javasrc.strip_parens(arg))
        return literal is not None and _cipher_is_weak(literal, check)
    if kind == "string_prefix":
        first = javasrc.concat_operands(javasrc.strip_parens(arg))
        literal = javasrc.string_literal_value(first[0]) if first else None
        return literal is not None and literal.lower().startswith(check["prefix"])
    raise SchemaError(f"unknown argument check {kind!r}")


def _eval_file(rule: Rule, path: str, raw: str, text: str, lines: javasrc.LineIndex) -> list[RawFinding]:
    m = rule.matcher
    if rule.analysis == "concat_taint":
        return [
            rule.finding(f.location.file, f.location.line, f.message)
            for f in concat_taint(raw, m["methods"], file=path, rule_id=rule.rule_id)
        ]
    if m["kind"] == "regex":
        return [rule.finding(path, n) for n, line in enumerate(text.splitlines(), 1) if rule._regex.search(line)]
    if m["kind"] == "api_call":
        out = []
        for call in javasrc.find_calls(text, m["methods"]):
            if m.get("constructor") and not call.is_new:
                continue
            if all(_arg_matches(call, chk) for chk in m.get("args", ())):
                out.append(rule.finding(path, lines.line_of(call.offset), call.name))
        return out
    if m["kind"] == "empty_method":
        if m.get("requires") and m["requires"] not in text:
            return []
        pat = re.compile(
            r"\b" + re.escape(m["method"]) + r"\s*\([^)]*\)\s*(?:throws\s+[\w$.\s,]+?)?\s*\{\s*\}"
        )
        return [rule.finding(path, lines.line_of(x.start()), m["method"]) for x in pat.finditer(text)]
    raise SchemaError(f"rule {rule.rule_id}: matcher {m['kind']!r} cannot target source")


def eval_source_rules(bundle: "AppBundle", rules: list[Rule]) -> list[RawFinding]:
    active = [r for r in rules if r.target == "source" and r.preconditions_hold(bundle)]
    findings = []
    for path in sorted(bundle.sources):
        raw = bundle.sources[path]
        text = javasrc.strip_comments(raw)
        lines = javasrc.LineIndex(text)
        for rule in active:
            findings.extend(_eval_file(rule, path, raw, text, lines))
    return findings
