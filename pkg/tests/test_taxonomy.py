import json

import pytest

from sastmeta.errors import InvariantError, SchemaError, UnknownTool
from sastmeta.taxonomy import (
    OUT_OF_SCOPE,
    UNMAPPED,
    coverage_report,
    load_taxonomy,
    map_raw_finding,
    parse_taxonomy,
    support_groups,
    unique_type_id,
)

TOOLS = ["MobSF", "QARK", "AndroBugs", "APKHunt", "SUPER", "JAADAS", "DroidStatx",
         "Marvin", "Trueseeing", "AUSERA", "SPECK"]


def small_doc(**over):
    doc = {
        "version": "t",
        "categories": [{"code": "SDE", "name": "Sensitive Data Exposure Risks"}],
        "types": [{"id": "SDE.LOG", "name": "Log", "category": "SDE", "tools": ["A", "B"]}],
        "unique": [{"tool": "A", "count": 1, "names": ["Only A"]}],
        "mappings": [
            {"tool": "A", "kind": "exact", "pattern": "log", "target": "SDE.LOG"},
            {"tool": "A", "kind": "regex", "pattern": "(?i)log", "target": OUT_OF_SCOPE},
            {"tool": "A", "kind": "regex", "pattern": "(?i)logging", "target": "SDE.LOG"},
            {"tool": "B", "kind": "exact", "pattern": "B-log", "target": "SDE.LOG"},
        ],
    }
    doc.update(over)
    return doc


def test_shipped_counts(tax):
    assert len(tax.types) == 67
    assert len({t.category for t in tax.types}) == 5
    per_cat = {}
    for t in tax.types:
        per_cat[t.category] = per_cat.get(t.category, 0) + 1
    assert per_cat == {"SDE": 14, "IER": 11, "SMR": 12, "ICE": 8, "INC": 22}
    assert min(len(t.supporting_tools) for t in tax.types) >= 2


def test_coverage_table(tax):
    rep = coverage_report(tax, TOOLS)
    assert [rep[t].overlapped_count for t in TOOLS] == [39, 21, 27, 45, 32, 15, 21, 28, 21, 40, 23]
    assert [rep[t].unique_count for t in TOOLS] == [12, 2, 5, 15, 0, 3, 4, 3, 5, 1, 4]
    assert [rep[t].out_of_scope_count for t in TOOLS] == [26, 2, 21, 16, 14, 1, 13, 15, 8, 0, 6]
    assert rep["APKHunt"].overlapped_pct == 67
    assert rep["AUSERA"].overlapped_pct == 60
    assert rep["JAADAS"].overlapped_pct == 22


def test_mapping_examples(tax):
    assert map_raw_finding(tax, "AUSERA", "Logging data leakage") == "SDE.LOGGING_DATA_EXPOSURE"
    assert map_raw_finding(tax, "SUPER", "Unchecked output in Logs") == "SDE.LOGGING_DATA_EXPOSURE"
    assert map_raw_finding(tax, "AndroBugs", "MANIFEST_GCM") == OUT_OF_SCOPE
    assert map_raw_finding(tax, "MobSF", "no such rule at all") == UNMAPPED
    assert map_raw_finding(tax, "MobSF", "The App logs information. Sensitive information should never be logged.") \
        == "SDE.LOGGING_DATA_EXPOSURE"


def test_unknown_tool(tax):
    with pytest.raises(UnknownTool):
        map_raw_finding(tax, "NoSuchTool", "x")


def test_refdetector_rules_all_mapped(tax):
    from sastmeta.refdetector import load_rulepack

    for rule in load_rulepack(tax=tax):
        assert map_raw_finding(tax, "refdetector", rule.rule_id) == rule.unified_type


def test_precedence_exact_then_longest_regex():
    tax = parse_taxonomy(small_doc(), strict_counts=False)
    assert map_raw_finding(tax, "A", "log") == "SDE.LOG"
    assert map_raw_finding(tax, "A", "Logging to stdout") == "SDE.LOG"
    assert map_raw_finding(tax, "A", "a LOG line") == OUT_OF_SCOPE
    assert map_raw_finding(tax, "A", "nothing") == UNMAPPED


def test_single_tool_type_rejected():
    doc = small_doc(types=[{"id": "SDE.LOG", "name": "Log", "category": "SDE", "tools": ["A"]}])
    with pytest.raises(InvariantError, match="SDE.LOG"):
        parse_taxonomy(doc, strict_counts=False)


def test_unknown_target_rejected():
    doc = small_doc()
    doc["mappings"].append({"tool": "B", "kind": "exact", "pattern": "z", "target": "SDE.NOPE"})
    with pytest.raises(InvariantError, match="SDE.NOPE"):
        parse_taxonomy(doc, strict_counts=False)


def test_duplicate_and_ambiguous_rejected():
    doc = small_doc()
    doc["types"].append(dict(doc["types"][0]))
    with pytest.raises(InvariantError, match="duplicate"):
        parse_taxonomy(doc, strict_counts=False)
    doc = small_doc()
    doc["mappings"].append({"tool": "A", "kind": "exact", "pattern": "log", "target": OUT_OF_SCOPE})
    with pytest.raises(InvariantError, match="ambiguous"):
        parse_taxonomy(doc, strict_counts=False)


def test_strict_counts_on_small_doc():
    with pytest.raises(InvariantError, match="67"):
        parse_taxonomy(small_doc())


def test_schema_errors(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    with pytest.raises(SchemaError):
        load_taxonomy(empty)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": "x"}))
    with pytest.raises(SchemaError):
        load_taxonomy(bad)
    with pytest.raises(SchemaError):
        load_taxonomy(tmp_path / "missing.json")


def test_support_groups(tax):
    uid = unique_type_id("AndroBugs", "MASTER_KEY")
    g = support_groups(tax, ["SDE.LOGGING_DATA_EXPOSURE", uid, "BENCH.ONLY"])
    assert g.overlapped == {"SDE.LOGGING_DATA_EXPOSURE"}
    assert g.unique == {uid}
    assert g.unsupported == {"BENCH.ONLY"}


def test_supported_types(tax):
    sup = tax.supported_types("JAADAS")
    assert len([t for t in sup if not t.startswith("UNIQUE.")]) == 15
    assert len([t for t in sup if t.startswith("UNIQUE.")]) == 3
    assert len(tax.supported_types("refdetector")) == 12
