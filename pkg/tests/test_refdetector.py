import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BUNDLES
from sastmeta.errors import SchemaError, XmlError
from sastmeta.normalizer import normalize, parse_report
from sastmeta.refdetector import (
    AppBundle,
    eval_manifest_rules,
    eval_source_rules,
    load_bundle,
    load_rulepack,
    parse_manifest,
    scan_app,
    scan_findings,
)
from sastmeta.refdetector.rules import parse_rulepack
from sastmeta.taxonomy import UNMAPPED

MANIFEST = """<?xml version="1.0" encoding="utf-8"?>
<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="p">
    <uses-sdk android:minSdkVersion="{sdk}" />
    <application {app_attrs}>
{components}
    </application>
</manifest>
"""


def manifest(sdk=21, app_attrs="", components=""):
    return MANIFEST.format(sdk=sdk, app_attrs=app_attrs, components=components)


@pytest.fixture(scope="module")
def rules(tax):
    return load_rulepack(tax=tax)


def ids(findings):
    return sorted(f.raw_identifier for f in findings)


def source_ids(rules, code, sdk=21):
    bundle = AppBundle.from_texts("app", manifest(sdk), {"src/A.java": code})
    return ids(eval_source_rules(bundle, rules))


def manifest_ids(rules, xml):
    bundle = AppBundle.from_texts("app", xml)
    return ids(eval_manifest_rules(parse_manifest(xml), bundle, rules))


# --- manifest ---------------------------------------------------------------------

def test_local_vs_raw_lookup():
    doc = parse_manifest(manifest(app_attrs='android:allowBackup="true"'))
    assert doc.get_element("application", "allowBackup") == "true"
    assert doc.get_element("application", "android:allowBackup", mode="raw") is None
    assert doc.get_element("application", "debuggable") is None
    assert doc.min_sdk == 21


def test_malformed_manifest():
    with pytest.raises(XmlError):
        parse_manifest("<manifest><application></manifest>")


def test_backup_rule(rules):
    assert manifest_ids(rules, manifest(app_attrs='android:allowBackup="true"')) == ["MANIFEST_ALLOW_BACKUP"]
    assert manifest_ids(rules, manifest(app_attrs='android:allowBackup="false"')) == []
    assert manifest_ids(rules, manifest()) == []


def test_raw_lookup_rulepack_reproduces_missed_backup(tax, rules):
    buggy = [dict(rule_id="MANIFEST_ALLOW_BACKUP", unified_type="SMR.MANIFEST_BACKUP_ISSUE", target="manifest",
                  matcher={"kind": "manifest_attr", "element": "application", "attribute": "android:allowBackup",
                           "equals": "true", "lookup": "raw"})]
    xml = manifest(app_attrs='android:allowBackup="true"')
    assert manifest_ids(parse_rulepack(buggy, tax), xml) == []
    assert manifest_ids(rules, xml) == ["MANIFEST_ALLOW_BACKUP"]


def test_debug_rule(rules):
    assert manifest_ids(rules, manifest(app_attrs='android:debuggable="true"')) == ["MANIFEST_DEBUGGABLE"]
    assert manifest_ids(rules, manifest(app_attrs='android:debuggable="false"')) == []


@pytest.mark.parametrize("component,fires", [
    ('<activity android:name=".A"><intent-filter><action android:name="x"/></intent-filter></activity>', True),
    ('<service android:name=".S" android:exported="true" />', True),
    ('<service android:name=".S" android:exported="true" android:permission="p.P" />', False),
    ('<activity android:name=".A" android:exported="false"><intent-filter/></activity>', False),
    ('<activity android:name=".A" />', False),
    ('<receiver android:name=".R" android:permission="p.P"><intent-filter/></receiver>', False),
])
def test_exported_component(rules, component, fires):
    found = manifest_ids(rules, manifest(components=component))
    assert found == (["EXPORTED_COMPONENT"] if fires else [])


# --- source -----------------------------------------------------------------------

def test_log_call(rules):
    assert source_ids(rules, 'class A { void f(Exception e) { Log.d("E", e.toString()); } }') == ["LOG_CALL"]
    assert source_ids(rules, "class A { void f() { Catalog.d(1); } }") == []


LISTING_1 = """class A {
    private void openFileOutputWorldWritable(String filename) throws Exception {
        getContext().openFileOutput(filename, %s);}
}
"""


@pytest.mark.parametrize("arg", ["2", "Context.MODE_WORLD_WRITEABLE", "MODE_WORLD_WRITEABLE",
                                 "Context.MODE_APPEND | Context.MODE_WORLD_WRITEABLE", "0x2", "(2)"])
def test_world_writable_constant_resolution(rules, arg):
    assert source_ids(rules, LISTING_1 % arg) == ["WORLD_WRITABLE_MODE"]


@pytest.mark.parametrize("arg", ["0", "Context.MODE_PRIVATE", "MODE_APPEND", "mode"])
def test_world_writable_negative(rules, arg):
    assert source_ids(rules, LISTING_1 % arg) == []


def test_world_readable(rules):
    assert source_ids(rules, LISTING_1 % "1") == ["WORLD_READABLE_MODE"]
    assert source_ids(rules, LISTING_1 % "3") == ["WORLD_READABLE_MODE", "WORLD_WRITABLE_MODE"]


@pytest.mark.parametrize("transformation,fires", [
    ('"AES"', True), ('"AES/ECB/PKCS5Padding"', True), ('"aes/ecb/nopadding"', True),
    ('"AES/CBC/PKCS5Padding"', False), ('"AES/GCM/NoPadding"', False), ('"DES"', False), ("alg", False),
])
def test_aes_default_mode(rules, transformation, fires):
    code = f"class A {{ void f() throws Exception {{ Cipher c = Cipher.getInstance({transformation}); }} }}"
    assert source_ids(rules, code) == (["AES_ECB_MODE"] if fires else [])


def test_javascript_enabled_only_with_true(rules):
    assert source_ids(rules, "class A { void f(WebView w) { w.getSettings().setJavaScriptEnabled(true); } }") \
        == ["WEBVIEW_JS_ENABLED"]
    assert source_ids(rules, "class A { void f(WebView webview) { webview.getSettings().setJavaScriptEnabled(false); } }") \
        == []


FILE_ACCESS = "class A { void f(WebView w) { w.getSettings().setAllowFileAccess(true); } }"


def test_file_access_precondition(rules):
    assert source_ids(rules, FILE_ACCESS, sdk=16) == ["WEBVIEW_FILE_ACCESS"]
    assert source_ids(rules, FILE_ACCESS, sdk=17) == []
    assert source_ids(rules, FILE_ACCESS, sdk=21) == []
    no_sdk = AppBundle.from_texts("app", "<manifest><application/></manifest>", {"src/A.java": FILE_ACCESS})
    assert ids(eval_source_rules(no_sdk, rules)) == ["WEBVIEW_FILE_ACCESS"]


TRUST = """class T implements X509TrustManager {
    %s void checkServerTrusted(X509Certificate[] chain, String authType) %s{
    %s}
}
"""


@pytest.mark.parametrize("mods", ["public", "public final", "final public", ""])
def test_empty_check_server_trusted(rules, mods):
    assert source_ids(rules, TRUST % (mods, "", "")) == ["EMPTY_SERVER_TRUST"]
    assert source_ids(rules, TRUST % (mods, "throws CertificateException ", "")) == ["EMPTY_SERVER_TRUST"]


def test_non_empty_check_server_trusted(rules):
    body = 'throw new CertificateException("no");\n'
    assert source_ids(rules, TRUST % ("public final", "throws CertificateException ", body)) == []


def test_http_url(rules):
    assert source_ids(rules, 'class A { URL f(String host) throws Exception { return new URL("http://" + host); } }') \
        == ["HTTP_URL"]
    assert source_ids(rules, 'class A { URL f(String h) throws Exception { return new URL("https://" + h); } }') == []
    assert source_ids(rules, 'class A { void f() { parseURL("http://x"); } }') == []


def test_comments_are_ignored(rules):
    code = 'class A {\n  // Log.d("x", "y");\n  /* Cipher.getInstance("AES") */\n}\n'
    assert source_ids(rules, code) == []


# --- rulepack ---------------------------------------------------------------------

def test_rulepack_shape(tax, rules):
    assert len(rules) == 12
    assert {r.unified_type for r in rules} <= tax.type_ids


def test_rulepack_rejects_bad_input(tax):
    base = dict(rule_id="X", unified_type="SDE.LOGGING_DATA_EXPOSURE", target="source",
                matcher={"kind": "regex", "pattern": "("})
    with pytest.raises(SchemaError, match="pattern"):
        parse_rulepack([base], tax)
    with pytest.raises(SchemaError, match="unknown type"):
        parse_rulepack([dict(base, unified_type="NOPE", matcher={"kind": "regex", "pattern": "x"})], tax)
    with pytest.raises(SchemaError):
        parse_rulepack([dict(base, target="binary")], tax)


# --- whole-app scans --------------------------------------------------------------

EXPECTED = {
    "vuln_storage": ["MANIFEST_ALLOW_BACKUP", "WORLD_READABLE_MODE", "WORLD_WRITABLE_MODE"],
    "vuln_sql": ["LOG_CALL", "MANIFEST_DEBUGGABLE", "SQL_CONCAT"],
    "vuln_net": ["AES_ECB_MODE", "EMPTY_SERVER_TRUST", "EXPORTED_COMPONENT", "HTTP_URL",
                 "WEBVIEW_FILE_ACCESS", "WEBVIEW_JS_ENABLED"],
    "clean_storage": [], "clean_sql": [], "clean_net": [],
}


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_fixture_bundles(rules, name):
    assert ids(scan_findings(load_bundle(BUNDLES / name), rules)) == EXPECTED[name]


def test_seeded_bundle_report_has_three_records(rules):
    report = scan_app(load_bundle(BUNDLES / "vuln_storage"), rules)
    records = [ln for ln in report.splitlines() if not ln.startswith("#")]
    assert len(records) == 3
    assert report == scan_app(load_bundle(BUNDLES / "vuln_storage"), rules)


def test_report_parses_and_maps(tax, rules):
    for name in ("vuln_storage", "vuln_sql", "vuln_net"):
        report = scan_app(load_bundle(BUNDLES / name), rules)
        found = normalize(tax, name, parse_report("refdetector", report))
        assert found and all(f.unified_type != UNMAPPED for f in found)


def test_empty_bundle(rules):
    bundle = AppBundle.from_texts("empty", manifest())
    assert scan_app(bundle, rules) == "# refdetector report\n# apk: empty\n"


def test_broken_bundle(rules):
    with pytest.raises(XmlError):
        scan_app(load_bundle(BUNDLES / "broken"), rules)


def test_adapter_entry_point(tmp_path):
    out = tmp_path / "r.tsv"
    ok = subprocess.run([sys.executable, "-m", "sastmeta.refdetector", str(BUNDLES / "vuln_sql"), str(out)])
    assert ok.returncode == 0 and "SQL_CONCAT" in out.read_text()
    bad = subprocess.run([sys.executable, "-m", "sastmeta.refdetector", str(BUNDLES / "broken"), str(out)],
                         capture_output=True, text=True)
    assert bad.returncode == 3 and bad.stderr.startswith("XmlError")


# --- properties -------------------------------------------------------------------

SNIPPETS = [
    'Log.i("t", msg);',
    "ctx.openFileOutput(name, {mode});",
    'Cipher.getInstance("AES");',
    "w.getSettings().setJavaScriptEnabled(true);",
    "w.getSettings().setAllowFileAccess(true);",
    'URL u = new URL("http://" + host);',
    "int x = 1;",
]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(SNIPPETS), min_size=1, max_size=6), st.integers(1, 30))
def test_constant_resolution_and_gating_properties(rules, picks, sdk):
    body = "\n".join("        " + s for s in picks)
    code = "class A {\n    void f(Context ctx, WebView w, String name, String msg, String host) throws Exception {\n%s\n    }\n}\n"
    symbolic = source_ids(rules, code % body.replace("{mode}", "Context.MODE_WORLD_WRITEABLE"), sdk)
    literal = source_ids(rules, code % body.replace("{mode}", "2"), sdk)
    assert symbolic == literal
    ungated = source_ids(rules, code % body.replace("{mode}", "2"), 16)
    gated = source_ids(rules, code % body.replace("{mode}", "2"), 17)
    assert [i for i in ungated if i != "WEBVIEW_FILE_ACCESS"] == gated
