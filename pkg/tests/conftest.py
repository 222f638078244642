import sys
from pathlib import Path

import pytest

from sastmeta.taxonomy import load_taxonomy

DATA = Path(__file__).parent / "data"
BUNDLES = DATA / "bundles"
REPORTS = DATA / "reports"
MOCK_TOOL = DATA / "mock" / "mock_tool.py"


@pytest.fixture(scope="session")
def tax():
    return load_taxonomy()


def mock_adapter(tool_id, mode, arg="", parser_id="refdetector", timeout=30, signatures=()):
    """AdapterConfig running the mock tool script in the given mode."""
    from sastmeta.runner import AdapterConfig, FailureSignature

    invocation = [sys.executable, str(MOCK_TOOL), mode, "{apk_path}", "{out_path}"]
    if arg:
        invocation.append(str(arg))
    sigs = tuple(FailureSignature(p, c) for p, c in signatures)
    return AdapterConfig(tool_id, invocation, parser_id, timeout, sigs)


_acceptance_results = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion_" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance_results, key=lambda r: int(r[0].split("_")[2])):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
