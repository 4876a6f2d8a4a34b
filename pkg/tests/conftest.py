"""Prints one PASS/FAIL line per acceptance criterion after the run."""

_acceptance_results = []

_CRITERIA = {
    "test_weight_algebra": "weight algebra (row sums zero, sign pattern)",
    "test_functional_gradient_oracle": "functional-gradient vs central differences",
    "test_gradient_checks": "layer + input-path gradient checks",
    "test_line_search_oracle": "line-search canonical instances",
    "test_retention_arithmetic": "subgrid retention arithmetic",
    "test_degeneracy_collapses": "method degeneracy collapses",
    "test_monotone_risk": "monotone training risk over boosting rounds",
    "test_trend_reproduction": "accuracy ordering and seed-robustness trend",
    "test_persistence_roundtrip": "checkpoint persistence round-trip",
    "test_format_fidelity": "binary dataset format fidelity",
}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1].split("[")[0]
    label = _CRITERIA.get(name, name)
    _acceptance_results.append((label, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in _acceptance_results:
        mark = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"[{mark}] {label}")
