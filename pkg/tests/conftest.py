import re


_outcomes: dict[str, list] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m or (report.when != "call" and report.passed):
        return
    n = int(m.group(1))
    detail = "; ".join(f"{k}={v}" for k, v in report.user_properties)
    prev = _outcomes.get(n)
    ok = report.passed and (prev is None or prev[0])
    _outcomes[n] = [ok, detail or (prev[1] if prev else "")]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        ok, detail = _outcomes[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
