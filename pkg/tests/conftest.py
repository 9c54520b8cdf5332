"""Shared test plumbing: the acceptance-criteria report."""

_acceptance_lines = []


def record_acceptance(number, title, passed, detail):
    """Collect one pass/fail line per acceptance criterion."""
    status = "PASS" if passed else "FAIL"
    _acceptance_lines.append(f"ACCEPTANCE {number} ({title}): {status} — {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_acceptance_lines):
        terminalreporter.write_line(line)
