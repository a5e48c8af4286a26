"""Collects the per-criterion verdict lines printed by the acceptance suite."""

VERDICTS: list = []


def report(label: str, ok: bool, detail: str = "") -> bool:
    line = f"criterion {label}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
