"""Shared pytest wiring: the acceptance suite reports one line per criterion."""

ACCEPTANCE_RESULTS = []


def record_acceptance(number, name, passed, detail):
    line = f"ACCEPTANCE {number:02d} {'PASS' if passed else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line, flush=True)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)
