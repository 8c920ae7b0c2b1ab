import warnings

# numba probes TBB at import time; the fallback threading layer is fine here
warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
