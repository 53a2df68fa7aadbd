import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> list of (check name, passed, detail)
ACCEPTANCE: dict[int, list] = {}


@pytest.fixture
def record():
    """``record(n, name, passed, detail)`` logs one acceptance sub-check."""
    def _record(n, name, passed, detail=""):
        ACCEPTANCE.setdefault(n, []).append((name, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {n} [{name}]: {detail}")
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        ok = all(p for _, p, _ in checks)
        parts = "; ".join(f"{name}={'ok' if p else 'FAILED'} ({d})" for name, p, d in checks)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {parts}")
