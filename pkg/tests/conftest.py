import pytest

# criterion number -> list of (part, passed, detail)
_RESULTS: dict[int, list] = {}


@pytest.fixture
def record():
    def _record(criterion: int, part: str, passed: bool, detail: str) -> bool:
        _RESULTS.setdefault(criterion, []).append((part, bool(passed), detail))
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        parts = _RESULTS[n]
        status = "PASS" if all(p for _, p, _ in parts) else "FAIL"
        detail = "; ".join(f"{name}: {'ok' if p else 'FAIL'} ({d})" for name, p, d in parts)
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
