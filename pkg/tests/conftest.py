from collections import OrderedDict

import pytest

_RESULTS: "OrderedDict[int, list]" = OrderedDict()


class Recorder:
    """Collects per-criterion outcomes so the summary shows one line each."""

    def __call__(self, criterion: int, passed: bool, detail: str = "") -> bool:
        _RESULTS.setdefault(criterion, []).append((bool(passed), detail))
        return bool(passed)


@pytest.fixture(scope="session")
def record():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_RESULTS):
        parts = _RESULTS[criterion]
        ok = all(p for p, _ in parts)
        failed = [d for p, d in parts if not p]
        line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'} ({len(parts)} checks"
        line += f", {len(failed)} failed: {'; '.join(failed)})" if failed else ")"
        terminalreporter.write_line(line)
