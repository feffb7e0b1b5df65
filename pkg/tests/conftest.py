import pytest

_RESULTS: dict[str, list[tuple[bool, str]]] = {}


@pytest.fixture
def acceptance():
    """``acceptance(label, ok, detail)`` records one check for the end-of-run report."""

    def record(label: str, ok: bool, detail: str = "") -> bool:
        _RESULTS.setdefault(label, []).append((bool(ok), detail))
        return bool(ok)

    return record


def _order(label):
    head = label.split()[0]
    digits = "".join(ch for ch in head if ch.isdigit())
    return (int(digits) if digits else 99, label)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_RESULTS, key=_order):
        checks = _RESULTS[label]
        ok = all(c for c, _ in checks)
        detail = "; ".join(d for _, d in checks if d)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
