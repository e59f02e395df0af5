import pytest

from ncga.netgraph import build_butterfly, build_butterfly_prime, build_cascade


@pytest.fixture
def butterfly():
    return build_butterfly()


@pytest.fixture
def butterfly_prime():
    return build_butterfly_prime()


@pytest.fixture(scope="session")
def cascade2():
    return build_cascade(2)


@pytest.fixture(scope="session")
def cascade4():
    return build_cascade(4)


_REPORT_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT_KEY] = []


@pytest.fixture
def report(request, capsys):
    """Record one PASS/FAIL line for an acceptance criterion and print it."""

    def _report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        request.config.stash[_REPORT_KEY].append(line)
        with capsys.disabled():
            print("\n" + line)

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
