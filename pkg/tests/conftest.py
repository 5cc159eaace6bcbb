import pytest

from polyfract import graphs
from polyfract.environment import DisorderSpec

# One formatted line per acceptance criterion, printed after the run so
# the verdicts survive even a noisy -v log.
_ACCEPTANCE_LINES = []


class AcceptanceRecorder:
    def __init__(self):
        self.num = None
        self.reported = False

    def claim(self, num):
        self.num = int(num)

    def __call__(self, ok, detail=""):
        line = (f"ACCEPTANCE {self.num}: {'PASS' if ok else 'FAIL'}"
                f"  {detail}")
        _ACCEPTANCE_LINES.append(line)
        self.reported = True
        assert ok, line


@pytest.fixture
def acceptance():
    rec = AcceptanceRecorder()
    yield rec
    if rec.num is not None and not rec.reported:
        _ACCEPTANCE_LINES.append(
            f"ACCEPTANCE {rec.num}: FAIL  crashed before evaluation")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES,
                       key=lambda s: int(s.split(":")[0].split()[1])):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def gauss():
    return DisorderSpec.gaussian()


@pytest.fixture(scope="session")
def rade():
    return DisorderSpec.rademacher()


@pytest.fixture(scope="session")
def line8():
    return graphs.build_line(8)


@pytest.fixture(scope="session")
def line120():
    return graphs.build_line(120)


@pytest.fixture(scope="session")
def gasket2():
    return graphs.build_gasket(2)


@pytest.fixture(scope="session")
def gasket5():
    return graphs.build_gasket(5)
