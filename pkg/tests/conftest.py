from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
SCENES = ROOT / "scenes"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scene_path(name):
    return str(SCENES / name)


# acceptance result lines by criterion number, printed at the end of the session
ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    line = "criterion %2d: %s  %s" % (number, "PASS" if ok else "FAIL", detail)
    ACCEPTANCE_LINES.setdefault(number, []).append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            for line in ACCEPTANCE_LINES[k]:
                terminalreporter.write_line(line)
