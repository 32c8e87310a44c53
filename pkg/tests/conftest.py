import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vbs_beamsim.scene import Box, Scene  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def one_box_scene():
    return Scene(0.0, (0.0, 0.0, 60.0, 60.0), [Box((20.0, 20.0, 0.0), (30.0, 40.0, 12.0), 10.0)])


@pytest.fixture
def three_box_scene():
    return Scene(0.0, (40.0, 0.0, 160.0, 120.0), [
        Box((100.0, 20.0, 0.0), (115.0, 35.0, 15.0), 10.0),
        Box((60.0, 50.0, 0.0), (75.0, 70.0, 20.0), 10.0),
        Box((100.0, 85.0, 0.0), (120.0, 100.0, 12.0), 10.0),
    ])


def pytest_terminal_summary(terminalreporter):
    import acceptance_log
    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_log.summary_lines():
        terminalreporter.write_line(line)
