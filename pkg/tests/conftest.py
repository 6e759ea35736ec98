import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bitkiln.table import FactTable  # noqa: E402

# ids of city, vehicle and colour for the seven toy facts
TOY_ROWS = [
    ("1", "1", "1"),
    ("2", "2", "1"),
    ("3", "1", "2"),
    ("4", "1", "1"),
    ("5", "1", "3"),
    ("1", "2", "1"),
    ("6", "2", "1"),
]
TOY_COLUMNS = ["city", "vehicle", "colour"]


@pytest.fixture
def toy_table():
    return FactTable(list(TOY_COLUMNS), list(TOY_ROWS))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[key])
