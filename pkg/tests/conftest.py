import os

import pytest
from hypothesis import settings

from abutcheck.abutment import Testcell, TestcellKind
from abutcheck.geometry import Rect
from abutcheck.library import parse_cells, parse_tech_rules
from abutcheck.pipeline import data_path

# shared sandbox timing is noisy; correctness, not speed, is under test
settings.register_profile("default", deadline=None)
settings.load_profile("default")

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

# filled by test_acceptance, printed once at the end of the session
ACCEPTANCE_LINES = []


def fixture_path(name):
    return os.path.join(FIXTURES, name)


@pytest.fixture(scope="session")
def tech():
    with open(data_path("toy.tech")) as f:
        return parse_tech_rules(f.read())


def load_cells(name, tech):
    path = data_path(name) if os.path.exists(data_path(name)) else fixture_path(name)
    with open(path) as f:
        return parse_cells(f.read(), row_height=tech.site_row_height, units=tech.units_per_micron)


@pytest.fixture(scope="session")
def toy_cells(tech):
    return load_cells("toy8.lef", tech)


def empty_testcell(die, name="fixture", row_height=1200):
    return Testcell(name, TestcellKind.TYPE_AA, (), die, 1, row_height)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
