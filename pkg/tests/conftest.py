import os

import pytest

from klab import geometry
from klab import mesh as meshmod

PROBLEM_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "problems")

# one line per acceptance criterion, echoed after the test summary
ACCEPTANCE_LINES = []


def problem_path(name: str) -> str:
    return os.path.abspath(os.path.join(PROBLEM_DIR, name))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def square():
    return geometry.build_polygon([(0, 0), (1, 0), (1, 1), (0, 1)])


@pytest.fixture(scope="session")
def lshape():
    return geometry.build_polygon(geometry.L_SHAPE_VERTICES)


@pytest.fixture(scope="session")
def box():
    return geometry.build_polyhedron_3d("box")


@pytest.fixture(scope="session")
def l_prism():
    return geometry.build_polyhedron_3d("l_prism")


@pytest.fixture(scope="session")
def fichera():
    return geometry.build_polyhedron_3d("fichera")


@pytest.fixture(scope="session")
def square_mesh(square):
    return meshmod.build_mesh(square, 0.125)


@pytest.fixture(scope="session")
def lshape_mesh(lshape):
    return meshmod.build_mesh(lshape, 0.125)


@pytest.fixture(scope="session")
def box_mesh(box):
    return meshmod.build_mesh(box, 0.25)
