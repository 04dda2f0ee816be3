import numpy as np
import pytest

from femforge.mesh import Mesh, generate_grid

ACCEPTANCE_LINES = []


@pytest.fixture
def unit_square():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), [[0, 1, 2, 3]],
                node_sets={"left": [0, 3], "right": [1, 2], "bottom": [0, 1], "top": [2, 3]},
                facet_sets={"bottom": [[0, 0]], "right": [[0, 1]], "top": [[0, 2]],
                            "left": [[0, 3]]})


@pytest.fixture
def grid_2x2():
    return generate_grid(2, 2, 1.0, 1.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
