import numpy as np
import pytest

from fluxdg import PenaltyParams, build_rect_mesh, build_space, make_coefficient

# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_problem(nx, ny, p, kind="one", **penalty):
    mesh = build_rect_mesh((0.0, 1.0, 0.0, 1.0), nx, ny)
    space = build_space(mesh, p)
    spec = 1.0 if kind == "one" else {"kind": "checkerboard", "values": [1.0, 10.0]}
    return space, make_coefficient(spec, space), PenaltyParams(**penalty)
