import numpy as np
import pytest

from fractal_rd import assembly, geometry, meshing


def make_problem(poly, kind="sigma", levels=0, s=0.5, total_mass=1.0, **kw):
    mesh = meshing.build_mesh(poly, levels)
    mm = meshing.transfer_measure(mesh, geometry.attach_measure(poly, kind, total_mass, **kw))
    op = assembly.assemble(mesh, mm, s=s)
    return mesh, mm, op


@pytest.fixture
def square():
    return geometry.build_square(1.0)


@pytest.fixture
def square_robin(square):
    return make_problem(square, "sigma", levels=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
