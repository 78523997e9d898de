import numpy as np
import pytest

from perfhom import harness
from perfhom.corrector import solve_correctors
from perfhom.effective import build_effective_model
from perfhom.geometry import CellGeometry, Disk, Empty
from perfhom.material import MaterialSpec, constant_load
from perfhom.mesh import generate_cell_mesh


@pytest.fixture(scope="session")
def disk_cell():
    return CellGeometry(Disk(0.25))


@pytest.fixture(scope="session")
def empty_cell():
    return CellGeometry(Empty())


@pytest.fixture(scope="session")
def unit_mat():
    return MaterialSpec()


@pytest.fixture(scope="session")
def gravity():
    return constant_load((0.0, -1.0))


@pytest.fixture(scope="session")
def disk_correctors_32(disk_cell, unit_mat):
    return solve_correctors(generate_cell_mesh(disk_cell, 1 / 32), unit_mat)


@pytest.fixture(scope="session")
def disk_correctors_8(disk_cell, unit_mat):
    return solve_correctors(generate_cell_mesh(disk_cell, 1 / 8), unit_mat)


@pytest.fixture(scope="session")
def disk_model_8(disk_correctors_8, disk_cell, gravity):
    return build_effective_model(disk_correctors_8, disk_cell, gravity)


@pytest.fixture(scope="session")
def default_config():
    return harness.load_config()


@pytest.fixture(scope="session")
def default_run(default_config):
    """The full default sweep, computed once per session."""
    return harness.run_full(default_config)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
