import numpy as np
import pytest

from mfeit.forward import CemSystem, adjacent_patterns
from mfeit.fractions import overlap_spectra
from mfeit.mesh import build_disk_mesh


@pytest.fixture(scope="session")
def small_setup():
    """8-electrode disk, <=100 nodes: the standard cheap FEM fixture."""
    mesh, electrodes = build_disk_mesh(1.0, 90, 8, 0.5)
    assert mesh.num_nodes <= 100
    return mesh, electrodes


@pytest.fixture(scope="session")
def small_system(small_setup):
    mesh, electrodes = small_setup
    return CemSystem(mesh, electrodes)


@pytest.fixture(scope="session")
def paper_setup():
    """The 432-vertex, 32-electrode configuration."""
    mesh, electrodes = build_disk_mesh(1.0, 432, 32, 0.5)
    return mesh, electrodes


@pytest.fixture(scope="session")
def spectra():
    return overlap_spectra()


@pytest.fixture(scope="session")
def patterns8():
    return adjacent_patterns(8, 1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_feasible(rng, n, t, concentration=1.0):
    """Dirichlet rows: strictly interior fraction matrices."""
    return rng.dirichlet(np.full(t, concentration), size=n)
