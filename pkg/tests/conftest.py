import pytest

from deformspde.deformation import DeformParams
from deformspde.fem import build_model
from deformspde.mesh import build_mesh
from helpers import SQRT8, constant_range, square


@pytest.fixture(scope="session")
def small_mesh():
    """Unit-range square mesh, cheap enough for many tests."""
    return build_mesh(square(3.0), constant_range(SQRT8), extension_factor=1.0)


@pytest.fixture(scope="session")
def small_model(small_mesh):
    return build_model(small_mesh, DeformParams.identity(0, (3.0, 3.0), alpha=2))
