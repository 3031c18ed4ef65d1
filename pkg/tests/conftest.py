"""
Shared fixtures: seeded generators, tiny architectures and synthetic cubes.
"""
import numpy as np
import pytest

from corruption.synthetic import make_synthetic_cube
from hsio.cube_store import Cube, write_cube
from network.hourglass import ArchSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_arch_2d():
    """Two-level 2D hourglass over an 8x8x4 cube."""
    return ArchSpec(variant="2d", levels=2, channels_per_level=[4, 6], skip_channels=2,
                    input_shape=(8, 8, 4))


@pytest.fixture
def tiny_arch_3d():
    """Two-level 3D hourglass over an 8x8x4 cube."""
    return ArchSpec(variant="3d", levels=2, channels_per_level=[2, 3], skip_channels=1,
                    input_shape=(8, 8, 4))


@pytest.fixture
def small_cube():
    return make_synthetic_cube(16, 16, 4, seed=3)


@pytest.fixture
def cube_file(tmp_path):
    """Write a cube to a temporary path and return the path."""
    def _write(values, name="cube.dat", data_min=0.0, data_max=1.0):
        path = str(tmp_path / name)
        write_cube(path, Cube(values=np.asarray(values, dtype=np.float64), data_min=data_min, data_max=data_max))
        return path
    return _write
