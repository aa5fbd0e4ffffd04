import numpy as np
import pytest

from graspsim import mesh as meshmod
from graspsim import sampling, shapes


@pytest.fixture(scope="session")
def cube5():
    return shapes.unit_cube_5tet()


@pytest.fixture(scope="session")
def grid3():
    return shapes.cube_grid(3)


@pytest.fixture(scope="session")
def organ():
    """Small organ-shaped mesh with four grasp regions and a fixed cap."""
    m = shapes.organ_mesh(7)
    specs = sampling.make_region_specs(4)
    return meshmod.assign_regions(
        m, specs, fixed_direction=(0.0, -1.0, 0.0), fixed_half_angle=0.9
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
