import numpy as np
import pytest

from fieldforge import synthgen
from fieldforge.voxvol import GridKind, GridMeta, VoxelGrid


@pytest.fixture
def sphere_meta():
    return GridMeta(dims=(32, 32, 32), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=100.0,
                    origin=(-16.5, -16.5, -16.5))


@pytest.fixture
def sphere_grid(sphere_meta):
    """r=8mm sphere at nominal flow, centered in a 32mm cube."""
    spec = synthgen.Sphere(r_mm=8.0)
    return synthgen.generate_volume(spec, synthgen.MorphologyModel(),
                                    sphere_meta, 100.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_grid(dims, data, kind=GridKind.OCCUPANCY, voxel=1.0, phi=100.0):
    nx, ny, nz = dims
    meta = GridMeta(dims=dims, voxel_size=(voxel,) * 3, kind=kind,
                    flow_rate_percent=phi,
                    origin=(-voxel * nx / 2 - 0.5, -voxel * ny / 2 - 0.5,
                            -voxel * nz / 2 - 0.5))
    return VoxelGrid(meta, data)
