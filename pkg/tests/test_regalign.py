import numpy as np
import pytest

from fieldforge import regalign, synthgen
from fieldforge.regalign import (CpdConfig, DepthMap, RigidTransform2p5D,
                                 cpd_rigid_z, extract_depth_map, fit_plane,
                                 level_volume, surface_points)
from fieldforge.voxvol import GridKind, GridMeta, VoxelGrid


def _hex_grid(n=32):
    meta = GridMeta(dims=(n, n, n), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=100.0,
                    origin=(-n / 2 - 0.5,) * 3)
    spec = synthgen.HexBolt(head_r=8.0, head_h=6.0, shaft_r=4.0, shaft_h=10.0)
    return synthgen.generate_volume(spec, synthgen.MorphologyModel(), meta, 100.0)


def test_transform_algebra():
    t = RigidTransform2p5D(2.0, -1.5, np.deg2rad(30.0))
    pts = np.random.default_rng(0).normal(size=(20, 3))
    moved = t.apply(pts)
    # z untouched
    np.testing.assert_array_equal(moved[:, 2], pts[:, 2])
    back = t.inverse().apply(moved)
    np.testing.assert_allclose(back, pts, atol=1e-12)
    # matrix form agrees with apply
    m = t.matrix()
    hom = np.c_[pts, np.ones(len(pts))]
    np.testing.assert_allclose((hom @ m.T)[:, :3], moved, atol=1e-12)


def test_surface_points_are_boundary_voxels(sphere_grid):
    pts = surface_points(sphere_grid, max_points=10_000, seed=0)
    r = np.linalg.norm(pts, axis=1)
    # boundary voxel centers of an r=8 sphere live within one voxel of r
    assert r.min() > 6.5
    assert r.max() < 8.5
    # interior must be excluded: a solid r=8 sphere has ~2000 surface voxels
    assert len(pts) < 2500


def test_cpd_recovers_rigid_motion_clean():
    grid = _hex_grid()
    true = RigidTransform2p5D(2.0, -1.5, np.deg2rad(7.0))
    src = surface_points(grid, max_points=1500, seed=3)
    tgt = true.apply(surface_points(grid, max_points=1500, seed=4))
    result = cpd_rigid_z(src, tgt, CpdConfig(seed=5))
    assert result.converged
    got = result.transform
    assert abs(got.tx_mm - 2.0) < 0.05
    assert abs(got.ty_mm + 1.5) < 0.05
    assert abs(np.rad2deg(got.theta_z_rad) - 7.0) < 0.1


def test_cpd_robust_to_outliers():
    rng = np.random.default_rng(11)
    grid = _hex_grid()
    true = RigidTransform2p5D(2.0, -1.5, np.deg2rad(7.0))
    src = surface_points(grid, max_points=1200, seed=3)
    tgt = true.apply(surface_points(grid, max_points=1200, seed=4))
    junk = rng.uniform(-16, 16, size=(len(tgt) // 5, 3))
    tgt = np.vstack([tgt, junk])
    result = cpd_rigid_z(src, tgt, CpdConfig(outlier_w=0.25, seed=5))
    got = result.transform
    assert abs(got.tx_mm - 2.0) < 0.2
    assert abs(got.ty_mm + 1.5) < 0.2
    assert abs(np.rad2deg(got.theta_z_rad) - 7.0) < 0.5


def test_cpd_loglik_monotone():
    grid = _hex_grid(24)
    true = RigidTransform2p5D(1.0, 0.5, np.deg2rad(4.0))
    src = surface_points(grid, max_points=600, seed=0)
    tgt = true.apply(surface_points(grid, max_points=600, seed=1))
    result = cpd_rigid_z(src, tgt, CpdConfig(seed=2))
    ll = result.log_likelihood
    assert len(ll) == result.iterations
    diffs = np.diff(ll)
    assert (diffs >= -1e-9).all()


def test_depth_map_first_hit_from_bottom():
    # flat slab occupying z indices [3, 5] -> every column reads 3
    meta = GridMeta(dims=(6, 5, 8), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=None,
                    origin=(0.0, 0.0, 0.0))
    occ = np.zeros((8, 5, 6), dtype=np.uint8)
    occ[3:6] = 1
    depth = extract_depth_map(VoxelGrid(meta, occ))
    assert depth.coverage == 1.0
    np.testing.assert_array_equal(depth.values, np.full((5, 6), 3.0))

    # empty columns carry the sentinel
    occ[:, 0, 0] = 0
    depth = extract_depth_map(VoxelGrid(meta, occ))
    assert np.isnan(depth.values[0, 0])
    assert depth.coverage == pytest.approx(29 / 30)


def test_depth_map_and_plane_fit():
    # a floating slab whose *bottom* surface is z = 0.05x + 0.02y + 3
    n = 40
    meta = GridMeta(dims=(n, n, 24), voxel_size=(0.5, 0.5, 0.5),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=None,
                    origin=(-10.25, -10.25, -0.25))
    xs = meta.voxel_centers_1d(0)
    ys = meta.voxel_centers_1d(1)
    zs = meta.voxel_centers_1d(2)
    zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
    bottom = 0.05 * xx + 0.02 * yy + 3.0
    occ = ((zz >= bottom) & (zz <= bottom + 4.0)).astype(np.uint8)
    grid = VoxelGrid(meta, occ)

    depth = extract_depth_map(grid)
    assert isinstance(depth, DepthMap)
    assert depth.coverage == 1.0

    plane = fit_plane(depth, meta)
    # oracle normal for z = ax + by + c
    a, b = 0.05, 0.02
    norm = np.array([-a, -b, 1.0]) / np.sqrt(a * a + b * b + 1)
    np.testing.assert_allclose(plane.normal, norm, atol=2e-2)
    assert plane.tilt_rad == pytest.approx(np.arccos(norm[2]), abs=2e-2)
    # quantization limits the fit, residual stays under half a voxel
    assert plane.rms_residual_mm < 0.25


def test_plane_fit_exact_inputs():
    meta = GridMeta(dims=(10, 10, 10), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=None,
                    origin=(0.0, 0.0, 0.0))
    # depth index 2 everywhere -> physical plane z = 2.5, normal +z, no tilt
    plane = fit_plane(DepthMap(np.full((10, 10), 2.0)), meta)
    np.testing.assert_allclose(plane.normal, (0, 0, 1), atol=1e-12)
    assert plane.offset_mm == pytest.approx(2.5, abs=1e-12)
    assert plane.rms_residual_mm == pytest.approx(0.0, abs=1e-12)
    assert plane.tilt_rad == pytest.approx(0.0, abs=1e-9)

    # noiseless tilted plane built directly in index space
    ii = np.arange(10)
    vals = np.broadcast_to(np.tan(np.deg2rad(5.0)) * (ii + 0.5) - 0.5,
                           (10, 10)).copy()
    plane = fit_plane(DepthMap(vals), meta)
    assert plane.tilt_rad == pytest.approx(np.deg2rad(5.0), abs=1e-6)

    with pytest.raises(ValueError):
        bad = np.full((10, 10), np.nan)
        bad[0, 0] = 1.0
        bad[0, 1] = 2.0
        fit_plane(DepthMap(bad), meta)


def test_leveling_flattens_tilt():
    n = 48
    meta = GridMeta(dims=(n, n, 32), voxel_size=(0.5, 0.5, 0.5),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=None,
                    origin=(-12.25, -12.25, -0.25))
    xs = meta.voxel_centers_1d(0)
    ys = meta.voxel_centers_1d(1)
    zs = meta.voxel_centers_1d(2)
    zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
    tilt = np.tan(np.deg2rad(5.0))
    bottom = tilt * xx + 4.0
    occ = ((zz >= bottom) & (zz <= bottom + 6.0)).astype(np.uint8)
    grid = VoxelGrid(meta, occ)

    plane = fit_plane(extract_depth_map(grid), meta)
    assert np.rad2deg(plane.tilt_rad) == pytest.approx(5.0, abs=0.3)

    leveled = level_volume(grid, plane)
    plane2 = fit_plane(extract_depth_map(leveled), meta)
    assert np.rad2deg(plane2.tilt_rad) < 0.5
    # the leveled bottom surface sits at z = 0 (depth just above origin)
    d2 = extract_depth_map(leveled)
    med = np.nanmedian(d2.values)
    z_surface = meta.origin[2] + (med + 0.5) * meta.voxel_size[2]
    assert abs(z_surface) <= meta.voxel_size[2]


def test_subsample_deterministic():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(5000, 3))
    a = regalign.subsample_points(pts, 100, seed=42)
    b = regalign.subsample_points(pts, 100, seed=42)
    np.testing.assert_array_equal(a, b)
    c = regalign.subsample_points(pts, 100, seed=43)
    assert not np.array_equal(a, c)
    # requesting more than available returns all points
    d = regalign.subsample_points(pts[:50], 100, seed=0)
    assert len(d) == 50
