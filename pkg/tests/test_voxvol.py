import numpy as np
import pytest

from fieldforge.voxvol import (GridKind, GridMeta, VgridError, VoxelGrid,
                               WeightParams, digital_weight, read_vgrid,
                               threshold, write_vgrid)


def _occ_meta(dims=(4, 3, 2), phi=100.0):
    return GridMeta(dims=dims, voxel_size=(0.5, 0.5, 0.25),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=phi,
                    origin=(-1.0, -0.75, -0.25))


def test_roundtrip_occupancy_bitexact(tmp_path):
    meta = _occ_meta()
    data = (np.arange(24).reshape(2, 3, 4) % 2).astype(np.uint8)
    path = tmp_path / "g.vgrid"
    write_vgrid(VoxelGrid(meta, data), path)
    back = read_vgrid(path)
    assert back.meta == meta
    assert back.data.dtype == np.uint8
    np.testing.assert_array_equal(back.data, data)
    # a second write of the read-back grid is byte-identical
    path2 = tmp_path / "g2.vgrid"
    write_vgrid(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_roundtrip_sdf_f32(tmp_path):
    meta = GridMeta(dims=(3, 3, 3), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.SDF, flow_rate_percent=None,
                    origin=(0.0, 0.0, 0.0))
    data = np.linspace(-2, 2, 27, dtype=np.float32).reshape(3, 3, 3)
    path = tmp_path / "s.vgrid"
    write_vgrid(VoxelGrid(meta, data), path)
    back = read_vgrid(path)
    assert back.meta.kind is GridKind.SDF
    assert back.meta.flow_rate_percent is None
    np.testing.assert_array_equal(back.data, data)


def test_read_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.vgrid"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(VgridError):
        read_vgrid(path)


def test_read_rejects_truncated_payload(tmp_path):
    meta = _occ_meta()
    data = np.zeros((2, 3, 4), dtype=np.uint8)
    path = tmp_path / "t.vgrid"
    write_vgrid(VoxelGrid(meta, data), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(VgridError):
        read_vgrid(path)


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        VoxelGrid(_occ_meta(), np.zeros((4, 3, 2), dtype=np.uint8))


def test_occupancy_validation_rejects_other_values():
    grid = VoxelGrid(_occ_meta(), np.full((2, 3, 4), 7, dtype=np.uint8))
    with pytest.raises(VgridError):
        grid.validate()


def test_voxel_centers():
    meta = _occ_meta()
    xs = meta.voxel_centers_1d(0)
    # center of voxel i sits half a cell past the origin
    np.testing.assert_allclose(xs, -1.0 + (np.arange(4) + 0.5) * 0.5)


def test_threshold_occupancy_and_sdf():
    meta = _occ_meta()
    field = VoxelGrid(meta, np.linspace(0, 1, 24).reshape(2, 3, 4))
    occ = threshold(field, 0.5)
    assert occ.meta.kind is GridKind.OCCUPANCY
    np.testing.assert_array_equal(occ.data, (field.data >= 0.5).astype(np.uint8))

    sdf_meta = GridMeta(dims=(4, 3, 2), voxel_size=(0.5, 0.5, 0.25),
                        kind=GridKind.SDF, flow_rate_percent=100.0,
                        origin=(-1.0, -0.75, -0.25))
    sdf = VoxelGrid(sdf_meta, np.linspace(-1, 1, 24).reshape(2, 3, 4))
    inside = threshold(sdf, 0.0)
    np.testing.assert_array_equal(inside.data, (sdf.data <= 0.0).astype(np.uint8))


def test_threshold_rejects_nonfinite():
    meta = _occ_meta()
    data = np.zeros((2, 3, 4))
    data[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        threshold(VoxelGrid(meta, data), 0.5)


def test_digital_weight_oracle():
    # 10 voxels of 2x2x2 mm at density 1.25 g/cm3: 10 * 8 mm3 = 0.08 cm3
    meta = GridMeta(dims=(5, 2, 1), voxel_size=(2.0, 2.0, 2.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=100.0,
                    origin=(0.0, 0.0, 0.0))
    data = np.ones((1, 2, 5), dtype=np.uint8)
    grams = digital_weight(VoxelGrid(meta, data), WeightParams())
    assert grams == pytest.approx(0.08 * 1.25, rel=1e-12)


def test_digital_weight_rejects_sdf():
    meta = GridMeta(dims=(2, 2, 2), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.SDF, flow_rate_percent=None,
                    origin=(0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        digital_weight(VoxelGrid(meta, np.zeros((2, 2, 2))), WeightParams())
