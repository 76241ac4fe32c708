"""Similarity metrics against a literal double-loop reference implementation."""

import numpy as np
import pytest

from fieldforge.fidelity import (MetricReport, SsimParams, compare,
                                 gaussian_window, l1_norm, ssim_2d,
                                 ssim_volume)
from fieldforge.voxvol import GridKind, GridMeta, VoxelGrid


def _ref_ssim(a, b, params):
    """Direct sliding-window SSIM, nothing vectorized."""
    w = params.window_size
    win = _ref_window(w, params.sigma)
    c1 = (0.01 * params.data_range) ** 2
    c2 = (0.03 * params.data_range) ** 2
    h, ww = a.shape
    vals = []
    for i in range(h - w + 1):
        for j in range(ww - w + 1):
            pa = a[i:i + w, j:j + w]
            pb = b[i:i + w, j:j + w]
            mu_a = (win * pa).sum()
            mu_b = (win * pb).sum()
            var_a = (win * pa * pa).sum() - mu_a**2
            var_b = (win * pb * pb).sum() - mu_b**2
            cov = (win * pa * pb).sum() - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def _ref_window(size, sigma):
    half = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - half) ** 2) / (2 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def test_window_properties():
    win = gaussian_window(11, 1.5)
    assert win.shape == (11, 11)
    assert win.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(win, win.T, atol=1e-15)
    np.testing.assert_allclose(win, _ref_window(11, 1.5), rtol=1e-12)
    assert win[5, 5] == win.max()


def test_ssim_matches_double_loop(rng):
    params = SsimParams()
    for _ in range(5):
        a = rng.random((32, 32))
        b = rng.random((32, 32))
        got = ssim_2d(a, b, params)
        want = _ref_ssim(a, b, params)
        assert got == pytest.approx(want, abs=1e-9)


def test_ssim_identity_exact(rng):
    a = rng.random((32, 32))
    assert ssim_2d(a, a) == 1.0
    # and for a constant image
    c = np.full((16, 16), 0.37)
    assert ssim_2d(c, c) == 1.0


def test_ssim_symmetry_and_range(rng):
    a = rng.random((20, 20))
    b = rng.random((20, 20))
    assert ssim_2d(a, b) == pytest.approx(ssim_2d(b, a), abs=1e-15)
    assert ssim_2d(a, b) < 1.0
    assert ssim_2d(a, 1.0 - a) < ssim_2d(a, np.clip(a + 0.01, 0, 1))


def test_ssim_shape_checks(rng):
    a = rng.random((12, 12))
    with pytest.raises(ValueError):
        ssim_2d(a, rng.random((12, 13)))
    with pytest.raises(ValueError):
        ssim_2d(rng.random(5), rng.random(5))
    with pytest.raises(ValueError):
        ssim_2d(rng.random((4, 4)), rng.random((4, 4)))  # below window size


def _grid_pair(rng, n=12):
    meta = GridMeta(dims=(n, n, n), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=None,
                    origin=(0.0, 0.0, 0.0))
    a = VoxelGrid(meta, (rng.random((n, n, n)) > 0.5).astype(np.uint8))
    b = VoxelGrid(meta, (rng.random((n, n, n)) > 0.5).astype(np.uint8))
    return a, b


def test_l1_metric_axioms(rng):
    for _ in range(10):
        a, b = _grid_pair(rng)
        c, _ = _grid_pair(rng)
        # identity, symmetry, triangle inequality
        assert l1_norm(a, a) == 0.0
        assert l1_norm(a, b) == l1_norm(b, a)
        assert l1_norm(a, c) <= l1_norm(a, b) + l1_norm(b, c) + 1e-15
        assert l1_norm(a, b) >= 0.0


def test_l1_value_oracle():
    meta = GridMeta(dims=(2, 2, 2), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=None,
                    origin=(0.0, 0.0, 0.0))
    a = VoxelGrid(meta, np.zeros((2, 2, 2), dtype=np.uint8))
    data = np.zeros((2, 2, 2), dtype=np.uint8)
    data[0, 0, 0] = 1
    data[1, 1, 1] = 1
    b = VoxelGrid(meta, data)
    assert l1_norm(a, b) == pytest.approx(2 / 8)


def test_ssim_volume_identity(rng, sphere_grid):
    mean, std, per_slice = ssim_volume(sphere_grid, sphere_grid)
    assert mean == 1.0
    assert std == 0.0
    assert len(per_slice) == sphere_grid.meta.dims[2]
    assert all(s == 1.0 for s in per_slice)


def test_compare_report(rng, sphere_grid):
    report = compare(sphere_grid, sphere_grid)
    assert isinstance(report, MetricReport)
    assert report.l1 == 0.0
    assert report.ssim_mean == 1.0
    assert report.l1_per_mille == 0.0
    doc = report.to_dict()
    assert set(doc) >= {"l1", "ssim_mean", "ssim_std"}
    assert "1.0" in report.to_json()


def test_compare_dim_mismatch(rng, sphere_grid):
    meta = GridMeta(dims=(4, 4, 4), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=None,
                    origin=(0.0, 0.0, 0.0))
    other = VoxelGrid(meta, np.zeros((4, 4, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        compare(sphere_grid, other)
