import numpy as np
import pytest

from fieldforge import neuralfield as nf
from fieldforge import recon, synthgen
from fieldforge.recon import ReconRequest, reconstruct, slice_z, weight_curve, write_pgm
from fieldforge.sampler import DomainBounds
from fieldforge.trainer import TrainConfig, train
from fieldforge.sampler import flatten
from fieldforge.voxvol import GridKind, GridMeta, WeightParams, digital_weight


def _bounds():
    return DomainBounds(x=(-8.0, 8.0), y=(-8.0, 8.0), z=(-8.0, 8.0),
                        phi=(45.0, 280.0))


def _constant_net(value, final="sigmoid"):
    """A head-only constant field: zero final weights, bias = logit(value)."""
    cfg = nf.SirenConfig(hidden_layers=1, hidden_width=4,
                         final_activation=final)
    net = nf.init_siren(cfg, seed=0)
    net.ws[-1][...] = 0.0
    if final == "sigmoid":
        net.bs[-1][...] = np.log(value / (1 - value))
    else:
        net.bs[-1][...] = value
    return net


def test_lattice_matches_voxel_centers():
    # a reconstruction at the training dims samples exactly the voxel centers
    n = 16
    meta = GridMeta(dims=(n, n, n), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=None,
                    origin=(-n / 2 - 0.5,) * 3)
    bounds = DomainBounds.from_meta(meta, (45.0, 280.0))
    raw, occ = reconstruct(_constant_net(0.9),
                           ReconRequest(phi_percent=100.0, dims=(n, n, n),
                                        bounds=bounds))
    np.testing.assert_allclose(occ.meta.voxel_centers_1d(0),
                               meta.voxel_centers_1d(0), atol=1e-12)
    np.testing.assert_allclose(occ.meta.origin, meta.origin, atol=1e-12)
    np.testing.assert_allclose(occ.meta.voxel_size, meta.voxel_size,
                               atol=1e-12)


def test_constant_field_thresholds():
    raw, occ = reconstruct(_constant_net(0.9),
                           ReconRequest(phi_percent=100.0, dims=(8, 8, 8),
                                        bounds=_bounds()))
    assert occ.meta.kind is GridKind.OCCUPANCY
    assert occ.data.all()
    np.testing.assert_allclose(raw.data, 0.9, atol=1e-12)

    raw, occ = reconstruct(_constant_net(0.2),
                           ReconRequest(phi_percent=100.0, dims=(8, 8, 8),
                                        bounds=_bounds()))
    assert not occ.data.any()


def test_linear_head_yields_sdf_kind():
    raw, occ = reconstruct(_constant_net(-0.5, final="linear"),
                           ReconRequest(phi_percent=100.0, dims=(6, 6, 6),
                                        bounds=_bounds()))
    assert raw.meta.kind is GridKind.SDF
    assert occ.data.all()  # negative SDF everywhere = inside


def test_extrapolation_warns():
    net = _constant_net(0.9)
    with pytest.warns(UserWarning):
        reconstruct(net, ReconRequest(phi_percent=400.0, dims=(4, 4, 4),
                                      bounds=_bounds()))


def test_reconstructs_trained_sphere():
    n = 16
    meta = GridMeta(dims=(n, n, n), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=None,
                    origin=(-n / 2 - 0.5,) * 3)
    model = synthgen.MorphologyModel()
    spec = synthgen.Sphere(r_mm=4.0)
    vols = [synthgen.generate_volume(spec, model, meta, p).with_flow_rate(p)
            for p in (80.0, 100.0, 130.0)]
    bounds = DomainBounds.from_meta(meta, (45.0, 280.0))
    pts = flatten(vols, bounds)
    net, report = train(pts, TrainConfig(epochs=40, batch_size=4096,
                                         proxies_per_step=512, lam=0.01,
                                         seed=2),
                        nf.SirenConfig(hidden_layers=2, hidden_width=32))
    raw, occ = reconstruct(net, ReconRequest(phi_percent=100.0, dims=(n, n, n),
                                             bounds=bounds))
    agreement = (occ.data == vols[1].data).mean()
    assert agreement > 0.95


def test_slice_and_pgm(tmp_path):
    raw, occ = reconstruct(_constant_net(0.9),
                           ReconRequest(phi_percent=100.0, dims=(6, 5, 4),
                                        bounds=_bounds()))
    img = slice_z(occ, 2)
    assert img.shape == (5, 6)
    with pytest.raises(IndexError):
        slice_z(occ, 4)
    path = tmp_path / "s.pgm"
    write_pgm(img.astype(np.float64), path)
    blob = path.read_bytes()
    assert blob.startswith(b"P5\n6 5\n255\n")
    assert blob[len(b"P5\n6 5\n255\n"):] == b"\xff" * 30


def test_weight_curve_counts_and_values():
    net = _constant_net(0.9)
    bounds = _bounds()
    curve = weight_curve(net, bounds, (8, 8, 8))
    assert len(curve) == 61
    assert curve[0][0] == 0.0 and curve[-1][0] == 300.0
    # constant-on field fills the whole box: 16mm cube at 2mm voxels
    raw, occ = reconstruct(net, ReconRequest(phi_percent=100.0, dims=(8, 8, 8),
                                             bounds=bounds))
    expect = digital_weight(occ, WeightParams())
    assert curve[30][1] == pytest.approx(expect, rel=1e-12)

    empty = weight_curve(_constant_net(0.1), bounds, (8, 8, 8))
    assert all(g == 0.0 for _, g in empty)
