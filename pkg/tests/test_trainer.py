import numpy as np
import pytest

from fieldforge import neuralfield as nf
from fieldforge import synthgen, trainer
from fieldforge.sampler import DomainBounds, flatten
from fieldforge.trainer import (RpropState, TrainConfig, TrainingDiverged,
                                cosine_anneal, rprop_step, train)
from fieldforge.voxvol import GridKind, GridMeta


def test_cosine_anneal_frozen_values():
    # endpoints and midpoint of the decay from s to s/10
    assert cosine_anneal(50.0, 0, 100) == pytest.approx(50.0)
    assert cosine_anneal(50.0, 100, 100) == pytest.approx(5.0)
    assert cosine_anneal(50.0, 50, 100) == pytest.approx((50.0 + 5.0) / 2)
    # quarter point: final + (initial-final) * (1+cos(pi/4))/2
    expect = 5.0 + 45.0 * (1 + np.cos(np.pi / 4)) / 2
    assert cosine_anneal(50.0, 25, 100) == pytest.approx(expect, rel=1e-12)
    # monotone non-increasing
    vals = [cosine_anneal(50.0, t, 100) for t in range(101)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_rprop_growth_sequence():
    """Three same-sign steps multiply the step by 1.2 each time."""
    cfg = nf.SirenConfig(hidden_layers=1, hidden_width=2)
    net = nf.init_siren(cfg, seed=0)
    state = RpropState.for_net(net, initial_step=1e-4, step_max=50.0)

    base = net.ws[0].copy()
    grad_pos = [(np.ones_like(w), np.ones_like(b))
                for w, b in zip(net.ws, net.bs)]
    rprop_step(net, grad_pos, state)
    np.testing.assert_allclose(base - net.ws[0], 1e-4)
    rprop_step(net, grad_pos, state)
    np.testing.assert_allclose(base - net.ws[0], 1e-4 + 1.2e-4, rtol=1e-12)
    rprop_step(net, grad_pos, state)
    np.testing.assert_allclose(base - net.ws[0], 1e-4 + 1.2e-4 + 1.44e-4,
                               rtol=1e-12)


def test_rprop_flip_halves_and_skips():
    cfg = nf.SirenConfig(hidden_layers=1, hidden_width=2)
    net = nf.init_siren(cfg, seed=0)
    state = RpropState.for_net(net, initial_step=1e-4, step_max=50.0)
    grad_pos = [(np.ones_like(w), np.ones_like(b))
                for w, b in zip(net.ws, net.bs)]
    grad_neg = [(-gw, -gb) for gw, gb in grad_pos]

    rprop_step(net, grad_pos, state)
    after_first = net.ws[0].copy()
    # sign flip: update skipped, step halved
    rprop_step(net, grad_neg, state)
    np.testing.assert_array_equal(net.ws[0], after_first)
    np.testing.assert_allclose(state.steps[0][0], 0.5e-4)
    # the flip also clears the memory: next move uses the halved step
    rprop_step(net, grad_neg, state)
    np.testing.assert_allclose(after_first - net.ws[0], -0.5e-4, rtol=1e-12)


def test_rprop_respects_bounds():
    cfg = nf.SirenConfig(hidden_layers=1, hidden_width=2)
    net = nf.init_siren(cfg, seed=0)
    state = RpropState.for_net(net, initial_step=1.0, step_max=2.0)
    grad_pos = [(np.ones_like(w), np.ones_like(b))
                for w, b in zip(net.ws, net.bs)]
    for _ in range(10):
        rprop_step(net, grad_pos, state)
    assert state.steps[0][0].max() <= 2.0
    # shrink floor
    grad = grad_pos
    for _ in range(80):
        grad = [(-gw, -gb) for gw, gb in grad]
        rprop_step(net, grad, state)
    assert state.steps[0][0].min() >= trainer.STEP_MIN


def test_rprop_nonfinite_grad_raises():
    cfg = nf.SirenConfig(hidden_layers=1, hidden_width=2)
    net = nf.init_siren(cfg, seed=0)
    state = RpropState.for_net(net, initial_step=1e-4, step_max=50.0)
    bad = [(np.full_like(w, np.nan), np.zeros_like(b))
           for w, b in zip(net.ws, net.bs)]
    with pytest.raises(TrainingDiverged):
        rprop_step(net, bad, state)


def _sphere_points(n=16, phis=(80.0, 100.0, 130.0)):
    meta = GridMeta(dims=(n, n, n), voxel_size=(1.0, 1.0, 1.0),
                    kind=GridKind.OCCUPANCY, flow_rate_percent=None,
                    origin=(-n / 2 - 0.5,) * 3)
    model = synthgen.MorphologyModel()
    spec = synthgen.Sphere(r_mm=n / 4.0)
    vols = [synthgen.generate_volume(spec, model, meta, p).with_flow_rate(p)
            for p in phis]
    return flatten(vols, DomainBounds.from_meta(meta, (45.0, 280.0)))


def test_training_learns_and_is_deterministic():
    pts = _sphere_points()
    cfg = TrainConfig(epochs=25, batch_size=4096, proxies_per_step=512,
                      lam=0.01, seed=11)
    net_cfg = nf.SirenConfig(hidden_layers=2, hidden_width=32)
    net, report = train(pts, cfg, net_cfg)
    assert not report.diverged
    assert report.history[-1].mse < report.history[0].mse
    assert report.history[-1].mse < 0.05
    assert report.steps_total == len(report.history)
    assert len(report.epoch_seconds) == 25

    net2, report2 = train(pts, cfg, net_cfg)
    for a, b in zip(net.ws + net.bs, net2.ws + net2.bs):
        np.testing.assert_array_equal(a, b)
    assert [b.mse for b in report.history] == [b.mse for b in report2.history]


def test_lambda_zero_reports_zero_gdir():
    pts = _sphere_points(12, (100.0,))
    cfg = TrainConfig(epochs=2, batch_size=1024, proxies_per_step=256,
                      lam=0.0, seed=0)
    net, report = train(pts, cfg, nf.SirenConfig(hidden_layers=1,
                                                 hidden_width=16))
    assert all(b.gdir == 0.0 for b in report.history)
    assert all(b.total == b.mse for b in report.history)


def test_gdir_overhead_measured():
    pts = _sphere_points(12, (100.0,))
    cfg = TrainConfig(epochs=1, batch_size=1024, proxies_per_step=1024,
                      lam=0.01, seed=0)
    net, report = train(pts, cfg, nf.SirenConfig(hidden_layers=1,
                                                 hidden_width=16),
                        measure_overhead=True)
    assert report.gdir_overhead_fraction is not None
    assert report.gdir_overhead_fraction > -0.5  # timing noise guard


def test_divergence_restores_last_snapshot(monkeypatch):
    pts = _sphere_points(12, (100.0,))
    cfg = TrainConfig(epochs=3, batch_size=1024, proxies_per_step=128,
                      lam=0.01, seed=3)
    net_cfg = nf.SirenConfig(hidden_layers=1, hidden_width=16)

    calls = {"n": 0}
    real = nf.grad_total_loss

    def sabotage(net, coords, targets, proxies, lam):
        calls["n"] += 1
        grads, loss = real(net, coords, targets, proxies, lam)
        if calls["n"] > 4:  # poison partway through epoch 2
            grads = [(gw * np.nan, gb) for gw, gb in grads]
        return grads, loss

    monkeypatch.setattr(trainer.nf, "grad_total_loss", sabotage)
    net, report = train(pts, cfg, net_cfg)
    assert report.diverged
    # weights are finite: the poisoned update never landed
    for w in net.ws:
        assert np.isfinite(w).all()


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(lam=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(mode="volume")
    with pytest.raises(ValueError):
        TrainConfig(step_max_initial=1e-6)  # below the initial step


def test_omega_grid_search_picks_better_frequency():
    pts = _sphere_points(16, (80.0, 130.0))
    cfg = TrainConfig(epochs=2, batch_size=2048, proxies_per_step=256,
                      lam=0.0, seed=5)
    net_cfg = nf.SirenConfig(hidden_layers=1, hidden_width=16)
    best, results = trainer.omega_grid_search(
        pts, [(5.0, 5.0), (30.0, 30.0)], cfg, net_cfg,
        subsample_fraction=0.5, val_fraction=0.1)
    assert best in {(5.0, 5.0), (30.0, 30.0)}
    scores = dict(results)
    assert set(scores) == {(5.0, 5.0), (30.0, 30.0)}
    assert all(np.isfinite(v) for v in scores.values())
