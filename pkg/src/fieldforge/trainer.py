"""Training loop: sign-based resilient updates with an annealed step ceiling.

The optimizer is the classic backprop-free-of-magnitudes scheme: each
parameter keeps its own step size, grown by 1.2 while the gradient sign
holds, halved on a sign flip (skipping that update and suppressing the next
adaptation).  Only gradient signs matter, which tolerates the wildly
different gradient scales of sine networks.  A cosine schedule shrinks the
per-parameter step ceiling to a tenth of its initial value over the run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import neuralfield as nf
from .neuralfield import LossBreakdown, SirenConfig, SirenNet
from .sampler import PointSet5D, batches, lhs_proxies

ETA_PLUS = 1.2
ETA_MINUS = 0.5
STEP_MIN = 1e-8


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; the returned net holds the last epoch snapshot."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 50000
    proxies_per_step: int = 50000
    lam: float = 1e-2
    lr: float = 1e-4
    step_max_initial: float = 50.0
    anneal: bool = True
    seed: int = 0
    mode: str = "occupancy"

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.step_max_initial < self.lr:
            raise ValueError("step_max_initial must be >= lr")
        if self.mode not in ("occupancy", "sdf"):
            raise ValueError("mode must be 'occupancy' or 'sdf'")


def cosine_anneal(initial: float, step: int, total_steps: int) -> float:
    """Half-cosine decay from `initial` down to `initial / 10`."""
    if total_steps <= 0:
        raise ValueError("total_steps must be > 0")
    final = initial / 10.0
    frac = min(max(step / total_steps, 0.0), 1.0)
    return final + (initial - final) * (1.0 + np.cos(np.pi * frac)) / 2.0


@dataclass
class RpropState:
    steps: "list[tuple[np.ndarray, np.ndarray]]"
    prev_signs: "list[tuple[np.ndarray, np.ndarray]]"
    step_max: float

    @classmethod
    def for_net(cls, net: SirenNet, initial_step: float,
                step_max: float) -> "RpropState":
        steps = [(np.full_like(w, initial_step), np.full_like(b, initial_step))
                 for w, b in zip(net.ws, net.bs)]
        signs = [(np.zeros_like(w), np.zeros_like(b))
                 for w, b in zip(net.ws, net.bs)]
        return cls(steps=steps, prev_signs=signs, step_max=step_max)


def _rprop_update(param, grad, step, prev_sign, step_max):
    if not np.all(np.isfinite(grad)):
        raise TrainingDiverged("non-finite gradient encountered")
    sign = np.sign(grad)
    prod = sign * prev_sign
    grew = prod > 0.0
    flipped = prod < 0.0
    step[grew] = np.minimum(step[grew] * ETA_PLUS, step_max)
    step[flipped] = np.maximum(step[flipped] * ETA_MINUS, STEP_MIN)
    np.clip(step, STEP_MIN, step_max, out=step)
    move_sign = np.where(flipped, 0.0, sign)  # skip the update after a flip
    param -= move_sign * step
    prev_sign[...] = move_sign


def rprop_step(net: SirenNet, grads, state: RpropState) -> None:
    """One in-place resilient update of every parameter tensor."""
    for layer in range(len(net.ws)):
        _rprop_update(net.ws[layer], grads[layer][0], state.steps[layer][0],
                      state.prev_signs[layer][0], state.step_max)
        _rprop_update(net.bs[layer], grads[layer][1], state.steps[layer][1],
                      state.prev_signs[layer][1], state.step_max)


@dataclass
class TrainReport:
    history: "list[LossBreakdown]" = field(default_factory=list)
    epoch_seconds: "list[float]" = field(default_factory=list)
    steps_total: int = 0
    diverged: bool = False
    gdir_overhead_fraction: "float | None" = None

    @property
    def final_loss(self) -> "LossBreakdown | None":
        return self.history[-1] if self.history else None

    def epoch_mean_total(self, steps_per_epoch: int) -> "list[float]":
        out = []
        for e in range(len(self.epoch_seconds)):
            chunk = self.history[e * steps_per_epoch:(e + 1) * steps_per_epoch]
            if chunk:
                out.append(float(np.mean([b.total for b in chunk])))
        return out


def train(points: PointSet5D, config: TrainConfig, net_config: SirenConfig,
          measure_overhead: bool = False) -> "tuple[SirenNet, TrainReport]":
    """Fit a network to flattened voxel samples.

    Deterministic for a fixed (points, config, net_config): the net init,
    epoch shuffles and per-step proxy draws all derive from config.seed.
    On divergence the last epoch-boundary snapshot is restored and the
    report is marked; callers decide whether that is fatal.
    """
    net, report = _train_once(points, config, net_config)
    if measure_overhead and config.lam != 0.0:
        t0 = time.perf_counter()
        _train_once(points, _with_lam(config, 0.0), net_config)
        plain = time.perf_counter() - t0
        full = sum(report.epoch_seconds)
        if plain > 0:
            report.gdir_overhead_fraction = (full - plain) / plain
    return net, report


def _with_lam(config: TrainConfig, lam: float) -> TrainConfig:
    return TrainConfig(epochs=config.epochs, batch_size=config.batch_size,
                       proxies_per_step=config.proxies_per_step, lam=lam,
                       lr=config.lr, step_max_initial=config.step_max_initial,
                       anneal=config.anneal, seed=config.seed, mode=config.mode)


def _train_once(points: PointSet5D, config: TrainConfig,
                net_config: SirenConfig) -> "tuple[SirenNet, TrainReport]":
    net = nf.init_siren(net_config, seed=_sub_seed(config.seed, 0))
    state = RpropState.for_net(net, initial_step=config.lr,
                               step_max=config.step_max_initial)
    steps_per_epoch = -(-len(points) // config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    report = TrainReport()
    snapshot = net.copy()
    global_step = 0
    for epoch in range(config.epochs):
        t_epoch = time.perf_counter()
        for batch in batches(points, config.batch_size,
                             seed=_sub_seed(config.seed, 1, epoch)):
            if config.anneal:
                state.step_max = cosine_anneal(config.step_max_initial,
                                               global_step, total_steps)
            proxies = None
            if config.lam != 0.0 and config.proxies_per_step > 0:
                proxies = lhs_proxies(config.proxies_per_step,
                                      seed=[config.seed, 2, global_step])
            try:
                grads, breakdown = nf.grad_total_loss(
                    net, batch.coords, batch.targets, proxies, config.lam)
                if not np.isfinite(breakdown.total):
                    raise TrainingDiverged(
                        f"loss became non-finite at step {global_step}")
                rprop_step(net, grads, state)
            except TrainingDiverged:
                report.diverged = True
                report.epoch_seconds.append(time.perf_counter() - t_epoch)
                return snapshot, report
            report.history.append(breakdown)
            report.steps_total += 1
            global_step += 1
        report.epoch_seconds.append(time.perf_counter() - t_epoch)
        snapshot = net.copy()
    return net, report


def _sub_seed(seed: int, stream: int, index: int = 0) -> "list[int]":
    return [seed, stream, index]


def omega_grid_search(points: PointSet5D, candidates, config: TrainConfig,
                      net_config: SirenConfig, subsample_fraction: float = 0.1,
                      val_fraction: float = 0.01):
    """Short-run search over (omega_first, omega_hidden) pairs.

    Trains each candidate on a seeded subsample and scores plain MSE on a
    held-out slice.  Returns (best_pair, results) where results is a list of
    ((omega_first, omega_hidden), val_mse) in candidate order.  Ties go to
    the smaller omegas, so duplicate candidates behave predictably.
    """
    if not candidates:
        raise ValueError("need at least one omega candidate")
    if not 0.0 < subsample_fraction <= 1.0 or not 0.0 < val_fraction < 1.0:
        raise ValueError("fractions must be in (0, 1]")
    rng = np.random.default_rng(_sub_seed(config.seed, 4))
    perm = rng.permutation(len(points))
    n_train = max(1, int(len(points) * subsample_fraction))
    n_val = max(1, int(len(points) * val_fraction))
    train_idx = perm[:n_train]
    val_idx = perm[n_train:n_train + n_val]
    sub = PointSet5D(points.coords[train_idx], points.targets[train_idx])
    val = PointSet5D(points.coords[val_idx], points.targets[val_idx])

    results = []
    for pair in candidates:
        om_first, om_hidden = (float(pair[0]), float(pair[1]))
        cand_cfg = SirenConfig(
            hidden_layers=net_config.hidden_layers,
            hidden_width=net_config.hidden_width,
            omega_first=om_first, omega_hidden=om_hidden,
            final_activation=net_config.final_activation,
            in_dim=net_config.in_dim)
        net, _ = _train_once(sub, config, cand_cfg)
        results.append(((om_first, om_hidden),
                        nf.loss_mse(net, val.coords, val.targets)))
    best_pair = min(results, key=lambda r: (r[1], r[0]))[0]
    return best_pair, results
