"""Sinusoidal implicit network over (x, y, z, phi) with analytic phi-derivatives.

The network is a stack of sine layers, a_l = sin(omega_l * (W_l a_{l-1}) + b_l),
followed by a final linear map with an optional sigmoid.  Note where omega
sits: it scales the matrix product but not the bias, so at zero input the
pre-activation is exactly the bias.

Besides the usual forward/backward pass, the network carries a forward-mode
tangent in the phi input direction.  That yields dF/dphi (with respect to
the *normalized* phi coordinate) in one pass, and the smoothness penalty
mean((dF/dphi)^2) is differentiated in closed form by running reverse mode
over the doubled (value, tangent) graph.  No autodiff framework is
involved; everything is explicit numpy so the arithmetic is easy to audit
and cheap to verify against finite differences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.special import expit

CHECKPOINT_MAGIC = b"SRNC"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {"<f8": np.float64, "<f4": np.float32}


@dataclass(frozen=True)
class SirenConfig:
    hidden_layers: int = 3
    hidden_width: int = 64
    omega_first: float = 30.0
    omega_hidden: float = 30.0
    final_activation: str = "sigmoid"
    in_dim: int = 4

    def __post_init__(self) -> None:
        if self.hidden_layers < 1:
            raise ValueError("need at least one sine layer")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")
        if self.omega_first <= 0 or self.omega_hidden <= 0:
            raise ValueError("omega factors must be > 0")
        if self.final_activation not in ("sigmoid", "linear"):
            raise ValueError("final_activation must be 'sigmoid' or 'linear'")
        if self.in_dim < 2:
            raise ValueError("in_dim must include at least one spatial axis and phi")


@dataclass
class SirenNet:
    """Weights as lists; entry l holds (out, in) weight and (out,) bias.

    Entries 0..hidden_layers-1 are sine layers, the last entry is the final
    linear map with a single output row.
    """

    config: SirenConfig
    ws: "list[np.ndarray]"
    bs: "list[np.ndarray]"

    @property
    def dtype(self) -> np.dtype:
        return self.ws[0].dtype

    @property
    def omegas(self) -> "list[float]":
        return [self.config.omega_first] + [self.config.omega_hidden] * (
            self.config.hidden_layers - 1)

    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.ws, self.bs))

    def copy(self) -> "SirenNet":
        return SirenNet(self.config, [w.copy() for w in self.ws],
                        [b.copy() for b in self.bs])


def init_siren(config: SirenConfig, seed: int, dtype=np.float64) -> SirenNet:
    """Principled sine-network init: the first layer spans one period across
    the input range, deeper layers keep pre-activations unit-scale after the
    omega multiplication (uniform +-sqrt(6/fan_in)/omega)."""
    rng = np.random.default_rng(seed)
    dims = [config.in_dim] + [config.hidden_width] * config.hidden_layers + [1]
    ws, bs = [], []
    for layer in range(len(dims) - 1):
        fan_in, fan_out = dims[layer], dims[layer + 1]
        if layer == 0:
            bound = 1.0 / fan_in
        else:
            bound = np.sqrt(6.0 / fan_in) / config.omega_hidden
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), size=fan_out)
        ws.append(w.astype(dtype))
        bs.append(b.astype(dtype))
    return SirenNet(config, ws, bs)


def _check_coords(net: SirenNet, coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=net.dtype)
    if coords.ndim != 2 or coords.shape[1] != net.config.in_dim:
        raise ValueError(
            f"coords must be (n, {net.config.in_dim}), got {coords.shape}")
    return coords


def _forward_cache(net: SirenNet, coords: np.ndarray, tangent: bool) -> dict:
    """Run the network, optionally with the forward-mode phi tangent.

    Cache keys: a[l] activations (a[0] is the input), c[l]/q[l]/v[l] the
    cosine, tangent matrix product and tangent per sine layer (index 1..L),
    z / u_pre the final pre-activation and its tangent, f / u the outputs.
    """
    omegas = net.omegas
    n_sine = net.config.hidden_layers
    a = [coords]
    c: "list" = [None]
    q: "list" = [None]
    v: "list" = [None]
    if tangent:
        v0 = np.zeros_like(coords)
        v0[:, net.config.in_dim - 1] = 1.0
        v[0] = v0
    for layer in range(n_sine):
        om = omegas[layer]
        t = om * (a[layer] @ net.ws[layer].T) + net.bs[layer]
        a.append(np.sin(t))
        c.append(np.cos(t))
        if tangent:
            ql = v[layer] @ net.ws[layer].T
            q.append(ql)
            v.append(om * (c[layer + 1] * ql))
        else:
            q.append(None)
            v.append(None)
    wf = net.ws[n_sine][0]
    z = a[n_sine] @ wf + net.bs[n_sine][0]
    cache = {"a": a, "c": c, "q": q, "v": v, "z": z}
    if net.config.final_activation == "sigmoid":
        sz = expit(z)
        cache["f"] = sz
        cache["sp"] = sz * (1.0 - sz)
    else:
        cache["f"] = z
        cache["sp"] = None
    if tangent:
        u_pre = v[n_sine] @ wf
        cache["u_pre"] = u_pre
        cache["u"] = cache["sp"] * u_pre if cache["sp"] is not None else u_pre
    return cache


def forward(net: SirenNet, coords: np.ndarray) -> np.ndarray:
    """Field values F at normalized coords, shape (n,)."""
    coords = _check_coords(net, coords)
    return _forward_cache(net, coords, tangent=False)["f"]


def dF_dphi(net: SirenNet, coords: np.ndarray) -> np.ndarray:
    """Derivative of F along the normalized phi axis, shape (n,)."""
    coords = _check_coords(net, coords)
    return _forward_cache(net, coords, tangent=True)["u"]


def loss_mse(net: SirenNet, coords: np.ndarray, targets: np.ndarray) -> float:
    coords = _check_coords(net, coords)
    targets = np.asarray(targets, dtype=net.dtype).reshape(-1)
    if len(targets) != len(coords):
        raise ValueError("coords and targets disagree in length")
    f = forward(net, coords)
    return float(np.mean((f - targets) ** 2))


def gdir_penalty(net: SirenNet, proxies: np.ndarray) -> float:
    """Mean squared phi-derivative over interpolation proxy points."""
    u = dF_dphi(net, proxies)
    return float(np.mean(u * u))


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    gdir: float
    lam: float

    @property
    def total(self) -> float:
        return self.mse + self.lam * self.gdir


def _backward(net: SirenNet, cache: dict, bar_f: "np.ndarray | None",
              bar_u: "np.ndarray | None") -> "list[tuple[np.ndarray, np.ndarray]]":
    """Reverse pass over the (value, tangent) graph.

    bar_f seeds the adjoint of the output F, bar_u the adjoint of the
    tangent u; either may be None.  Returns per-layer (dW, db).
    """
    omegas = net.omegas
    n_sine = net.config.hidden_layers
    a, c, q, v = cache["a"], cache["c"], cache["q"], cache["v"]
    sp = cache["sp"]
    with_tangent = bar_u is not None

    if sp is not None:
        # F = sigmoid(z), u = sp * u_pre;  d(sp)/dz = sp * (1 - 2 f)
        bar_z = np.zeros_like(cache["z"])
        if bar_f is not None:
            bar_z = bar_f * sp
        if with_tangent:
            spp = sp * (1.0 - 2.0 * cache["f"])
            bar_z = bar_z + bar_u * cache["u_pre"] * spp
            bar_u_pre = bar_u * sp
    else:
        bar_z = bar_f if bar_f is not None else np.zeros_like(cache["z"])
        if with_tangent:
            bar_u_pre = bar_u

    wf = net.ws[n_sine][0]
    g_wf = a[n_sine].T @ bar_z
    g_bf = bar_z.sum()
    bar_a = bar_z[:, None] * wf
    if with_tangent:
        g_wf = g_wf + v[n_sine].T @ bar_u_pre
        bar_v = bar_u_pre[:, None] * wf
    grads: "list[tuple[np.ndarray, np.ndarray]]" = [
        (g_wf[None, :], np.array([g_bf], dtype=net.dtype))]

    for layer in range(n_sine, 0, -1):
        om = omegas[layer - 1]
        w = net.ws[layer - 1]
        if with_tangent:
            bar_q = om * (bar_v * c[layer])
            bar_c = om * (bar_v * q[layer])
            bar_t = bar_a * c[layer] - bar_c * a[layer]
            g_w = om * (bar_t.T @ a[layer - 1]) + bar_q.T @ v[layer - 1]
            bar_v = bar_q @ w
        else:
            bar_t = bar_a * c[layer]
            g_w = om * (bar_t.T @ a[layer - 1])
        g_b = bar_t.sum(axis=0)
        bar_a = om * (bar_t @ w)
        grads.append((g_w, g_b))

    grads.reverse()
    return grads


def grad_mse(net: SirenNet, coords: np.ndarray, targets: np.ndarray):
    """(per-layer grads, mse value) of mean((F - target)^2)."""
    coords = _check_coords(net, coords)
    targets = np.asarray(targets, dtype=net.dtype).reshape(-1)
    if len(targets) != len(coords):
        raise ValueError("coords and targets disagree in length")
    cache = _forward_cache(net, coords, tangent=False)
    resid = cache["f"] - targets
    bar_f = (2.0 / len(targets)) * resid
    grads = _backward(net, cache, bar_f, None)
    return grads, float(np.mean(resid ** 2))


def grad_gdir(net: SirenNet, proxies: np.ndarray):
    """(per-layer grads, penalty value) of mean((dF/dphi)^2)."""
    proxies = _check_coords(net, proxies)
    cache = _forward_cache(net, proxies, tangent=True)
    u = cache["u"]
    bar_u = (2.0 / len(u)) * u
    grads = _backward(net, cache, None, bar_u)
    return grads, float(np.mean(u * u))


def grad_total_loss(net: SirenNet, coords: np.ndarray, targets: np.ndarray,
                    proxies: "np.ndarray | None", lam: float):
    """Combined gradient of mse + lam * gdir.

    The data term is evaluated on the batch, the smoothness term on its own
    proxy points.  Returns (grads, LossBreakdown); with lam == 0 or no
    proxies the penalty pass is skipped entirely.
    """
    g_mse, mse = grad_mse(net, coords, targets)
    if lam != 0.0 and proxies is not None and len(proxies) > 0:
        g_pen, pen = grad_gdir(net, proxies)
        grads = [(gw + lam * pw, gb + lam * pb)
                 for (gw, gb), (pw, pb) in zip(g_mse, g_pen)]
        return grads, LossBreakdown(mse=mse, gdir=pen, lam=float(lam))
    return g_mse, LossBreakdown(mse=mse, gdir=0.0, lam=float(lam))


class CheckpointError(Exception):
    """Malformed or inconsistent checkpoint file."""


def save_checkpoint(net: SirenNet, path: "str | Path") -> None:
    """Binary checkpoint: magic, version, JSON header, raw little-endian params."""
    dtype_code = "<f8" if net.dtype == np.float64 else "<f4"
    header = {
        "config": asdict(net.config),
        "layers": [{"w": list(w.shape), "b": list(b.shape)}
                   for w, b in zip(net.ws, net.bs)],
        "dtype": dtype_code,
    }
    header_bytes = json.dumps(header, separators=(",", ":"),
                              sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for w, b in zip(net.ws, net.bs):
            fh.write(np.ascontiguousarray(w, dtype=dtype_code).tobytes())
            fh.write(np.ascontiguousarray(b, dtype=dtype_code).tobytes())


def load_checkpoint(path: "str | Path") -> SirenNet:
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        return _parse_checkpoint(path, blob)
    except (KeyError, IndexError, ValueError, TypeError, struct.error,
            json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc


def _parse_checkpoint(path, blob: bytes) -> SirenNet:
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a network checkpoint (bad magic)")
    version, header_len = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    if header["dtype"] not in _DTYPE_CODES:
        raise CheckpointError(f"{path}: unknown dtype {header['dtype']!r}")
    dtype = np.dtype(header["dtype"])
    config = SirenConfig(**header["config"])
    offset = 12 + header_len
    ws, bs = [], []
    for shapes in header["layers"]:
        w_shape = tuple(shapes["w"])
        b_shape = tuple(shapes["b"])
        w_count = int(np.prod(w_shape))
        b_count = int(np.prod(b_shape))
        w = np.frombuffer(blob, dtype=dtype, count=w_count, offset=offset)
        offset += w_count * dtype.itemsize
        b = np.frombuffer(blob, dtype=dtype, count=b_count, offset=offset)
        offset += b_count * dtype.itemsize
        ws.append(w.reshape(w_shape).copy())
        bs.append(b.reshape(b_shape).copy())
    if offset != len(blob):
        raise CheckpointError(f"{path}: trailing or missing parameter bytes")
    net = SirenNet(config, ws, bs)
    expected = [net.config.in_dim] + [net.config.hidden_width] * net.config.hidden_layers
    for layer, w in enumerate(ws):
        if w.shape[1] != expected[layer]:
            raise CheckpointError(f"{path}: layer {layer} shape mismatch with config")
    return net
