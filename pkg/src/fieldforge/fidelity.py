"""Geometric fidelity metrics between volumes: slice-wise SSIM and L1.

SSIM follows the standard luminance/contrast/structure form with an 11x11
Gaussian window (sigma 1.5) and stability constants C1 = (0.01 L)^2,
C2 = (0.03 L)^2 on data range L.  Local statistics use valid-mode windows
only, so borders thinner than half a window never contribute.  Volumes are
scored per z-slice and summarized as mean and standard deviation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .voxvol import VoxelGrid


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    sigma: float = 1.5
    data_range: float = 1.0

    def __post_init__(self) -> None:
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError("window_size must be odd and >= 3")
        if self.sigma <= 0 or self.data_range <= 0:
            raise ValueError("sigma and data_range must be > 0")

    @property
    def c1(self) -> float:
        return (0.01 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (0.03 * self.data_range) ** 2


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """2D separable Gaussian, normalized to sum exactly 1."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def _local_stats(img: np.ndarray, win: np.ndarray) -> "tuple[np.ndarray, np.ndarray]":
    """Windowed mean and mean-of-squares over all valid positions."""
    view = np.lib.stride_tricks.sliding_window_view(img, win.shape)
    mu = np.einsum("ijkl,kl->ij", view, win)
    m2 = np.einsum("ijkl,kl->ij", view ** 2, win)
    return mu, m2


def ssim_2d(a: np.ndarray, b: np.ndarray,
            params: SsimParams = SsimParams()) -> float:
    """Mean structural similarity of two equally shaped 2D images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError("ssim_2d expects 2D arrays")
    if min(a.shape) < params.window_size:
        raise ValueError(
            f"image smaller than the {params.window_size}px window")
    win = gaussian_window(params.window_size, params.sigma)
    mu_a, m2_a = _local_stats(a, win)
    mu_b, m2_b = _local_stats(b, win)
    view_ab = (np.lib.stride_tricks.sliding_window_view(a, win.shape)
               * np.lib.stride_tricks.sliding_window_view(b, win.shape))
    m_ab = np.einsum("ijkl,kl->ij", view_ab, win)
    var_a = m2_a - mu_a ** 2
    var_b = m2_b - mu_b ** 2
    cov = m_ab - mu_a * mu_b
    c1, c2 = params.c1, params.c2
    ssim_map = (((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    return float(ssim_map.mean())


def ssim_volume(a: VoxelGrid, b: VoxelGrid,
                params: SsimParams = SsimParams()):
    """Per-z-slice SSIM; returns (mean, std, per-slice list).

    Values are clipped to [0, data_range] first so stray field samples
    cannot leave the similarity scale.
    """
    if a.meta.dims != b.meta.dims:
        raise ValueError("volumes disagree on dims")
    da = np.clip(a.data.astype(np.float64), 0.0, params.data_range)
    db = np.clip(b.data.astype(np.float64), 0.0, params.data_range)
    scores = [ssim_2d(da[k], db[k], params) for k in range(da.shape[0])]
    arr = np.array(scores)
    return float(arr.mean()), float(arr.std()), scores


def l1_norm(a: VoxelGrid, b: VoxelGrid) -> float:
    """Mean absolute voxel difference (0..1 for binary volumes)."""
    if a.meta.dims != b.meta.dims:
        raise ValueError("volumes disagree on dims")
    return float(np.mean(np.abs(a.data.astype(np.float64)
                                - b.data.astype(np.float64))))


@dataclass
class MetricReport:
    l1: float
    ssim_mean: float
    ssim_std: float
    ssim_per_slice: "list[float]" = field(default_factory=list)

    @property
    def l1_per_mille(self) -> float:
        """L1 scaled by 1000, the customary display unit for near-zero values."""
        return 1000.0 * self.l1

    def to_dict(self) -> dict:
        return {
            "l1": self.l1,
            "l1_per_mille": self.l1_per_mille,
            "ssim_mean": self.ssim_mean,
            "ssim_std": self.ssim_std,
            "ssim_per_slice": self.ssim_per_slice,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def compare(a: VoxelGrid, b: VoxelGrid,
            params: SsimParams = SsimParams()) -> MetricReport:
    mean, std, per_slice = ssim_volume(a, b, params)
    return MetricReport(l1=l1_norm(a, b), ssim_mean=mean, ssim_std=std,
                        ssim_per_slice=per_slice)
