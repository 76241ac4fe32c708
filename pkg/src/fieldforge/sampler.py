"""Training-point preparation: normalization, shuffled batches, LHS proxies.

Voxel datasets are flattened into coordinate/target pairs with every input
axis mapped into [-1, 1]: spatial axes against the span of voxel centers,
phi against a configured flow-rate range.  Smoothness proxy points come
from a Latin hypercube so each training step probes the whole 4D domain
with a small, well-spread sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .voxvol import GridMeta, VoxelGrid


@dataclass(frozen=True)
class DomainBounds:
    """Physical extents (mm) of the voxel-center lattice plus the phi range."""

    x: "tuple[float, float]"
    y: "tuple[float, float]"
    z: "tuple[float, float]"
    phi: "tuple[float, float]"

    def __post_init__(self) -> None:
        for name in ("x", "y", "z", "phi"):
            lo, hi = getattr(self, name)
            if not hi > lo:
                raise ValueError(f"{name} range must have hi > lo, got ({lo}, {hi})")

    @classmethod
    def from_meta(cls, meta: GridMeta, phi_range: "tuple[float, float]") -> "DomainBounds":
        spans = []
        for axis in range(3):
            centers = meta.voxel_centers_1d(axis)
            spans.append((float(centers[0]), float(centers[-1])))
        return cls(x=spans[0], y=spans[1], z=spans[2],
                   phi=(float(phi_range[0]), float(phi_range[1])))

    def _ranges(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.phi], dtype=np.float64)

    def normalize(self, coords_mm_phi: np.ndarray) -> np.ndarray:
        """(n, 4) physical (x, y, z, phi) -> (n, 4) in [-1, 1] per axis."""
        r = self._ranges()
        lo, hi = r[:, 0], r[:, 1]
        return 2.0 * (np.asarray(coords_mm_phi, dtype=np.float64) - lo) / (hi - lo) - 1.0

    def denormalize(self, coords_unit: np.ndarray) -> np.ndarray:
        r = self._ranges()
        lo, hi = r[:, 0], r[:, 1]
        return (np.asarray(coords_unit, dtype=np.float64) + 1.0) / 2.0 * (hi - lo) + lo

    def normalize_phi(self, phi: float) -> float:
        lo, hi = self.phi
        return 2.0 * (phi - lo) / (hi - lo) - 1.0

    def contains_phi(self, phi: float) -> bool:
        return self.phi[0] <= phi <= self.phi[1]

    def to_dict(self) -> dict:
        return {"x": list(self.x), "y": list(self.y), "z": list(self.z),
                "phi": list(self.phi)}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainBounds":
        return cls(x=tuple(d["x"]), y=tuple(d["y"]), z=tuple(d["z"]),
                   phi=tuple(d["phi"]))


@dataclass
class PointSet5D:
    """Normalized training coords (n, 4) with their scalar targets (n,)."""

    coords: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        if len(self.coords) != len(self.targets):
            raise ValueError("coords/targets length mismatch")

    def __len__(self) -> int:
        return len(self.coords)


@dataclass
class PointBatch:
    coords: np.ndarray
    targets: np.ndarray


def flatten(volumes: "list[VoxelGrid]", bounds: DomainBounds) -> PointSet5D:
    """Stack every voxel of every volume into normalized training pairs.

    Each volume must carry a flow-rate tag and all volumes must share one
    grid geometry.  Occupancy targets come out as 0/1 floats, SDF targets
    as-is.  Point count is exactly sum(nx*ny*nz).
    """
    if not volumes:
        raise ValueError("need at least one volume")
    ref = volumes[0].meta
    coords_list, targets_list = [], []
    for vol in volumes:
        meta = vol.meta
        if meta.flow_rate_percent is None:
            raise ValueError("volume is missing its flow-rate tag")
        if (meta.dims != ref.dims or meta.voxel_size != ref.voxel_size
                or meta.origin != ref.origin):
            raise ValueError("volumes disagree on grid geometry")
        zz, yy, xx = np.meshgrid(
            meta.voxel_centers_1d(2), meta.voxel_centers_1d(1),
            meta.voxel_centers_1d(0), indexing="ij")
        n = xx.size
        raw = np.empty((n, 4), dtype=np.float64)
        raw[:, 0] = xx.ravel()
        raw[:, 1] = yy.ravel()
        raw[:, 2] = zz.ravel()
        raw[:, 3] = meta.flow_rate_percent
        coords_list.append(bounds.normalize(raw))
        targets_list.append(vol.data.ravel().astype(np.float64))
    return PointSet5D(np.concatenate(coords_list), np.concatenate(targets_list))


def batches(points: PointSet5D, batch_size: int, seed: int) -> Iterator[PointBatch]:
    """Seeded shuffle, then contiguous chunks; the tail batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    perm = np.random.default_rng(seed).permutation(len(points))
    for start in range(0, len(points), batch_size):
        idx = perm[start:start + batch_size]
        yield PointBatch(points.coords[idx], points.targets[idx])


def lhs_proxies(count: int, seed: "int | list[int]") -> np.ndarray:
    """Latin hypercube sample of (count, 4) points in [-1, 1]^4.

    Per axis: shuffle the `count` strata, then place one point uniformly
    inside each stratum, so every axis is evenly covered at resolution
    1/count.  `seed` is anything ``np.random.default_rng`` accepts.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty((count, 4), dtype=np.float64)
    for axis in range(4):
        strata = rng.permutation(count)
        offsets = rng.random(count)
        out[:, axis] = (strata + offsets) / count * 2.0 - 1.0
    return out
