"""Volumetric data model, VGRID binary I/O, and elementary volume math.

A VoxelGrid is a dense axis-aligned scalar grid.  Data is held as a numpy
array of shape (nz, ny, nx) so that ``ravel()`` yields the canonical
x-fastest sample order used everywhere, including the on-disk payload.
The voxel with index (i, j, k) along (x, y, z) is centered at
``origin + (index + 0.5) * voxel_size``.

Occupancy grids hold u8 values in {0, 1}; SDF grids hold finite f32/f64
values with negative = inside.  Field grids (raw network outputs awaiting a
threshold) reuse the occupancy kind with float data; they are an in-memory
state only and are rejected by write_vgrid until thresholded.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

MAGIC = b"VGRD"
VERSION = 1

# mm^3 per cm^3
_MM3_PER_CM3 = 1000.0


class GridKind(str, Enum):
    OCCUPANCY = "occupancy"
    SDF = "sdf"


class VgridError(Exception):
    """Malformed VGRID file or a grid violating its invariants."""


@dataclass(frozen=True)
class GridMeta:
    dims: tuple[int, int, int]  # (nx, ny, nz)
    voxel_size: tuple[float, float, float]  # mm
    kind: GridKind
    flow_rate_percent: float | None = None
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)  # mm

    def __post_init__(self) -> None:
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        if len(self.voxel_size) != 3 or any(v <= 0 for v in self.voxel_size):
            raise ValueError(f"voxel_size must be strictly positive, got {self.voxel_size}")
        if self.flow_rate_percent is not None and self.flow_rate_percent < 0:
            raise ValueError("flow_rate_percent must be >= 0")

    @property
    def sample_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def voxel_volume_mm3(self) -> float:
        vx, vy, vz = self.voxel_size
        return vx * vy * vz

    def voxel_centers_1d(self, axis: int) -> np.ndarray:
        """Physical center coordinates along one axis (0=x, 1=y, 2=z)."""
        n = self.dims[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.voxel_size[axis]


@dataclass
class VoxelGrid:
    meta: GridMeta
    data: np.ndarray = field(repr=False)  # shape (nz, ny, nx)

    def __post_init__(self) -> None:
        nx, ny, nz = self.meta.dims
        if self.data.shape != (nz, ny, nx):
            raise ValueError(
                f"data shape {self.data.shape} does not match dims (nz,ny,nx)=({nz},{ny},{nx})"
            )

    def validate(self) -> None:
        """Raise VgridError if the grid violates its kind invariants."""
        if self.meta.kind is GridKind.OCCUPANCY:
            vals = np.unique(self.data)
            if not np.isin(vals, (0, 1)).all():
                raise VgridError(f"occupancy grid contains values outside {{0,1}}: {vals[:8]}")
        else:
            if not np.isfinite(self.data).all():
                raise VgridError("sdf grid contains non-finite values")

    def is_binary(self) -> bool:
        return bool(np.isin(np.unique(self.data), (0, 1)).all())

    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.data))

    def with_flow_rate(self, phi: float) -> "VoxelGrid":
        return VoxelGrid(replace(self.meta, flow_rate_percent=float(phi)), self.data)


@dataclass(frozen=True)
class WeightParams:
    density_g_per_cm3: float = 1.25  # PLA

    def __post_init__(self) -> None:
        if self.density_g_per_cm3 <= 0:
            raise ValueError("density must be > 0")


def _header_dict(meta: GridMeta, dtype: str) -> dict:
    return {
        "dims": [int(d) for d in meta.dims],
        "voxel_size_mm": [float(v) for v in meta.voxel_size],
        "origin_mm": [float(v) for v in meta.origin],
        "dtype": dtype,
        "kind": meta.kind.value,
        "flow_rate_percent": (
            None if meta.flow_rate_percent is None else float(meta.flow_rate_percent)
        ),
    }


def write_vgrid(grid: VoxelGrid, path: str | Path) -> None:
    """Write a grid in the VGRID format, bit-exactly reproducible.

    Occupancy grids are stored as u8 (values must be in {0,1}), SDF grids as
    little-endian f32.
    """
    grid.validate()
    if grid.meta.kind is GridKind.OCCUPANCY:
        payload = np.ascontiguousarray(grid.data, dtype=np.uint8)
        dtype = "u8"
    else:
        payload = np.ascontiguousarray(grid.data, dtype="<f4")
        dtype = "f32"
    header = json.dumps(_header_dict(grid.meta, dtype), separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(payload.tobytes())


def read_vgrid(path: str | Path) -> VoxelGrid:
    """Read a VGRID file; inverse of write_vgrid."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise VgridError(f"{path}: missing VGRD magic")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise VgridError(f"{path}: unsupported version {version}")
    if len(raw) < 12 + hlen:
        raise VgridError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
        dims = tuple(int(d) for d in header["dims"])
        voxel_size = tuple(float(v) for v in header["voxel_size_mm"])
        origin = tuple(float(v) for v in header["origin_mm"])
        dtype = header["dtype"]
        kind = GridKind(header["kind"])
        phi = header["flow_rate_percent"]
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise VgridError(f"{path}: corrupt header ({exc})") from exc
    if dtype == "u8":
        np_dtype, itemsize = np.uint8, 1
    elif dtype == "f32":
        np_dtype, itemsize = np.dtype("<f4"), 4
    else:
        raise VgridError(f"{path}: unknown dtype {dtype!r}")
    meta = GridMeta(
        dims=dims,
        voxel_size=voxel_size,
        kind=kind,
        flow_rate_percent=None if phi is None else float(phi),
        origin=origin,
    )
    n = meta.sample_count
    payload = raw[12 + hlen :]
    if len(payload) != n * itemsize:
        raise VgridError(
            f"{path}: payload holds {len(payload) // itemsize} samples, header promises {n}"
        )
    nx, ny, nz = dims
    data = np.frombuffer(payload, dtype=np_dtype).reshape(nz, ny, nx).copy()
    grid = VoxelGrid(meta, data)
    grid.validate()
    return grid


def threshold(grid: VoxelGrid, iso: float) -> VoxelGrid:
    """Binarize a scalar grid into an occupancy grid.

    Field samples (occupancy kind) count a voxel as material when value >= iso;
    SDF grids when value <= iso, so the zero level set itself is inside.
    """
    if not np.isfinite(grid.data).all():
        raise ValueError("threshold requires finite input samples")
    if grid.meta.kind is GridKind.SDF:
        occ = grid.data <= iso
    else:
        occ = grid.data >= iso
    meta = replace(grid.meta, kind=GridKind.OCCUPANCY)
    return VoxelGrid(meta, occ.astype(np.uint8))


def digital_weight(grid: VoxelGrid, params: WeightParams) -> float:
    """Grams of material implied by an occupancy grid: count * voxel volume * density."""
    if grid.meta.kind is not GridKind.OCCUPANCY:
        raise ValueError("digital_weight needs an occupancy grid")
    grid.validate()
    volume_cm3 = grid.occupied_count() * grid.meta.voxel_volume_mm3 / _MM3_PER_CM3
    return volume_cm3 * params.density_g_per_cm3
