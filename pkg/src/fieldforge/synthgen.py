"""Analytic printed-geometry oracle.

Generates ground-truth occupancy volumes of parametric shapes as a
deterministic function of the flow-rate percentage phi.  A calibrated print
(phi = 100) reproduces the base shape exactly; over-extrusion dilates the
surface linearly in phi, and under-extrusion below a threshold carves
periodic hatch voids.  All shapes are centered at the physical origin and
expose closed-form signed distance functions, so every voxel can be checked
against an independent brute-force count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Union

import numpy as np

from .voxvol import GridKind, GridMeta, VoxelGrid, write_vgrid

# flow rates each geometry is printed at in the source dataset convention
DEFAULT_PHIS = (45.0, 50.0, 60.0, 80.0, 100.0, 130.0, 170.0, 220.0, 280.0)


@dataclass(frozen=True)
class Sphere:
    r_mm: float

    def sdf(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.sqrt(x * x + y * y + z * z) - self.r_mm

    @property
    def tag(self) -> str:
        return f"sphere_r{self.r_mm:g}"


@dataclass(frozen=True)
class Cylinder:
    r_mm: float
    h_mm: float

    def sdf(self, x, y, z):
        return _capped_cylinder(x, y, z, self.r_mm, self.h_mm)

    @property
    def tag(self) -> str:
        return f"cylinder_r{self.r_mm:g}_h{self.h_mm:g}"


@dataclass(frozen=True)
class HexBolt:
    """Hex head at the bottom, cylindrical shaft stacked on top."""

    head_r: float  # across-flats inradius of the hex head
    head_h: float
    shaft_r: float
    shaft_h: float

    def sdf(self, x, y, z):
        total_h = self.head_h + self.shaft_h
        z_head = z - (-total_h / 2 + self.head_h / 2)
        z_shaft = z - (total_h / 2 - self.shaft_h / 2)
        head = _hex_prism(x, y, z_head, self.head_r, self.head_h / 2)
        shaft = _capped_cylinder(x, y, z_shaft, self.shaft_r, self.shaft_h)
        return np.minimum(head, shaft)

    @property
    def tag(self) -> str:
        return f"hexbolt_hr{self.head_r:g}_sr{self.shaft_r:g}"


@dataclass(frozen=True)
class GearDisk:
    """Disk with a cosine tooth profile carved into the rim."""

    r_mm: float
    h_mm: float
    n_teeth: int
    tooth_depth: float

    def sdf(self, x, y, z):
        theta = np.arctan2(y, x)
        r_eff = self.r_mm - self.tooth_depth * (1 + np.cos(self.n_teeth * theta)) / 2
        dr = np.sqrt(x * x + y * y) - r_eff
        dz = np.abs(z) - self.h_mm / 2
        return _slab_combine(dr, dz)

    @property
    def tag(self) -> str:
        return f"geardisk_r{self.r_mm:g}_t{self.n_teeth}"


@dataclass(frozen=True)
class BunnyProxy:
    """Spherical body with two thin capsule ears, the hard-to-print case."""

    body_r: float
    ear_r: float
    ear_h: float

    def sdf(self, x, y, z):
        body = np.sqrt(x * x + y * y + z * z) - self.body_r
        x_off = 0.45 * self.body_r
        z0 = 0.55 * self.body_r
        left = _capsule_z(x + x_off, y, z, z0, z0 + self.ear_h, self.ear_r)
        right = _capsule_z(x - x_off, y, z, z0, z0 + self.ear_h, self.ear_r)
        return np.minimum(body, np.minimum(left, right))

    @property
    def tag(self) -> str:
        return f"bunnyproxy_r{self.body_r:g}"


ShapeSpec = Union[Sphere, Cylinder, HexBolt, GearDisk, BunnyProxy]

_SHAPE_TYPES = {
    "sphere": Sphere,
    "cylinder": Cylinder,
    "hexbolt": HexBolt,
    "geardisk": GearDisk,
    "bunnyproxy": BunnyProxy,
}


def shape_from_config(cfg: dict) -> ShapeSpec:
    cfg = dict(cfg)
    try:
        cls = _SHAPE_TYPES[cfg.pop("type")]
    except KeyError as exc:
        raise ValueError(f"unknown or missing shape type in {cfg}") from exc
    return cls(**cfg)


def shape_to_config(spec: ShapeSpec) -> dict:
    name = next(k for k, v in _SHAPE_TYPES.items() if isinstance(spec, v))
    return {"type": name, **asdict(spec)}


def _capped_cylinder(x, y, z, r, h):
    dr = np.sqrt(x * x + y * y) - r
    dz = np.abs(z) - h / 2
    return _slab_combine(dr, dz)


def _slab_combine(dr, dz):
    outside = np.sqrt(np.maximum(dr, 0.0) ** 2 + np.maximum(dz, 0.0) ** 2)
    inside = np.minimum(np.maximum(dr, dz), 0.0)
    return outside + inside


def _hex_prism(x, y, z, r, half_h):
    # Quilez's exact hexagonal prism; r is the inradius, axis along z
    kx, ky, kz = -0.8660254037844386, 0.5, 0.5773502691896258
    px, py = np.abs(x), np.abs(y)
    t = 2.0 * np.minimum(kx * px + ky * py, 0.0)
    px = px - t * kx
    py = py - t * ky
    cx = np.clip(px, -kz * r, kz * r)
    d_hex = np.sqrt((px - cx) ** 2 + (py - r) ** 2) * np.sign(py - r)
    dz = np.abs(z) - half_h
    return _slab_combine(d_hex, dz)


def _capsule_z(x, y, z, z0, z1, r):
    zc = np.clip(z, z0, z1)
    return np.sqrt(x * x + y * y + (z - zc) ** 2) - r


@dataclass(frozen=True)
class MorphologyModel:
    """How flow rate distorts the base geometry.

    Over-extrusion dilates the surface by alpha_mm per 100% of extra flow;
    under-extrusion below void_threshold_percent carves a sinusoidal hatch
    pattern of the given period, deepening as flow drops.
    """

    alpha_mm: float = 0.6
    void_threshold_percent: float = 60.0
    void_period_mm: float = 3.0
    void_gain: float = 1.5

    def __post_init__(self) -> None:
        if self.void_period_mm <= 0:
            raise ValueError("void_period_mm must be > 0")
        if self.alpha_mm < 0 or self.void_gain < 0:
            raise ValueError("alpha_mm and void_gain must be >= 0")


def hatch(model: MorphologyModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Hatch height field in mm, >= 0, zero along the void channel centers."""
    p = model.void_period_mm
    s = np.sin(2 * np.pi * x / p) * np.sin(2 * np.pi * y / p)
    return (p / (2 * np.pi)) * (1 + s) / 2


def oracle_sdf(
    spec: ShapeSpec,
    model: MorphologyModel,
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    phi: float,
) -> np.ndarray:
    """Signed distance (mm) of the as-printed geometry at flow rate phi."""
    if phi < 0:
        raise ValueError("flow rate must be >= 0")
    d = spec.sdf(np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.asarray(z, dtype=float))
    d = d - model.alpha_mm * (phi - 100.0) / 100.0
    if phi < model.void_threshold_percent:
        carve = model.void_gain * (model.void_threshold_percent - phi) / 100.0
        d = np.maximum(d, carve - hatch(model, np.asarray(x, dtype=float), np.asarray(y, dtype=float)))
    return d


def generate_volume(
    spec: ShapeSpec, model: MorphologyModel, meta: GridMeta, phi: float
) -> VoxelGrid:
    """Rasterize the oracle at the voxel centers of `meta` into occupancy."""
    if meta.kind is not GridKind.OCCUPANCY:
        raise ValueError("generate_volume produces occupancy grids")
    xs = meta.voxel_centers_1d(0)
    ys = meta.voxel_centers_1d(1)
    zs = meta.voxel_centers_1d(2)
    z, y, x = np.meshgrid(zs, ys, xs, indexing="ij")
    occ = (oracle_sdf(spec, model, x, y, z, phi) <= 0.0).astype(np.uint8)
    shell = np.zeros_like(occ, dtype=bool)
    m = min(2, min(meta.dims))
    shell[:m], shell[-m:] = True, True
    shell[:, :m], shell[:, -m:] = True, True
    shell[:, :, :m], shell[:, :, -m:] = True, True
    if occ[shell].any():
        raise ValueError(
            f"{spec.tag} at phi={phi:g} reaches within 2 voxels of the grid boundary"
        )
    meta_out = GridMeta(
        dims=meta.dims,
        voxel_size=meta.voxel_size,
        kind=GridKind.OCCUPANCY,
        flow_rate_percent=float(phi),
        origin=meta.origin,
    )
    return VoxelGrid(meta_out, occ)


def generate_dataset(
    spec: ShapeSpec,
    model: MorphologyModel,
    meta: GridMeta,
    phis: "list[float] | tuple[float, ...]" = DEFAULT_PHIS,
    out_dir: "str | Path" = ".",
) -> dict:
    """Write one VGRID per phi plus a manifest.json; returns the manifest."""
    if len(phis) == 0:
        raise ValueError("phis must be non-empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    volumes = []
    for phi in phis:
        grid = generate_volume(spec, model, meta, phi)
        name = f"{spec.tag}_phi{phi:g}.vgrid"
        write_vgrid(grid, out / name)
        volumes.append({"path": name, "flow_rate_percent": float(phi)})
    manifest = {"shape": spec.tag, "volumes": volumes}
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_manifest(path: "str | Path") -> "list[VoxelGrid]":
    """Read every volume listed in a manifest, resolving relative paths."""
    from .voxvol import read_vgrid

    path = Path(path)
    manifest = json.loads(path.read_text(encoding="utf-8"))
    grids = []
    for entry in manifest["volumes"]:
        vp = Path(entry["path"])
        if not vp.is_absolute():
            vp = path.parent / vp
        grid = read_vgrid(vp)
        if grid.meta.flow_rate_percent is None:
            grid = grid.with_flow_rate(entry["flow_rate_percent"])
        grids.append(grid)
    return grids
