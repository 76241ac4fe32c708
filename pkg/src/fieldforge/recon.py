"""Volume reconstruction from a trained field, plus derived quantities.

A reconstruction request names a flow rate and an output resolution; the
field is sampled on an inclusive [-1, 1] lattice per axis (so reconstructing
at the training dims hits exactly the training voxel centers), thresholded
into occupancy, and tagged with physical coordinates recovered from the
domain bounds.  Also here: z-slice extraction, binary PGM slice export, and
the digital weight-vs-flow curve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import neuralfield as nf
from .neuralfield import SirenNet
from .sampler import DomainBounds
from .voxvol import GridKind, GridMeta, VoxelGrid, WeightParams, digital_weight, threshold


@dataclass(frozen=True)
class ReconRequest:
    phi_percent: float
    dims: "tuple[int, int, int]"
    bounds: DomainBounds
    iso: "float | None" = None  # default 0.5 for sigmoid fields, 0.0 for linear

    def __post_init__(self) -> None:
        if any(d < 2 for d in self.dims):
            raise ValueError("each dim must be >= 2 to span [-1, 1]")
        if self.phi_percent < 0:
            raise ValueError("phi_percent must be >= 0")


def _default_iso(net: SirenNet) -> float:
    return 0.5 if net.config.final_activation == "sigmoid" else 0.0


def _lattice_meta(dims, bounds: DomainBounds, phi: float,
                  kind: GridKind) -> GridMeta:
    los = np.array([bounds.x[0], bounds.y[0], bounds.z[0]])
    his = np.array([bounds.x[1], bounds.y[1], bounds.z[1]])
    vsize = (his - los) / (np.array(dims) - 1)
    origin = los - 0.5 * vsize
    return GridMeta(dims=tuple(int(d) for d in dims),
                    voxel_size=tuple(float(v) for v in vsize),
                    kind=kind, flow_rate_percent=float(phi),
                    origin=tuple(float(o) for o in origin))


def reconstruct(net: SirenNet, request: ReconRequest) -> "tuple[VoxelGrid, VoxelGrid]":
    """Sample the field at one flow rate; returns (raw field, occupancy).

    The raw grid stores f32 field values (sigmoid activations or signed
    distances depending on the network mode); the second grid is its
    thresholded binary occupancy.  A flow rate outside the trained range
    still evaluates but warns about extrapolation.
    """
    bounds = request.bounds
    if not bounds.contains_phi(request.phi_percent):
        warnings.warn(
            f"flow rate {request.phi_percent:g}% is outside the trained range "
            f"[{bounds.phi[0]:g}, {bounds.phi[1]:g}]; extrapolating",
            stacklevel=2)
    iso = _default_iso(net) if request.iso is None else float(request.iso)
    nx, ny, nz = request.dims
    xs = np.linspace(-1.0, 1.0, nx)
    ys = np.linspace(-1.0, 1.0, ny)
    zs = np.linspace(-1.0, 1.0, nz)
    phi_n = bounds.normalize_phi(request.phi_percent)

    field = np.empty((nz, ny, nx), dtype=np.float32)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    plane = np.empty((ny * nx, 4), dtype=np.float64)
    plane[:, 0] = xx.ravel()
    plane[:, 1] = yy.ravel()
    plane[:, 3] = phi_n
    for k, zval in enumerate(zs):
        plane[:, 2] = zval
        field[k] = nf.forward(net, plane).reshape(ny, nx).astype(np.float32)

    field_kind = (GridKind.SDF if net.config.final_activation == "linear"
                  else GridKind.OCCUPANCY)
    raw = VoxelGrid(_lattice_meta(request.dims, bounds, request.phi_percent,
                                  field_kind),
                    field.astype(np.float64))
    occ = threshold(raw, iso)
    return raw, occ


def slice_z(grid: VoxelGrid, z_index: int) -> np.ndarray:
    """One horizontal slice as a (ny, nx) array."""
    nz = grid.meta.dims[2]
    if not 0 <= z_index < nz:
        raise IndexError(f"z_index {z_index} outside [0, {nz})")
    return grid.data[z_index]


def write_pgm(image: np.ndarray, path, max_val: int = 255) -> None:
    """Binary (P5) grayscale image; input values are clipped to [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("image must be 2D")
    if not 1 <= max_val <= 255:
        raise ValueError("max_val must be in [1, 255]")
    scaled = np.rint(np.clip(image, 0.0, 1.0) * max_val).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n{max_val}\n".encode("ascii"))
        fh.write(scaled.tobytes())


def weight_curve(net: SirenNet, bounds: DomainBounds, dims,
                 phis: "np.ndarray | None" = None,
                 params: WeightParams = WeightParams(),
                 iso: "float | None" = None) -> "list[tuple[float, float]]":
    """Digital weight (grams) of the reconstruction at each flow rate.

    Default sweep is 0..300% in 5% steps.  Rates outside the trained phi
    range are evaluated anyway (the warning is silenced here; sweeping past
    the range is the whole point of the curve).
    """
    if phis is None:
        phis = np.arange(0.0, 300.0 + 2.5, 5.0)
    curve = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for phi in phis:
            _, occ = reconstruct(net, ReconRequest(
                phi_percent=float(phi), dims=tuple(dims), bounds=bounds, iso=iso))
            curve.append((float(phi), digital_weight(occ, params)))
    return curve
