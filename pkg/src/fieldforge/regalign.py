"""Scan registration: probabilistic point-set alignment and bed leveling.

Two jobs live here.  First, aligning a scanned part to its reference pose
with an EM point-set registration constrained to the motions a part on a
print bed can actually have: rotation about Z plus translation in X/Y (Z
translation stays zero).  Second, leveling: fit a plane to the bed surface
of a scan and resample the volume so that plane becomes z = 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .voxvol import GridKind, GridMeta, VoxelGrid


@dataclass(frozen=True)
class RigidTransform2p5D:
    """Rotation about Z by theta_z, then translation (tx, ty, 0)."""

    tx_mm: float
    ty_mm: float
    theta_z_rad: float

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.theta_z_rad), np.sin(self.theta_z_rad)
        m = np.eye(4)
        m[0, 0], m[0, 1] = c, -s
        m[1, 0], m[1, 1] = s, c
        m[0, 3], m[1, 3] = self.tx_mm, self.ty_mm
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        c, s = np.cos(self.theta_z_rad), np.sin(self.theta_z_rad)
        out = np.empty_like(points)
        out[:, 0] = c * points[:, 0] - s * points[:, 1] + self.tx_mm
        out[:, 1] = s * points[:, 0] + c * points[:, 1] + self.ty_mm
        out[:, 2] = points[:, 2]
        return out

    def inverse(self) -> "RigidTransform2p5D":
        c, s = np.cos(self.theta_z_rad), np.sin(self.theta_z_rad)
        return RigidTransform2p5D(
            tx_mm=-(c * self.tx_mm + s * self.ty_mm),
            ty_mm=-(-s * self.tx_mm + c * self.ty_mm),
            theta_z_rad=-self.theta_z_rad,
        )


@dataclass(frozen=True)
class CpdConfig:
    outlier_w: float = 0.1
    max_iter: int = 100
    tol: float = 1e-6
    max_points: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.outlier_w < 1.0:
            raise ValueError("outlier_w must be in [0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class CpdResult:
    transform: RigidTransform2p5D
    converged: bool
    iterations: int
    sigma2: float
    log_likelihood: "list[float]" = field(default_factory=list)


def subsample_points(points: np.ndarray, max_points: int, seed: int) -> np.ndarray:
    """Random subset without replacement; identity when already small enough."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) <= max_points:
        return points
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(points), size=max_points, replace=False)
    return points[np.sort(idx)]


def cpd_rigid_z(source: np.ndarray, target: np.ndarray,
                config: CpdConfig = CpdConfig()) -> CpdResult:
    """Find the bed-constrained transform mapping `source` onto `target`.

    EM over a Gaussian mixture whose centroids are the transformed source
    points plus a flat outlier component of weight ``outlier_w``.  The
    M-step solves the weighted 2D Procrustes problem in the XY plane, so
    only (tx, ty, theta_z) are estimated.  The tracked data log-likelihood
    is non-decreasing; convergence is its change dropping below ``tol``.
    """
    x = subsample_points(np.asarray(target, dtype=np.float64), config.max_points,
                         config.seed)
    y = subsample_points(np.asarray(source, dtype=np.float64), config.max_points,
                         config.seed + 1)
    if x.ndim != 2 or x.shape[1] != 3 or y.ndim != 2 or y.shape[1] != 3:
        raise ValueError("point sets must have shape (n, 3)")
    if len(x) == 0 or len(y) == 0:
        raise ValueError("point sets must be non-empty")
    n, m, dim = len(x), len(y), 3
    w = config.outlier_w

    theta, tx, ty = 0.0, 0.0, 0.0
    ty_pts = y.copy()
    diff = x[None, :, :] - ty_pts[:, None, :]
    sigma2 = float((diff ** 2).sum() / (dim * n * m))

    loglik: list[float] = []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        # E-step: responsibilities of the mixture centroids for each target
        dist2 = ((x[None, :, :] - ty_pts[:, None, :]) ** 2).sum(axis=2)  # (m, n)
        gauss = np.exp(-dist2 / (2.0 * sigma2))
        norm = (2.0 * np.pi * sigma2) ** (dim / 2.0)
        c_out = norm * w / (1.0 - w) * m / n if w > 0.0 else 0.0
        den = gauss.sum(axis=0) + c_out
        den = np.where(den > 0.0, den, np.finfo(float).tiny)
        p = gauss / den

        ll = float(np.log((1.0 - w) / (m * norm) * gauss.sum(axis=0) + w / n).sum())
        loglik.append(ll)
        if len(loglik) >= 2 and abs(loglik[-1] - loglik[-2]) < config.tol:
            converged = True
            break

        # M-step: weighted 2D Procrustes in XY with fixed z
        np_tot = float(p.sum())
        if np_tot <= 0.0:
            warnings.warn("all points explained by the outlier component",
                          stacklevel=2)
            break
        p1 = p.sum(axis=1)  # (m,)
        pt1 = p.sum(axis=0)  # (n,)
        mu_x = (x * pt1[:, None]).sum(axis=0) / np_tot
        mu_y = (y * p1[:, None]).sum(axis=0) / np_tot
        hat_x = x - mu_x
        hat_y = y - mu_y
        a = hat_x.T @ (p.T @ hat_y)  # (3, 3), xy block is what matters
        theta = float(np.arctan2(a[1, 0] - a[0, 1], a[0, 0] + a[1, 1]))
        cth, sth = np.cos(theta), np.sin(theta)
        tx = float(mu_x[0] - (cth * mu_y[0] - sth * mu_y[1]))
        ty = float(mu_x[1] - (sth * mu_y[0] + cth * mu_y[1]))

        ty_pts = np.empty_like(y)
        ty_pts[:, 0] = cth * y[:, 0] - sth * y[:, 1] + tx
        ty_pts[:, 1] = sth * y[:, 0] + cth * y[:, 1] + ty
        ty_pts[:, 2] = y[:, 2]

        dist2_new = ((x[None, :, :] - ty_pts[:, None, :]) ** 2).sum(axis=2)
        sigma2 = float((p * dist2_new).sum() / (np_tot * dim))
        sigma2 = max(sigma2, 1e-12)

    if not converged:
        warnings.warn(
            f"registration stopped after {it} iterations without meeting "
            f"tol={config.tol:g}", stacklevel=2)

    return CpdResult(
        transform=RigidTransform2p5D(tx_mm=tx, ty_mm=ty, theta_z_rad=theta),
        converged=converged,
        iterations=it,
        sigma2=sigma2,
        log_likelihood=loglik,
    )


def surface_points(grid: VoxelGrid, max_points: int = 2000, seed: int = 0) -> np.ndarray:
    """Physical-space centers of occupied voxels that touch empty space."""
    grid.validate()
    if grid.meta.kind is not GridKind.OCCUPANCY:
        raise ValueError("surface_points expects an occupancy grid")
    occ = grid.data.astype(bool)
    interior = occ.copy()
    interior[1:] &= occ[:-1]
    interior[:-1] &= occ[1:]
    interior[:, 1:] &= occ[:, :-1]
    interior[:, :-1] &= occ[:, 1:]
    interior[:, :, 1:] &= occ[:, :, :-1]
    interior[:, :, :-1] &= occ[:, :, 1:]
    # voxels on the grid boundary count as surface only if occupied
    shell = occ & ~interior
    kk, jj, ii = np.nonzero(shell)
    origin = np.asarray(grid.meta.origin)
    vsize = np.asarray(grid.meta.voxel_size)
    pts = np.empty((len(kk), 3))
    pts[:, 0] = origin[0] + (ii + 0.5) * vsize[0]
    pts[:, 1] = origin[1] + (jj + 0.5) * vsize[1]
    pts[:, 2] = origin[2] + (kk + 0.5) * vsize[2]
    return subsample_points(pts, max_points, seed)


@dataclass
class DepthMap:
    """Per-column depth of the first occupied voxel scanning along +z.

    ``values[j, i]`` is the z *index* of the first hit for the column at
    (x index i, y index j); columns with no occupied voxel hold NaN.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("depth map must be 2D")

    @property
    def coverage(self) -> float:
        return float(np.isfinite(self.values).mean())


def extract_depth_map(grid: VoxelGrid) -> DepthMap:
    grid.validate()
    if grid.meta.kind is not GridKind.OCCUPANCY:
        raise ValueError("extract_depth_map expects an occupancy grid")
    occ = grid.data.astype(bool)
    hit = occ.any(axis=0)
    first = np.argmax(occ, axis=0).astype(np.float64)
    first[~hit] = np.nan
    return DepthMap(first)


@dataclass(frozen=True)
class PlaneFit:
    normal: "tuple[float, float, float]"  # unit, z component positive
    offset_mm: float  # signed distance of the plane from the origin
    rms_residual_mm: float

    @property
    def tilt_rad(self) -> float:
        return float(np.arccos(np.clip(self.normal[2], -1.0, 1.0)))


def fit_plane(depth: DepthMap, meta: GridMeta) -> PlaneFit:
    """Least-squares plane through the depth-map points in physical mm.

    Solves z = a*x + b*y + c over all valid columns and reports the unit
    normal with positive z, the plane offset (n . p = offset), and the rms
    of the orthogonal residuals.
    """
    vals = depth.values
    ny, nx = vals.shape
    if (nx, ny) != (meta.dims[0], meta.dims[1]):
        raise ValueError("depth map shape does not match grid dims")
    jj, ii = np.nonzero(np.isfinite(vals))
    if len(ii) < 3:
        raise ValueError("need at least 3 valid depth samples to fit a plane")
    xs = meta.origin[0] + (ii + 0.5) * meta.voxel_size[0]
    ys = meta.origin[1] + (jj + 0.5) * meta.voxel_size[1]
    zs = meta.origin[2] + (vals[jj, ii] + 0.5) * meta.voxel_size[2]
    design = np.column_stack([xs, ys, np.ones_like(xs)])
    coef, _, rank, _ = np.linalg.lstsq(design, zs, rcond=None)
    if rank < 3:
        raise ValueError("depth samples are collinear; plane is ambiguous")
    a, b, c = (float(v) for v in coef)
    length = float(np.sqrt(a * a + b * b + 1.0))
    normal = (-a / length, -b / length, 1.0 / length)
    residual = zs - design @ coef
    rms = float(np.sqrt(np.mean(residual ** 2)) / length)
    return PlaneFit(normal=normal, offset_mm=c / length, rms_residual_mm=rms)


def level_volume(grid: VoxelGrid, plane: PlaneFit,
                 fill: float = 0.0) -> VoxelGrid:
    """Resample so the fitted plane becomes z = 0 with its normal along +z.

    Rotates about the volume's physical center by the rotation taking the
    plane normal to the z axis, then shifts along z so the plane lands at
    height zero.  Nearest-neighbor lookup keeps occupancy values binary;
    voxels that map outside the source get ``fill``.
    """
    grid.validate()
    meta = grid.meta
    n = np.asarray(plane.normal, dtype=np.float64)
    center = np.asarray(meta.origin) + np.asarray(meta.dims) * np.asarray(
        meta.voxel_size) / 2.0

    zhat = np.array([0.0, 0.0, 1.0])
    axis = np.cross(n, zhat)
    sin_t = float(np.linalg.norm(axis))
    cos_t = float(n @ zhat)
    if sin_t < 1e-15:
        rot = np.eye(3)
    else:
        u = axis / sin_t
        ux = np.array([[0.0, -u[2], u[1]],
                       [u[2], 0.0, -u[0]],
                       [-u[1], u[0], 0.0]])
        rot = cos_t * np.eye(3) + sin_t * ux + (1.0 - cos_t) * np.outer(u, u)
    # after rotating about `center`, the plane is horizontal at the height
    # of the center minus its distance to the plane; shift that to zero
    tz = float(n @ center - plane.offset_mm - center[2])

    nx, ny, nz = meta.dims
    zz, yy, xx = np.meshgrid(
        meta.voxel_centers_1d(2), meta.voxel_centers_1d(1),
        meta.voxel_centers_1d(0), indexing="ij")
    # invert the forward map p -> R(p - center) + center + tz*zhat
    q = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    q[:, 2] -= tz
    src = (q - center) @ rot + center  # row-vector product applies rot^T

    vsize = np.asarray(meta.voxel_size)
    origin = np.asarray(meta.origin)
    idx = np.rint((src - origin) / vsize - 0.5).astype(np.int64)
    inside = ((idx >= 0) & (idx < np.array(meta.dims))).all(axis=1)
    out = np.full(grid.data.size, fill, dtype=grid.data.dtype)
    ok = idx[inside]
    out[inside] = grid.data[ok[:, 2], ok[:, 1], ok[:, 0]]
    return VoxelGrid(meta, out.reshape(grid.data.shape))
