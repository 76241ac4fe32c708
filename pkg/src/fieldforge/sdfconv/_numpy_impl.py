"""Pure-numpy kernels: iso-surface cell emission and exact mesh distances.

Everything here works in voxel index space (voxel center (i, j, k) sits at
coordinate (i, j, k)).  The numba twin in ``_numba_impl`` must produce
bit-identical output; keep the arithmetic expression-for-expression in sync
between the two modules, including evaluation order inside dot products.
"""

from __future__ import annotations

import numpy as np

from ._tables import TRI_TABLE


def mc_core(vals: np.ndarray, iso: float):
    """Triangulate the iso-surface of a (nz, ny, nx) scalar grid.

    Returns (verts, tris): verts are (V, 3) xyz positions in index space with
    one welded vertex per crossed lattice edge (all x-edges first in scan
    order, then y, then z), tris are (T, 3) vertex indices with zero-area
    triangles removed.
    """
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    iso = float(iso)
    below = vals < iso

    cross_x = below[:, :, :-1] != below[:, :, 1:]
    cross_y = below[:, :-1, :] != below[:, 1:, :]
    cross_z = below[:-1, :, :] != below[1:, :, :]

    n_xv = int(np.count_nonzero(cross_x))
    n_yv = int(np.count_nonzero(cross_y))
    n_zv = int(np.count_nonzero(cross_z))
    total = n_xv + n_yv + n_zv
    if total == 0:
        return np.zeros((0, 3), dtype=np.float64), np.zeros((0, 3), dtype=np.int64)

    xid = np.full(cross_x.shape, -1, dtype=np.int64)
    xid[cross_x] = np.arange(n_xv, dtype=np.int64)
    yid = np.full(cross_y.shape, -1, dtype=np.int64)
    yid[cross_y] = np.arange(n_xv, n_xv + n_yv, dtype=np.int64)
    zid = np.full(cross_z.shape, -1, dtype=np.int64)
    zid[cross_z] = np.arange(n_xv + n_yv, total, dtype=np.int64)

    verts = np.empty((total, 3), dtype=np.float64)
    kk, jj, ii = np.nonzero(cross_x)
    va = vals[kk, jj, ii]
    t = (iso - va) / (vals[kk, jj, ii + 1] - va)
    verts[:n_xv, 0] = ii + t
    verts[:n_xv, 1] = jj
    verts[:n_xv, 2] = kk

    kk, jj, ii = np.nonzero(cross_y)
    va = vals[kk, jj, ii]
    t = (iso - va) / (vals[kk, jj + 1, ii] - va)
    verts[n_xv:n_xv + n_yv, 0] = ii
    verts[n_xv:n_xv + n_yv, 1] = jj + t
    verts[n_xv:n_xv + n_yv, 2] = kk

    kk, jj, ii = np.nonzero(cross_z)
    va = vals[kk, jj, ii]
    t = (iso - va) / (vals[kk + 1, jj, ii] - va)
    verts[n_xv + n_yv:, 0] = ii
    verts[n_xv + n_yv:, 1] = jj
    verts[n_xv + n_yv:, 2] = kk + t

    b = below.astype(np.int64)
    cube = (b[:-1, :-1, :-1]
            | b[:-1, :-1, 1:] << 1
            | b[:-1, 1:, 1:] << 2
            | b[:-1, 1:, :-1] << 3
            | b[1:, :-1, :-1] << 4
            | b[1:, :-1, 1:] << 5
            | b[1:, 1:, 1:] << 6
            | b[1:, 1:, :-1] << 7)

    ck, cj, ci = np.nonzero((cube > 0) & (cube < 255))
    if len(ck) == 0:
        return verts, np.zeros((0, 3), dtype=np.int64)
    codes = cube[ck, cj, ci]

    evid = np.empty((len(ck), 12), dtype=np.int64)
    evid[:, 0] = xid[ck, cj, ci]
    evid[:, 1] = yid[ck, cj, ci + 1]
    evid[:, 2] = xid[ck, cj + 1, ci]
    evid[:, 3] = yid[ck, cj, ci]
    evid[:, 4] = xid[ck + 1, cj, ci]
    evid[:, 5] = yid[ck + 1, cj, ci + 1]
    evid[:, 6] = xid[ck + 1, cj + 1, ci]
    evid[:, 7] = yid[ck + 1, cj, ci]
    evid[:, 8] = zid[ck, cj, ci]
    evid[:, 9] = zid[ck, cj, ci + 1]
    evid[:, 10] = zid[ck, cj + 1, ci + 1]
    evid[:, 11] = zid[ck, cj + 1, ci]

    rows = TRI_TABLE[codes][:, :15].reshape(-1, 5, 3)
    cell_idx, slot = np.nonzero(rows[:, :, 0] >= 0)
    edges3 = rows[cell_idx, slot]
    tris = evid[cell_idx[:, None], edges3]

    p0 = verts[tris[:, 0]]
    p1 = verts[tris[:, 1]]
    p2 = verts[tris[:, 2]]
    ux, uy, uz = p1[:, 0] - p0[:, 0], p1[:, 1] - p0[:, 1], p1[:, 2] - p0[:, 2]
    vx, vy, vz = p2[:, 0] - p0[:, 0], p2[:, 1] - p0[:, 1], p2[:, 2] - p0[:, 2]
    nx_ = uy * vz - uz * vy
    ny_ = uz * vx - ux * vz
    nz_ = ux * vy - uy * vx
    area2 = nx_ * nx_ + ny_ * ny_ + nz_ * nz_
    return verts, tris[area2 > 1e-24]


def sq_dist_to_mesh(points: np.ndarray, verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Exact squared distance from each point to the closest mesh triangle.

    Prunes with a KD-tree over triangle centroids: a triangle whose centroid
    is farther than (nearest centroid distance + 2 * max triangle radius)
    cannot contain the closest point, so only the surviving candidate pairs
    are evaluated.  The pairwise formula matches the scalar kernel in
    ``_numba_impl`` expression for expression, so both backends return
    bit-identical results.
    """
    from scipy.spatial import cKDTree

    points = np.ascontiguousarray(points, dtype=np.float64)
    if len(tris) == 0:
        return np.full(len(points), np.inf)

    a = verts[tris[:, 0]]
    b = verts[tris[:, 1]]
    c = verts[tris[:, 2]]
    cent = (a + b + c) / 3.0
    rho = np.sqrt(max(
        ((a - cent) ** 2).sum(axis=1).max(),
        ((b - cent) ** 2).sum(axis=1).max(),
        ((c - cent) ** 2).sum(axis=1).max(),
    ))

    tree = cKDTree(cent)
    best = np.empty(len(points), dtype=np.float64)
    for lo in range(0, len(points), 8192):
        pts = points[lo:lo + 8192]
        d0, _ = tree.query(pts, k=1)
        balls = tree.query_ball_point(pts, d0 + 2.0 * rho + 1e-9, return_sorted=False)
        lens = np.fromiter((len(bl) for bl in balls), dtype=np.int64, count=len(balls))
        tri_idx = np.concatenate([np.asarray(bl, dtype=np.int64) for bl in balls])
        pt_idx = np.repeat(np.arange(len(pts), dtype=np.int64), lens)
        n_pairs = len(tri_idx)
        d2 = np.empty(n_pairs, dtype=np.float64)
        for s in range(0, n_pairs, 524288):
            sl = slice(s, min(s + 524288, n_pairs))
            d2[sl] = _sq_dist_pairs(pts, a, b, c, pt_idx[sl], tri_idx[sl])
        starts = np.zeros(len(pts), dtype=np.int64)
        np.cumsum(lens[:-1], out=starts[1:])
        best[lo:lo + 8192] = np.minimum.reduceat(d2, starts)
    return best


def _sq_dist_pairs(points, a, b, c, pt_idx, tri_idx):
    """Point-triangle squared distance for index pairs (Ericson's regions)."""
    px = points[pt_idx, 0]
    py = points[pt_idx, 1]
    pz = points[pt_idx, 2]
    ax, ay, az = a[tri_idx, 0], a[tri_idx, 1], a[tri_idx, 2]
    bx, by, bz = b[tri_idx, 0], b[tri_idx, 1], b[tri_idx, 2]
    cx, cy, cz = c[tri_idx, 0], c[tri_idx, 1], c[tri_idx, 2]

    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz

    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz

    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    # interior (barycentric) candidate, overwritten by edge/vertex regions
    denom_f = va + vb + vc
    denom_f = np.where(denom_f != 0.0, denom_f, 1.0)
    v_f = vb / denom_f
    w_f = vc / denom_f
    qx = ax + abx * v_f + acx * w_f
    qy = ay + aby * v_f + acy * w_f
    qz = az + abz * v_f + acz * w_f

    def _apply(mask, t, ox, oy, oz, ex, ey, ez):
        nonlocal qx, qy, qz
        qx = np.where(mask, ox + t * ex, qx)
        qy = np.where(mask, oy + t * ey, qy)
        qz = np.where(mask, oz + t * ez, qz)

    # lowest priority first so earlier regions of the scalar cascade win
    r_bc = (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0)
    t_bc = np.where(r_bc, (d4 - d3) / np.where(r_bc, (d4 - d3) + (d5 - d6), 1.0), 0.0)
    _apply(r_bc, t_bc, bx, by, bz, cx - bx, cy - by, cz - bz)

    r_ac = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
    t_ac = np.where(r_ac, d2 / np.where(r_ac, d2 - d6, 1.0), 0.0)
    _apply(r_ac, t_ac, ax, ay, az, acx, acy, acz)

    r_ab = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
    t_ab = np.where(r_ab, d1 / np.where(r_ab, d1 - d3, 1.0), 0.0)
    _apply(r_ab, t_ab, ax, ay, az, abx, aby, abz)

    r_c = (d6 >= 0.0) & (d5 <= d6)
    qx = np.where(r_c, cx, qx)
    qy = np.where(r_c, cy, qy)
    qz = np.where(r_c, cz, qz)

    r_b = (d3 >= 0.0) & (d4 <= d3)
    qx = np.where(r_b, bx, qx)
    qy = np.where(r_b, by, qy)
    qz = np.where(r_b, bz, qz)

    r_a = (d1 <= 0.0) & (d2 <= 0.0)
    qx = np.where(r_a, ax, qx)
    qy = np.where(r_a, ay, qy)
    qz = np.where(r_a, az, qz)

    dx, dy, dz = px - qx, py - qy, pz - qz
    return dx * dx + dy * dy + dz * dz
