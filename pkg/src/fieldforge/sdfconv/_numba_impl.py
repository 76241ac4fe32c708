"""Numba kernels mirroring ``_numpy_impl`` bit for bit.

Same scan orders, same interpolation and distance expressions; the only
difference is explicit loops instead of vectorized gathers.  Do not "clean
up" arithmetic here without applying the identical change to the numpy twin.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ._tables import TRI_TABLE


@njit(cache=True)
def _mc_core_jit(vals, iso, tri_table):
    nz, ny, nx = vals.shape
    below = vals < iso

    n_xv = 0
    for k in range(nz):
        for j in range(ny):
            for i in range(nx - 1):
                if below[k, j, i] != below[k, j, i + 1]:
                    n_xv += 1
    n_yv = 0
    for k in range(nz):
        for j in range(ny - 1):
            for i in range(nx):
                if below[k, j, i] != below[k, j + 1, i]:
                    n_yv += 1
    n_zv = 0
    for k in range(nz - 1):
        for j in range(ny):
            for i in range(nx):
                if below[k, j, i] != below[k + 1, j, i]:
                    n_zv += 1

    total = n_xv + n_yv + n_zv
    verts = np.zeros((total, 3), dtype=np.float64)
    tris0 = np.zeros((0, 3), dtype=np.int64)
    if total == 0:
        return verts, tris0

    xid = np.full((nz, ny, nx - 1), -1, dtype=np.int64)
    yid = np.full((nz, ny - 1, nx), -1, dtype=np.int64)
    zid = np.full((nz - 1, ny, nx), -1, dtype=np.int64)

    vid = 0
    for k in range(nz):
        for j in range(ny):
            for i in range(nx - 1):
                if below[k, j, i] != below[k, j, i + 1]:
                    xid[k, j, i] = vid
                    va = vals[k, j, i]
                    t = (iso - va) / (vals[k, j, i + 1] - va)
                    verts[vid, 0] = i + t
                    verts[vid, 1] = j
                    verts[vid, 2] = k
                    vid += 1
    for k in range(nz):
        for j in range(ny - 1):
            for i in range(nx):
                if below[k, j, i] != below[k, j + 1, i]:
                    yid[k, j, i] = vid
                    va = vals[k, j, i]
                    t = (iso - va) / (vals[k, j + 1, i] - va)
                    verts[vid, 0] = i
                    verts[vid, 1] = j + t
                    verts[vid, 2] = k
                    vid += 1
    for k in range(nz - 1):
        for j in range(ny):
            for i in range(nx):
                if below[k, j, i] != below[k + 1, j, i]:
                    zid[k, j, i] = vid
                    va = vals[k, j, i]
                    t = (iso - va) / (vals[k + 1, j, i] - va)
                    verts[vid, 0] = i
                    verts[vid, 1] = j
                    verts[vid, 2] = k + t
                    vid += 1

    max_tris = 0
    for k in range(nz - 1):
        for j in range(ny - 1):
            for i in range(nx - 1):
                code = (int(below[k, j, i])
                        | int(below[k, j, i + 1]) << 1
                        | int(below[k, j + 1, i + 1]) << 2
                        | int(below[k, j + 1, i]) << 3
                        | int(below[k + 1, j, i]) << 4
                        | int(below[k + 1, j, i + 1]) << 5
                        | int(below[k + 1, j + 1, i + 1]) << 6
                        | int(below[k + 1, j + 1, i]) << 7)
                if 0 < code < 255:
                    s = 0
                    while tri_table[code, s] >= 0:
                        s += 3
                    max_tris += s // 3

    tris = np.empty((max_tris, 3), dtype=np.int64)
    ev = np.empty(12, dtype=np.int64)
    nt = 0
    for k in range(nz - 1):
        for j in range(ny - 1):
            for i in range(nx - 1):
                code = (int(below[k, j, i])
                        | int(below[k, j, i + 1]) << 1
                        | int(below[k, j + 1, i + 1]) << 2
                        | int(below[k, j + 1, i]) << 3
                        | int(below[k + 1, j, i]) << 4
                        | int(below[k + 1, j, i + 1]) << 5
                        | int(below[k + 1, j + 1, i + 1]) << 6
                        | int(below[k + 1, j + 1, i]) << 7)
                if code == 0 or code == 255:
                    continue
                ev[0] = xid[k, j, i]
                ev[1] = yid[k, j, i + 1]
                ev[2] = xid[k, j + 1, i]
                ev[3] = yid[k, j, i]
                ev[4] = xid[k + 1, j, i]
                ev[5] = yid[k + 1, j, i + 1]
                ev[6] = xid[k + 1, j + 1, i]
                ev[7] = yid[k + 1, j, i]
                ev[8] = zid[k, j, i]
                ev[9] = zid[k, j, i + 1]
                ev[10] = zid[k, j + 1, i + 1]
                ev[11] = zid[k, j + 1, i]
                s = 0
                while tri_table[code, s] >= 0:
                    i0 = ev[tri_table[code, s]]
                    i1 = ev[tri_table[code, s + 1]]
                    i2 = ev[tri_table[code, s + 2]]
                    ux = verts[i1, 0] - verts[i0, 0]
                    uy = verts[i1, 1] - verts[i0, 1]
                    uz = verts[i1, 2] - verts[i0, 2]
                    vx = verts[i2, 0] - verts[i0, 0]
                    vy = verts[i2, 1] - verts[i0, 1]
                    vz = verts[i2, 2] - verts[i0, 2]
                    nx_ = uy * vz - uz * vy
                    ny_ = uz * vx - ux * vz
                    nz_ = ux * vy - uy * vx
                    area2 = nx_ * nx_ + ny_ * ny_ + nz_ * nz_
                    if area2 > 1e-24:
                        tris[nt, 0] = i0
                        tris[nt, 1] = i1
                        tris[nt, 2] = i2
                        nt += 1
                    s += 3
    return verts, tris[:nt]


def mc_core(vals: np.ndarray, iso: float):
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    return _mc_core_jit(vals, float(iso), TRI_TABLE)


@njit(cache=True, inline="always")
def _pt_tri_sq(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    apx = px - ax
    apy = py - ay
    apz = pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        qx, qy, qz = ax, ay, az
    else:
        bpx = px - bx
        bpy = py - by
        bpz = pz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            qx, qy, qz = bx, by, bz
        else:
            cpx = px - cx
            cpy = py - cy
            cpz = pz - cz
            d5 = abx * cpx + aby * cpy + abz * cpz
            d6 = acx * cpx + acy * cpy + acz * cpz
            if d6 >= 0.0 and d5 <= d6:
                qx, qy, qz = cx, cy, cz
            else:
                vc = d1 * d4 - d3 * d2
                vb = d5 * d2 - d1 * d6
                va = d3 * d6 - d5 * d4
                if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                    t = d1 / (d1 - d3)
                    qx = ax + t * abx
                    qy = ay + t * aby
                    qz = az + t * abz
                elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                    t = d2 / (d2 - d6)
                    qx = ax + t * acx
                    qy = ay + t * acy
                    qz = az + t * acz
                elif va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
                    t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                    qx = bx + t * (cx - bx)
                    qy = by + t * (cy - by)
                    qz = bz + t * (cz - bz)
                else:
                    denom = va + vb + vc
                    if denom == 0.0:
                        denom = 1.0
                    v = vb / denom
                    w = vc / denom
                    qx = ax + abx * v + acx * w
                    qy = ay + aby * v + acy * w
                    qz = az + abz * v + acz * w
    dx = px - qx
    dy = py - qy
    dz = pz - qz
    return dx * dx + dy * dy + dz * dz


@njit(cache=True, parallel=True)
def _sq_dist_jit(points, verts, tris):
    n_pts = points.shape[0]
    n_tris = tris.shape[0]
    out = np.empty(n_pts, dtype=np.float64)
    for p in prange(n_pts):
        px = points[p, 0]
        py = points[p, 1]
        pz = points[p, 2]
        best = np.inf
        for t in range(n_tris):
            d2 = _pt_tri_sq(
                px, py, pz,
                verts[tris[t, 0], 0], verts[tris[t, 0], 1], verts[tris[t, 0], 2],
                verts[tris[t, 1], 0], verts[tris[t, 1], 1], verts[tris[t, 1], 2],
                verts[tris[t, 2], 0], verts[tris[t, 2], 1], verts[tris[t, 2], 2],
            )
            if d2 < best:
                best = d2
        out[p] = best
    return out


def sq_dist_to_mesh(points: np.ndarray, verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    points = np.ascontiguousarray(points, dtype=np.float64)
    if len(tris) == 0:
        return np.full(len(points), np.inf)
    return _sq_dist_jit(points, np.ascontiguousarray(verts),
                        np.ascontiguousarray(tris))
