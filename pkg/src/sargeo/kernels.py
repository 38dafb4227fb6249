"""Numba-compiled hot kernels: BVH traversal, triangle intersection, multi-bounce trace.

The mixing chain and jitter-counter packing here must stay in lockstep
with `sargeo.rng` (the Python/numpy side); determinism tests compare the
two paths. All float math is IEEE double precision (no fastmath), so
per-ray results are bit-identical regardless of the thread count: each
prange iteration writes only to its own output slots and draws randomness
from a stateless counter hash.

Intersection acceptance is written in accept-form (`u >= 0 and u <= 1`)
so NaNs from degenerate determinants are rejected without an explicit
epsilon; the brute-force oracle in the test suite mirrors the same rules.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_NJ = dict(cache=True, error_model="numpy", fastmath=False)


@njit(**_NJ)
def _mix64(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(**_NJ)
def _u01(hashed_ray, counter):
    """Uniform in (0, 1) from a per-ray hash and a draw counter."""
    bits = _mix64(hashed_ray ^ np.uint64(counter))
    return (np.float64(bits >> np.uint64(11)) + 0.5) * (2.0 ** -53)


@njit(**_NJ)
def _jitter_counter(bounce, attempt, lane):
    # Mirrors sargeo.rng.pack_jitter_counter.
    return (bounce << 8) | (attempt << 4) | lane


@njit(**_NJ)
def _slab_entry(bmin, bmax, node, ox, oy, oz, idx, idy, idz, t_min, t_best):
    """Entry distance of the ray into a node's box, or inf when it misses [t_min, t_best]."""
    lo = t_min
    hi = t_best
    for axis in range(3):
        if axis == 0:
            o, inv = ox, idx
        elif axis == 1:
            o, inv = oy, idy
        else:
            o, inv = oz, idz
        if np.isinf(inv):
            # Ray parallel to this slab: reject unless origin lies inside it.
            if o < bmin[node, axis] or o > bmax[node, axis]:
                return np.inf
        else:
            t1 = (bmin[node, axis] - o) * inv
            t2 = (bmax[node, axis] - o) * inv
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > lo:
                lo = t1
            if t2 < hi:
                hi = t2
            if lo > hi:
                return np.inf
    return lo


@njit(**_NJ)
def _raycast(node_min, node_max, node_left, node_count, prim_ids,
             v0, e1, e2, ox, oy, oz, dx, dy, dz, t_min):
    """Nearest-hit query. Returns (face_id, t, u, v); face_id = -1 on miss."""
    idx = 1.0 / dx
    idy = 1.0 / dy
    idz = 1.0 / dz

    best_f = np.int64(-1)
    best_t = np.inf
    best_u = 0.0
    best_v = 0.0

    stack_node = np.empty(128, dtype=np.int64)
    stack_dist = np.empty(128, dtype=np.float64)
    entry = _slab_entry(node_min, node_max, 0, ox, oy, oz, idx, idy, idz, t_min, best_t)
    if np.isinf(entry):
        return best_f, best_t, best_u, best_v
    stack_node[0] = 0
    stack_dist[0] = entry
    sp = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        if stack_dist[sp] >= best_t:
            continue
        count = node_count[node]
        if count > 0:
            start = node_left[node]
            for j in range(start, start + count):
                f = prim_ids[j]
                e1x, e1y, e1z = e1[f, 0], e1[f, 1], e1[f, 2]
                e2x, e2y, e2z = e2[f, 0], e2[f, 1], e2[f, 2]
                pvx = dy * e2z - dz * e2y
                pvy = dz * e2x - dx * e2z
                pvz = dx * e2y - dy * e2x
                det = e1x * pvx + e1y * pvy + e1z * pvz
                inv_det = 1.0 / det
                sx = ox - v0[f, 0]
                sy = oy - v0[f, 1]
                sz = oz - v0[f, 2]
                u = (sx * pvx + sy * pvy + sz * pvz) * inv_det
                if not (u >= 0.0 and u <= 1.0):
                    continue
                qx = sy * e1z - sz * e1y
                qy = sz * e1x - sx * e1z
                qz = sx * e1y - sy * e1x
                v = (dx * qx + dy * qy + dz * qz) * inv_det
                if not (v >= 0.0 and u + v <= 1.0):
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                if t > t_min and t < best_t:
                    best_f = f
                    best_t = t
                    best_u = u
                    best_v = v
        else:
            left = node_left[node]
            right = left + 1
            d_left = _slab_entry(node_min, node_max, left, ox, oy, oz, idx, idy, idz, t_min, best_t)
            d_right = _slab_entry(node_min, node_max, right, ox, oy, oz, idx, idy, idz, t_min, best_t)
            # Push the far child first so the near child is traversed next.
            if d_left <= d_right:
                near, d_near, far, d_far = left, d_left, right, d_right
            else:
                near, d_near, far, d_far = right, d_right, left, d_left
            if not np.isinf(d_far):
                stack_node[sp] = far
                stack_dist[sp] = d_far
                sp += 1
            if not np.isinf(d_near):
                stack_node[sp] = near
                stack_dist[sp] = d_near
                sp += 1

    return best_f, best_t, best_u, best_v


@njit(**_NJ)
def raycast_single(node_min, node_max, node_left, node_count, prim_ids,
                   v0, e1, e2, origin, direction, t_min):
    return _raycast(node_min, node_max, node_left, node_count, prim_ids, v0, e1, e2,
                    origin[0], origin[1], origin[2],
                    direction[0], direction[1], direction[2], t_min)


@njit(**_NJ)
def _reflect(dx, dy, dz, nx, ny, nz, zeta, hashed_ray, bounce, frame):
    """Specular mirror plus optional roughness jitter drawn in the beam frame.

    The normal must already face the incident ray (n . d < 0). Jittered
    directions pointing back into the surface are re-drawn up to 8 times,
    then the pure specular direction is used.
    """
    dot = dx * nx + dy * ny + dz * nz
    sx = dx - 2.0 * dot * nx
    sy = dy - 2.0 * dot * ny
    sz = dz - 2.0 * dot * nz
    if zeta == 0.0:
        return sx, sy, sz
    for attempt in range(8):
        c0 = 2.0 * _u01(hashed_ray, _jitter_counter(bounce, attempt, 0)) - 1.0
        c1 = 2.0 * _u01(hashed_ray, _jitter_counter(bounce, attempt, 1)) - 1.0
        c2 = 2.0 * _u01(hashed_ray, _jitter_counter(bounce, attempt, 2)) - 1.0
        ux = frame[0, 0] * c0 + frame[0, 1] * c1 + frame[0, 2] * c2
        uy = frame[1, 0] * c0 + frame[1, 1] * c1 + frame[1, 2] * c2
        uz = frame[2, 0] * c0 + frame[2, 1] * c1 + frame[2, 2] * c2
        px = sx + zeta * ux
        py = sy + zeta * uy
        pz = sz + zeta * uz
        norm = np.sqrt(px * px + py * py + pz * pz)
        if norm < 1e-12:
            continue
        px /= norm
        py /= norm
        pz /= norm
        if px * nx + py * ny + pz * nz > 0.0:
            return px, py, pz
    return sx, sy, sz


@njit(parallel=True, **_NJ)
def trace_batch(node_min, node_max, node_left, node_count, prim_ids,
                v0, e1, e2, face_normals, face_psi,
                origins, directions, ray_ids,
                mu, zeta, k_max, tau_min, tau_energy, rho, t_min_secondary,
                jitter_prefix, frame,
                out_pos, out_intensity, out_bounce, out_valid):
    """Trace every ray through up to k_max bounces, writing into per-ray slots.

    Output row for ray i, bounce k is i * k_max + (k - 1); out_valid marks
    rows that carry a scatter point. Slot disjointness makes the result
    independent of the parallel schedule.
    """
    n_rays = origins.shape[0]
    for i in prange(n_rays):
        ox, oy, oz = origins[i, 0], origins[i, 1], origins[i, 2]
        dx, dy, dz = directions[i, 0], directions[i, 1], directions[i, 2]
        hashed_ray = _mix64(np.uint64(jitter_prefix) ^ np.uint64(ray_ids[i]))
        energy = 1.0
        path_len = 0.0
        t_min = 0.0
        base = i * k_max
        for k in range(1, k_max + 1):
            f, t, _, _ = _raycast(node_min, node_max, node_left, node_count, prim_ids,
                                  v0, e1, e2, ox, oy, oz, dx, dy, dz, t_min)
            if f < 0:
                break
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            path_len += t
            intensity = energy * np.exp(-mu * path_len) * face_psi[f]
            if intensity > tau_min:
                row = base + (k - 1)
                out_pos[row, 0] = px
                out_pos[row, 1] = py
                out_pos[row, 2] = pz
                out_intensity[row] = intensity
                out_bounce[row] = k
                out_valid[row] = True
            energy = energy * rho * np.exp(-mu * t)
            if k == k_max or energy < tau_energy:
                break
            nx = face_normals[f, 0]
            ny = face_normals[f, 1]
            nz = face_normals[f, 2]
            if nx * dx + ny * dy + nz * dz > 0.0:
                nx, ny, nz = -nx, -ny, -nz
            dx, dy, dz = _reflect(dx, dy, dz, nx, ny, nz, zeta, hashed_ray, k, frame)
            ox, oy, oz = px, py, pz
            t_min = t_min_secondary
