# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: ray casting and the time-domain energy recursion.

Operation order and tie-breaking mirror fallback.py exactly, so the two
backends return bit-identical results.
"""

import numpy as np

cimport numpy as cnp

from ..errors import InstabilityError

cnp.import_array()

DEF DENOM_EPS = 1e-15
DEF EDGE_EPS = 1e-9


cdef inline bint _inside(double hu, double hv,
                         const double* pu, const double* pv, int m) nogil:
    cdef bint inside = False
    cdef bint near = False
    cdef int a, b
    cdef double u1, v1, u2, v2, xint
    cdef double su, sv, wu, wv, seg2, c, du, dv
    cdef double eps2 = EDGE_EPS * EDGE_EPS
    for a in range(m):
        b = a + 1
        if b == m:
            b = 0
        u1 = pu[a]; v1 = pv[a]
        u2 = pu[b]; v2 = pv[b]
        if (v1 > hv) != (v2 > hv):
            xint = (u2 - u1) * (hv - v1) / (v2 - v1) + u1
            if hu < xint:
                inside = not inside
        su = u2 - u1; sv = v2 - v1
        wu = hu - u1; wv = hv - v1
        seg2 = su * su + sv * sv
        if seg2 > 0.0:
            c = (wu * su + wv * sv) / seg2
            if c < 0.0:
                c = 0.0
            elif c > 1.0:
                c = 1.0
        else:
            c = 0.0
        du = wu - c * su
        dv = wv - c * sv
        if du * du + dv * dv <= eps2:
            near = True
    return inside or near


def ray_nearest(pack, origins, directions, double t_min, bint front_only):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] o = np.ascontiguousarray(origins, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d = np.ascontiguousarray(directions, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] poly_start = pack.poly_start
    cdef cnp.ndarray[cnp.float64_t, ndim=2] normals = pack.normals
    cdef cnp.ndarray[cnp.float64_t, ndim=1] plane_d = pack.plane_d
    cdef cnp.ndarray[cnp.int8_t, ndim=1] axis_u = pack.axis_u
    cdef cnp.ndarray[cnp.int8_t, ndim=1] axis_v = pack.axis_v
    cdef cnp.ndarray[cnp.float64_t, ndim=1] proj_u = pack.proj_u
    cdef cnp.ndarray[cnp.float64_t, ndim=1] proj_v = pack.proj_v

    cdef Py_ssize_t n_rays = o.shape[0]
    cdef int n_poly = normals.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] best_idx = np.full(n_rays, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best_t = np.full(n_rays, np.inf)

    cdef Py_ssize_t r
    cdef int j, s, m
    cdef double ox, oy, oz, dx, dy, dz
    cdef double nx, ny, nz, denom, t, hu, hv, bt
    cdef int bi
    cdef double hx, hy, hz
    cdef int au, av

    with nogil:
        for r in range(n_rays):
            ox = o[r, 0]; oy = o[r, 1]; oz = o[r, 2]
            dx = d[r, 0]; dy = d[r, 1]; dz = d[r, 2]
            bt = best_t[r]
            bi = -1
            for j in range(n_poly):
                nx = normals[j, 0]; ny = normals[j, 1]; nz = normals[j, 2]
                denom = dx * nx + dy * ny + dz * nz
                if denom > -DENOM_EPS and denom < DENOM_EPS:
                    continue
                if front_only and denom >= 0.0:
                    continue
                t = (plane_d[j] - (ox * nx + oy * ny + oz * nz)) / denom
                if t < t_min or t >= bt:
                    continue
                hx = ox + t * dx; hy = oy + t * dy; hz = oz + t * dz
                au = axis_u[j]; av = axis_v[j]
                hu = hx if au == 0 else (hy if au == 1 else hz)
                hv = hx if av == 0 else (hy if av == 1 else hz)
                s = poly_start[j]
                m = poly_start[j + 1] - s
                if _inside(hu, hv, &proj_u[s], &proj_v[s], m):
                    bt = t
                    bi = j
            best_t[r] = bt
            best_idx[r] = bi
    return best_idx, best_t


def segments_blocked(pack, starts, ends, double eps):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] s_arr = np.ascontiguousarray(starts, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] e_arr = np.ascontiguousarray(ends, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] poly_start = pack.poly_start
    cdef cnp.ndarray[cnp.float64_t, ndim=2] normals = pack.normals
    cdef cnp.ndarray[cnp.float64_t, ndim=1] plane_d = pack.plane_d
    cdef cnp.ndarray[cnp.int8_t, ndim=1] axis_u = pack.axis_u
    cdef cnp.ndarray[cnp.int8_t, ndim=1] axis_v = pack.axis_v
    cdef cnp.ndarray[cnp.float64_t, ndim=1] proj_u = pack.proj_u
    cdef cnp.ndarray[cnp.float64_t, ndim=1] proj_v = pack.proj_v

    cdef Py_ssize_t n_seg = s_arr.shape[0]
    cdef int n_poly = normals.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] blocked = np.zeros(n_seg, dtype=np.uint8)

    cdef Py_ssize_t i
    cdef int j, st, m
    cdef double sx, sy, sz, qx, qy, qz, r, dx, dy, dz
    cdef double nx, ny, nz, denom, t, hu, hv, hx, hy, hz
    cdef int au, av

    with nogil:
        for i in range(n_seg):
            sx = s_arr[i, 0]; sy = s_arr[i, 1]; sz = s_arr[i, 2]
            qx = e_arr[i, 0] - sx; qy = e_arr[i, 1] - sy; qz = e_arr[i, 2] - sz
            r = (qx * qx + qy * qy + qz * qz) ** 0.5
            if r <= 2.0 * eps:
                continue
            dx = qx / r; dy = qy / r; dz = qz / r
            for j in range(n_poly):
                nx = normals[j, 0]; ny = normals[j, 1]; nz = normals[j, 2]
                denom = dx * nx + dy * ny + dz * nz
                if denom > -DENOM_EPS and denom < DENOM_EPS:
                    continue
                t = (plane_d[j] - (sx * nx + sy * ny + sz * nz)) / denom
                if t < eps or t > r - eps:
                    continue
                hx = sx + t * dx; hy = sy + t * dy; hz = sz + t * dz
                au = axis_u[j]; av = axis_v[j]
                hu = hx if au == 0 else (hy if au == 1 else hz)
                hv = hx if av == 0 else (hy if av == 1 else hz)
                st = poly_start[j]
                m = poly_start[j + 1] - st
                if _inside(hu, hv, &proj_u[st], &proj_v[st], m):
                    blocked[i] = 1
                    break
    return blocked.view(np.bool_)


def count_crossings(pack, origins, directions, double eps):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] o = np.ascontiguousarray(origins, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d = np.ascontiguousarray(directions, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] poly_start = pack.poly_start
    cdef cnp.ndarray[cnp.float64_t, ndim=2] normals = pack.normals
    cdef cnp.ndarray[cnp.float64_t, ndim=1] plane_d = pack.plane_d
    cdef cnp.ndarray[cnp.int8_t, ndim=1] axis_u = pack.axis_u
    cdef cnp.ndarray[cnp.int8_t, ndim=1] axis_v = pack.axis_v
    cdef cnp.ndarray[cnp.float64_t, ndim=1] proj_u = pack.proj_u
    cdef cnp.ndarray[cnp.float64_t, ndim=1] proj_v = pack.proj_v

    cdef Py_ssize_t n_rays = o.shape[0]
    cdef int n_poly = normals.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(n_rays, dtype=np.int64)

    cdef Py_ssize_t r
    cdef int j, s, m
    cdef double ox, oy, oz, dx, dy, dz
    cdef double nx, ny, nz, denom, t, hu, hv, hx, hy, hz
    cdef int au, av
    cdef long cnt

    with nogil:
        for r in range(n_rays):
            ox = o[r, 0]; oy = o[r, 1]; oz = o[r, 2]
            dx = d[r, 0]; dy = d[r, 1]; dz = d[r, 2]
            cnt = 0
            for j in range(n_poly):
                nx = normals[j, 0]; ny = normals[j, 1]; nz = normals[j, 2]
                denom = dx * nx + dy * ny + dz * nz
                if denom > -DENOM_EPS and denom < DENOM_EPS:
                    continue
                t = (plane_d[j] - (ox * nx + oy * ny + oz * nz)) / denom
                if t < eps:
                    continue
                hx = ox + t * dx; hy = oy + t * dy; hz = oz + t * dz
                au = axis_u[j]; av = axis_v[j]
                hu = hx if au == 0 else (hy if au == 1 else hz)
                hv = hx if av == 0 else (hy if av == 1 else hz)
                s = poly_start[j]
                m = poly_start[j + 1] - s
                if _inside(hu, hv, &proj_u[s], &proj_v[s], m):
                    cnt += 1
            counts[r] = cnt
    return counts


def run_energy_recursion(indptr, indices, data, delays,
                         inj_indptr, inj_path, inj_gain,
                         tap_listener, tap_path, tap_gain, tap_delay,
                         long n_listeners, long n_samples,
                         double instability_limit):
    cdef cnp.ndarray[cnp.int32_t, ndim=1] a_indptr = np.ascontiguousarray(indptr, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] a_indices = np.ascontiguousarray(indices, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a_data = np.ascontiguousarray(data, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tau = np.ascontiguousarray(delays, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] inj_ptr = np.ascontiguousarray(inj_indptr, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] inj_p = np.ascontiguousarray(inj_path, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] inj_g = np.ascontiguousarray(inj_gain, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tp_l = np.ascontiguousarray(tap_listener, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tp_p = np.ascontiguousarray(tap_path, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tp_g = np.ascontiguousarray(tap_gain, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tp_d = np.ascontiguousarray(tap_delay, dtype=np.int64)

    cdef long n_paths = tau.shape[0]
    cdef long n_taps = tp_l.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] offsets = np.zeros(n_paths, dtype=np.int64)
    cdef long total = 0
    cdef long k
    for k in range(n_paths):
        offsets[k] = total
        total += tau[k]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.zeros(total)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ptr = np.zeros(n_paths, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xdel = np.zeros(n_paths)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.zeros(n_paths)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.zeros(n_listeners * n_samples)

    cdef long n, i, jj, a, b, pos
    cdef double acc, xmax
    cdef long bad_step = -1

    with nogil:
        for n in range(n_samples):
            for k in range(n_paths):
                xdel[k] = buf[offsets[k] + ptr[k]]
            xmax = 0.0
            for i in range(n_paths):
                acc = 0.0
                for jj in range(a_indptr[i], a_indptr[i + 1]):
                    acc += a_data[jj] * xdel[a_indices[jj]]
                x[i] = acc
            a = inj_ptr[n]; b = inj_ptr[n + 1]
            for jj in range(a, b):
                x[inj_p[jj]] += inj_g[jj]
            for i in range(n_paths):
                if x[i] > xmax:
                    xmax = x[i]
            if xmax > instability_limit:
                bad_step = n
                break
            for jj in range(n_taps):
                pos = tp_d[jj] + n
                if pos < n_samples:
                    y[tp_l[jj] * n_samples + pos] += tp_g[jj] * x[tp_p[jj]]
            for k in range(n_paths):
                buf[offsets[k] + ptr[k]] = x[k]
                ptr[k] += 1
                if ptr[k] == tau[k]:
                    ptr[k] = 0
    if bad_step >= 0:
        raise InstabilityError(
            f"state exceeded {instability_limit:g} at sample {bad_step} "
            "(lossless or amplifying configuration)"
        )
    return y.reshape(n_listeners, n_samples)
