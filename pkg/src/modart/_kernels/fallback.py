"""Pure-numpy implementations of the hot kernels.

Semantics (including floating-point operation order per ray/polygon pair
and tie-breaking) match the compiled core exactly, so both backends return
bit-identical results.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import InstabilityError

_CHUNK = 8192
_DENOM_EPS = 1e-15
_EDGE_EPS = 1e-9  # boundary-inclusive containment tolerance, meters


def _plane_hits(pack, origins, dirs, j):
    n = pack.normals[j]
    denom = dirs @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (pack.plane_d[j] - origins @ n) / denom
    return denom, t


def _inside_mask(pack, j, hu, hv, active):
    """Crossing-number containment, inclusive of the boundary within _EDGE_EPS."""
    s, e = pack.poly_start[j], pack.poly_start[j + 1]
    u = pack.proj_u[s:e]
    v = pack.proj_v[s:e]
    inside = np.zeros(hu.shape, dtype=bool)
    near_edge = np.zeros(hu.shape, dtype=bool)
    m = e - s
    eps2 = _EDGE_EPS * _EDGE_EPS
    for a in range(m):
        b = (a + 1) % m
        u1, v1 = u[a], v[a]
        u2, v2 = u[b], v[b]
        spans = (v1 > hv) != (v2 > hv)
        if np.any(spans & active):
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = (u2 - u1) * (hv - v1) / (v2 - v1) + u1
            inside ^= spans & (hu < xint)
        # Squared distance from (hu, hv) to the edge segment.
        with np.errstate(invalid="ignore"):
            su, sv = u2 - u1, v2 - v1
            wu, wv = hu - u1, hv - v1
            seg2 = su * su + sv * sv
            if seg2 > 0.0:
                c = np.clip((wu * su + wv * sv) / seg2, 0.0, 1.0)
            else:
                c = 0.0
            du = wu - c * su
            dv = wv - c * sv
            near_edge |= du * du + dv * dv <= eps2
    return inside | near_edge


def ray_nearest(pack, origins, directions, t_min, front_only):
    """Nearest polygon hit per ray; ties resolved to the lowest polygon index.

    Returns (index, distance) with index -1 where nothing is hit.
    """
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    n_rays = origins.shape[0]
    best_idx = np.full(n_rays, -1, dtype=np.int64)
    best_t = np.full(n_rays, np.inf)
    n_poly = len(pack.plane_d)
    for lo in range(0, n_rays, _CHUNK):
        hi = min(lo + _CHUNK, n_rays)
        o = origins[lo:hi]
        d = directions[lo:hi]
        bt = best_t[lo:hi]
        bi = best_idx[lo:hi]
        for j in range(n_poly):
            denom, t = _plane_hits(pack, o, d, j)
            valid = np.abs(denom) > _DENOM_EPS
            if front_only:
                valid &= denom < 0.0
            valid &= t >= t_min
            valid &= t < bt
            if not np.any(valid):
                continue
            au, av = pack.axis_u[j], pack.axis_v[j]
            hu = o[:, au] + t * d[:, au]
            hv = o[:, av] + t * d[:, av]
            valid &= _inside_mask(pack, j, hu, hv, valid)
            bt[valid] = t[valid]
            bi[valid] = j
        best_t[lo:hi] = bt
        best_idx[lo:hi] = bi
    return best_idx, best_t


def segments_blocked(pack, starts, ends, eps):
    """True where any polygon crosses the open segment (eps end tolerance)."""
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    n_seg = starts.shape[0]
    blocked = np.zeros(n_seg, dtype=bool)
    n_poly = len(pack.plane_d)
    for lo in range(0, n_seg, _CHUNK):
        hi = min(lo + _CHUNK, n_seg)
        s = starts[lo:hi]
        delta = ends[lo:hi] - s
        r = np.linalg.norm(delta, axis=1)
        ok = r > 2.0 * eps
        with np.errstate(divide="ignore", invalid="ignore"):
            d = delta / r[:, None]
        blk = np.zeros(hi - lo, dtype=bool)
        for j in range(n_poly):
            denom, t = _plane_hits(pack, s, d, j)
            valid = ok & (np.abs(denom) > _DENOM_EPS) & (t >= eps) & (t <= r - eps) & ~blk
            if not np.any(valid):
                continue
            au, av = pack.axis_u[j], pack.axis_v[j]
            hu = s[:, au] + t * d[:, au]
            hv = s[:, av] + t * d[:, av]
            blk |= valid & _inside_mask(pack, j, hu, hv, valid)
        blocked[lo:hi] = blk
    return blocked


def count_crossings(pack, origins, directions, eps):
    """Number of polygon crossings along each ray, regardless of facing."""
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    n_rays = origins.shape[0]
    counts = np.zeros(n_rays, dtype=np.int64)
    for j in range(len(pack.plane_d)):
        denom, t = _plane_hits(pack, origins, directions, j)
        valid = (np.abs(denom) > _DENOM_EPS) & (t >= eps)
        if not np.any(valid):
            continue
        au, av = pack.axis_u[j], pack.axis_v[j]
        hu = origins[:, au] + t * directions[:, au]
        hv = origins[:, av] + t * directions[:, av]
        counts += (valid & _inside_mask(pack, j, hu, hv, valid)).astype(np.int64)
    return counts


def run_energy_recursion(
    indptr,
    indices,
    data,
    delays,
    inj_indptr,
    inj_path,
    inj_gain,
    tap_listener,
    tap_path,
    tap_gain,
    tap_delay,
    n_listeners,
    n_samples,
    instability_limit,
):
    """Single-source time recursion with ring-buffered path delays.

    State x[k] is the energy departing path k at the current step; taps
    scatter gain * x into the output at (current step + tap delay).
    """
    n_paths = len(delays)
    a_mat = sp.csr_matrix((data, indices, indptr), shape=(n_paths, n_paths))
    delays = np.asarray(delays, dtype=np.int64)
    offsets = np.zeros(n_paths, dtype=np.int64)
    offsets[1:] = np.cumsum(delays)[:-1]
    buf = np.zeros(int(delays.sum()))
    ptr = np.zeros(n_paths, dtype=np.int64)

    y = np.zeros(n_listeners * n_samples)
    tap_listener = np.asarray(tap_listener, dtype=np.int64)
    tap_path = np.asarray(tap_path, dtype=np.int64)
    tap_delay = np.asarray(tap_delay, dtype=np.int64)
    tap_gain = np.asarray(tap_gain, dtype=np.float64)
    tap_base = tap_listener * n_samples + tap_delay

    for n in range(n_samples):
        slots = offsets + ptr
        xdel = buf[slots]
        x = a_mat.dot(xdel)
        a, b = inj_indptr[n], inj_indptr[n + 1]
        if b > a:
            np.add.at(x, inj_path[a:b], inj_gain[a:b])
        if x.size and np.max(x) > instability_limit:
            raise InstabilityError(
                f"state exceeded {instability_limit:g} at sample {n} "
                "(lossless or amplifying configuration)"
            )
        if tap_path.size:
            pos = tap_base + n
            valid = tap_delay + n < n_samples
            np.add.at(y, pos[valid], tap_gain[valid] * x[tap_path[valid]])
        buf[slots] = x
        ptr += 1
        ptr[ptr == delays] = 0
    return y.reshape(n_listeners, n_samples)
