"""Deterministic ray sampling built on counter-based (Philox) streams.

Every sampling routine derives an independent stream from (seed, stream
tag), so parallel and serial evaluation orders produce bit-identical
results, and re-tracing one endpoint never perturbs any other stream.
"""

from __future__ import annotations

import numpy as np

_STREAM_TAGS = {
    "watertight": 0,
    "visibility": 1,
    "form": 2,
    "source": 3,
    "listener": 4,
    "noise": 5,
}


def _spawn_key(stream) -> tuple:
    key = []
    for part in stream:
        if isinstance(part, str):
            key.append(_STREAM_TAGS[part])
        else:
            key.append(int(part) & 0xFFFFFFFF)
    return tuple(key)


def stream_generator(seed: int, stream=()) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_spawn_key(stream))
    return np.random.Generator(np.random.Philox(ss))


def uniform_sphere_directions(n: int, seed: int, stream=()) -> np.ndarray:
    rng = stream_generator(seed, stream)
    u = rng.random((n, 2))
    z = 1.0 - 2.0 * u[:, 0]
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = 2.0 * np.pi * u[:, 1]
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _tangent_frame(normal: np.ndarray):
    k = int(np.argmin(np.abs(normal)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = np.cross(normal, e)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(normal, t1)
    return t1, t2


def cosine_directions(normal: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map (n, 2) uniforms to cosine-weighted directions about the normal."""
    z = np.sqrt(1.0 - u[:, 0])
    r = np.sqrt(u[:, 0])
    phi = 2.0 * np.pi * u[:, 1]
    t1, t2 = _tangent_frame(normal)
    local_x = r * np.cos(phi)
    local_y = r * np.sin(phi)
    return (
        local_x[:, None] * t1[None, :]
        + local_y[:, None] * t2[None, :]
        + z[:, None] * normal[None, :]
    )


def _triangulate(pts: np.ndarray):
    """Fan triangulation; patches are assumed convex for sampling purposes."""
    m = len(pts)
    tris = [(pts[0], pts[i], pts[i + 1]) for i in range(1, m - 1)]
    areas = np.array([0.5 * np.linalg.norm(np.cross(b - a, c - a)) for a, b, c in tris])
    return tris, areas


def _allocate(counts_total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder allocation of counts_total over weights (deterministic)."""
    w = weights / weights.sum()
    raw = w * counts_total
    base = np.floor(raw).astype(np.int64)
    rem = counts_total - int(base.sum())
    if rem > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:rem]] += 1
    return base


def _stratified_unit_square(count: int, jitter: np.ndarray) -> np.ndarray:
    """count stratified points in the unit square; jitter has shape (count, 2)."""
    g = int(np.ceil(np.sqrt(count)))
    cells = np.arange(count)
    ci = cells // g
    cj = cells % g
    return np.column_stack([(cj + jitter[:, 0]) / g, (ci + jitter[:, 1]) / g])


def stratified_patch_points(pts: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Stratified sample points over a (convex) polygon given as a vertex loop."""
    tris, areas = _triangulate(pts)
    alloc = _allocate(count, areas)
    out = np.empty((count, 3))
    pos = 0
    for (a, b, c), k in zip(tris, alloc):
        if k == 0:
            continue
        jitter = rng.random((int(k), 2))
        sq = _stratified_unit_square(int(k), jitter)
        u, v = sq[:, 0], sq[:, 1]
        flip = u + v > 1.0
        u = np.where(flip, 1.0 - u, u)
        v = np.where(flip, 1.0 - v, v)
        out[pos : pos + k] = a + u[:, None] * (b - a) + v[:, None] * (c - a)
        pos += int(k)
    return out


def patch_ray_batch(pts: np.ndarray, normal: np.ndarray, count: int, seed: int, stream):
    """Stratified origins + cosine directions for one patch, one stream."""
    rng = stream_generator(seed, stream)
    origins = stratified_patch_points(pts, count, rng)
    dirs = cosine_directions(normal, rng.random((count, 2)))
    return origins, dirs
