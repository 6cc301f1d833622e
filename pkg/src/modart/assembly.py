"""Assembly of the energy propagation system from a scene.

Enumerates directed volumetric paths between mutually visible patches,
estimates form factors by cosine-weighted Monte-Carlo ray casting, and
builds the sparse feedback matrix, per-path delays, and endpoint gain
vectors. Everything is a pure function of (scene, seed, ray counts).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import OutOfEnclosureError, ValidationError
from .geometry import HIT_EPS, Scene, line_of_sight, point_inside
from .sampling import patch_ray_batch, stream_generator, stratified_patch_points, uniform_sphere_directions

# Patches are mutually visible when any of the stratified point-pair rays
# between them is unoccluded (an "unobstructed view"); partial occlusion is
# captured by the form-factor ray casting, not by the visibility bit.
VISIBILITY_RAYS = 16
VISIBILITY_QUORUM = 1


@dataclass(frozen=True)
class PathSet:
    """Directed volumetric paths between mutually visible patches."""

    from_patch: np.ndarray  # (N_L,) int32
    to_patch: np.ndarray  # (N_L,) int32
    length_m: np.ndarray  # (N_L,) float64, centroid-to-centroid
    index: dict  # (from, to) -> path index
    outgoing: tuple  # per patch: int array of departing path indices
    incoming: tuple  # per patch: int array of arriving path indices

    @property
    def n_paths(self) -> int:
        return len(self.from_patch)

    def index_of(self, i: int, j: int) -> int:
        return self.index[(i, j)]


@dataclass(frozen=True)
class FeedbackMatrix:
    """Sparse reflection kernel mapping arriving-path to departing-path energy."""

    matrix: sp.csr_matrix  # (N_L, N_L), entries >= 0

    @property
    def nnz(self) -> int:
        return self.matrix.nnz


@dataclass(frozen=True)
class DelaySet:
    """Per-path propagation delays at the energy sample rate."""

    real: np.ndarray  # float64, length_m * fs_e / c
    integer: np.ndarray  # int64, max(1, round(real))
    fs_e: float


@dataclass(frozen=True)
class GainEntries:
    """Sparse endpoint coupling: one (path, gain, delay) triple per entry."""

    path: np.ndarray  # int64
    gain: np.ndarray  # float64, >= 0
    delay: np.ndarray  # float64, samples (real-valued)
    delay_int: np.ndarray  # int64, round(delay), >= 0

    @property
    def nnz(self) -> int:
        return len(self.path)


@dataclass(frozen=True)
class GainSet:
    """Per-source input and per-listener output gain vectors, plus direct terms."""

    sources: tuple  # tuple[GainEntries], one per source
    listeners: tuple  # tuple[GainEntries], one per listener
    direct_gain: np.ndarray  # (N_R, N_S) float64, 0 where no line of sight
    direct_delay: np.ndarray  # (N_R, N_S) float64, samples
    direct_present: np.ndarray  # (N_R, N_S) bool
    fs_e: float
    scene_hash: str


def enumerate_paths(scene: Scene, seed: int = 0) -> PathSet:
    """Directed paths between mutually visible patches (symmetric by construction).

    Mutual visibility requires at least VISIBILITY_QUORUM of VISIBILITY_RAYS
    stratified point-pair segments to be unoccluded and mutually front-facing.
    """
    n = scene.n_patches
    pair_i = []
    pair_j = []
    starts = []
    ends = []
    front_ok = []
    for i in range(n):
        pts_i = stratified_patch_points(
            scene.polygon_vertices(i), VISIBILITY_RAYS,
            stream_generator(seed, ("visibility", i)),
        )
        for j in range(i + 1, n):
            pts_j = stratified_patch_points(
                scene.polygon_vertices(j), VISIBILITY_RAYS,
                stream_generator(seed, ("visibility", j)),
            )
            seg = pts_j - pts_i
            # Energy leaves the front side of both patches.
            ok = (seg @ scene.normals[i] > HIT_EPS) & (-seg @ scene.normals[j] > HIT_EPS)
            pair_i.append(i)
            pair_j.append(j)
            starts.append(pts_i)
            ends.append(pts_j)
            front_ok.append(ok)
    if pair_i:
        starts = np.concatenate(starts)
        ends = np.concatenate(ends)
        blocked = _kernels.segments_blocked(scene.pack, starts, ends, HIT_EPS)
        clear = (~blocked).reshape(-1, VISIBILITY_RAYS)
        front = np.asarray(front_ok)
        votes = (clear & front).sum(axis=1)
        visible = votes >= VISIBILITY_QUORUM
    else:
        visible = np.zeros(0, dtype=bool)

    from_patch = []
    to_patch = []
    for (i, j, vis) in zip(pair_i, pair_j, visible):
        if vis:
            from_patch.append((i, j))
            from_patch.append((j, i))
    from_patch.sort()
    fp = np.array([p[0] for p in from_patch], dtype=np.int32)
    tp = np.array([p[1] for p in from_patch], dtype=np.int32)
    lengths = np.linalg.norm(scene.centroids[fp] - scene.centroids[tp], axis=1)
    index = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(fp, tp))}
    outgoing = tuple(np.flatnonzero(fp == p).astype(np.int64) for p in range(n))
    incoming = tuple(np.flatnonzero(tp == p).astype(np.int64) for p in range(n))
    return PathSet(fp, tp, lengths, index, outgoing, incoming)


def form_factors(scene: Scene, n_rays_per_patch: int, seed: int = 0) -> sp.csr_matrix:
    """Monte-Carlo form factor rows; each row sums to exactly 1.

    F[i, j] is the fraction of cosine-weighted diffuse rays leaving patch i
    (stratified origins, cosine directions about the normal) whose first
    front-facing hit is patch j.
    """
    n = scene.n_patches
    rows = []
    cols = []
    vals = []
    for i in range(n):
        origins, dirs = patch_ray_batch(
            scene.polygon_vertices(i), scene.normals[i],
            n_rays_per_patch, seed, ("form", i),
        )
        idx, _ = _kernels.ray_nearest(scene.pack, origins, dirs, HIT_EPS, True)
        if np.any(idx < 0):
            lost = int(np.sum(idx < 0))
            raise ValidationError(
                f"{lost} form-factor rays from patch {i} escaped the enclosure"
            )
        counts = np.bincount(idx, minlength=n)
        hit = np.flatnonzero(counts)
        rows.append(np.full(len(hit), i, dtype=np.int64))
        cols.append(hit)
        vals.append(counts[hit] / float(n_rays_per_patch))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )


def assemble_feedback(scene: Scene, paths: PathSet, factors: sp.csr_matrix) -> FeedbackMatrix:
    """Ideal-diffuse reflection kernel: A[(b->c),(a->b)] = (1-alpha_b) F[b,c]."""
    f_dense_rows = {}
    rows = []
    cols = []
    vals = []
    for b in range(scene.n_patches):
        inc = paths.incoming[b]
        out = paths.outgoing[b]
        if len(inc) == 0 or len(out) == 0:
            continue
        frow = factors[b].toarray().ravel()
        gains = (1.0 - scene.alpha[b]) * frow[paths.to_patch[out]]
        rows.append(np.repeat(out, len(inc)))
        cols.append(np.tile(inc, len(out)))
        vals.append(np.repeat(gains, len(inc)))
    n_l = paths.n_paths
    if rows:
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_l, n_l),
        )
    else:
        mat = sp.csr_matrix((n_l, n_l))
    mat.eliminate_zeros()
    mat.sort_indices()
    return FeedbackMatrix(matrix=mat)


def make_delays(paths: PathSet, fs_e: float, speed_of_sound: float) -> DelaySet:
    real = paths.length_m * fs_e / speed_of_sound
    integer = np.maximum(1, np.rint(real).astype(np.int64))
    return DelaySet(real=real, integer=integer, fs_e=float(fs_e))


def _trace_endpoint(scene: Scene, position, n_rays: int, seed: int, stream):
    position = np.asarray(position, dtype=np.float64)
    dirs = uniform_sphere_directions(n_rays, seed, stream)
    origins = np.broadcast_to(position, (n_rays, 3))
    idx, dist = _kernels.ray_nearest(scene.pack, origins, dirs, HIT_EPS, True)
    if np.any(idx < 0):
        lost = int(np.sum(idx < 0))
        raise ValidationError(f"{lost} endpoint rays escaped the enclosure")
    return idx, dist


def _arrival_bins(idx, dist, fs_e, speed_of_sound, n_rays):
    """Aggregate ray hits by (patch, rounded delay); weights sum to 1."""
    delay = dist * fs_e / speed_of_sound
    delay_int = np.rint(delay).astype(np.int64)
    order = np.lexsort((delay_int, idx))
    idx = idx[order]
    delay = delay[order]
    delay_int = delay_int[order]
    boundaries = np.flatnonzero(
        np.diff(idx, prepend=idx[0] - 1) | np.diff(delay_int, prepend=delay_int[0] - 1)
    )
    counts = np.diff(np.append(boundaries, len(idx)))
    sums = np.add.reduceat(delay, boundaries)
    return (
        idx[boundaries],
        counts / float(n_rays),
        sums / counts,  # weight-averaged real delay per bin
        delay_int[boundaries],
    )


def endpoint_gains(scene: Scene, paths: PathSet, factors: sp.csr_matrix, endpoint,
                   kind: str, n_rays: int, seed: int, endpoint_index: int = 0,
                   fs_e: float = 1.0) -> GainEntries:
    """Sparse endpoint coupling vector from one order of ray tracing.

    A ray hitting patch p at distance d contributes, per departing path
    (p -> q): gain (1/n_rays)(1-alpha_p) F[p,q] for a source; per arriving
    path (q -> p): gain (1/n_rays)(1-alpha_p) for a listener. Delays are
    d * fs_e / c samples. The sampling stream depends only on
    (seed, kind, endpoint_index), never on position.
    """
    if kind not in ("source", "listener"):
        raise ValueError(f"unknown endpoint kind {kind!r}")
    if not point_inside(scene, endpoint):
        raise OutOfEnclosureError(f"{kind} endpoint {np.asarray(endpoint).tolist()} "
                                  "is outside the enclosure")
    idx, dist = _trace_endpoint(scene, endpoint, n_rays, seed, (kind, endpoint_index))
    patches, weights, delays, delays_int = _arrival_bins(
        idx, dist, fs_e, scene.speed_of_sound, n_rays
    )
    path_out = []
    gain_out = []
    delay_out = []
    delay_int_out = []
    for p, w, dly, dly_i in zip(patches, weights, delays, delays_int):
        refl = (1.0 - scene.alpha[p]) * w
        if refl == 0.0:
            continue
        if kind == "source":
            plist = paths.outgoing[p]
            if len(plist) == 0:
                continue
            frow = factors[p].toarray().ravel()
            gains = refl * frow[paths.to_patch[plist]]
        else:
            plist = paths.incoming[p]
            if len(plist) == 0:
                continue
            gains = np.full(len(plist), refl)
        keep = gains > 0.0
        path_out.append(plist[keep])
        gain_out.append(gains[keep])
        delay_out.append(np.full(int(keep.sum()), dly))
        delay_int_out.append(np.full(int(keep.sum()), dly_i, dtype=np.int64))
    if path_out:
        path = np.concatenate(path_out)
        gain = np.concatenate(gain_out)
        delay = np.concatenate(delay_out)
        delay_int = np.concatenate(delay_int_out)
        order = np.lexsort((delay_int, path))
        return GainEntries(path[order], gain[order], delay[order], delay_int[order])
    z = np.zeros(0)
    return GainEntries(z.astype(np.int64), z, z, z.astype(np.int64))


def direct_gain(scene: Scene, source, listener, fs_e: float):
    """Line-of-sight coupling: (1/(4 pi r^2), r fs_e / c) or None if occluded."""
    source = np.asarray(source, dtype=np.float64)
    listener = np.asarray(listener, dtype=np.float64)
    if not line_of_sight(scene, source, listener):
        return None
    r = float(np.linalg.norm(listener - source))
    if r < 1e-12:
        raise ValidationError("source and listener positions coincide")
    return 1.0 / (4.0 * np.pi * r * r), r * fs_e / scene.speed_of_sound


def build_gain_set(scene: Scene, paths: PathSet, factors: sp.csr_matrix,
                   fs_e: float, n_rays: int, seed: int) -> GainSet:
    sources = tuple(
        endpoint_gains(scene, paths, factors, pos, "source", n_rays, seed,
                       endpoint_index=s, fs_e=fs_e)
        for s, pos in enumerate(scene.sources)
    )
    listeners = tuple(
        endpoint_gains(scene, paths, factors, pos, "listener", n_rays, seed,
                       endpoint_index=l, fs_e=fs_e)
        for l, pos in enumerate(scene.listeners)
    )
    n_r, n_s = scene.n_listeners, scene.n_sources
    dgain = np.zeros((n_r, n_s))
    ddelay = np.zeros((n_r, n_s))
    dpresent = np.zeros((n_r, n_s), dtype=bool)
    for l, lpos in enumerate(scene.listeners):
        for s, spos in enumerate(scene.sources):
            d = direct_gain(scene, spos, lpos, fs_e)
            if d is not None:
                dgain[l, s], ddelay[l, s] = d
                dpresent[l, s] = True
    return GainSet(
        sources=sources,
        listeners=listeners,
        direct_gain=dgain,
        direct_delay=ddelay,
        direct_present=dpresent,
        fs_e=float(fs_e),
        scene_hash=scene.content_hash,
    )


def gain_entries_hash(entries: GainEntries) -> str:
    h = hashlib.sha256()
    for arr in (entries.path, entries.gain, entries.delay, entries.delay_int):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
