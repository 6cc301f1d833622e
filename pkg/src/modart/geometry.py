"""Polygonal scene model: loading, validation, and ray queries.

A scene is a watertight polygonal enclosure with per-polygon absorption and
a set of interior source/listener points. Every polygon is one surface
patch. All queries (`intersect`, `line_of_sight`, `point_inside`) are pure
functions of an immutable scene, so scenes can be shared freely across
threads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError

DEFAULT_SPEED_OF_SOUND = 343.0

# Intersection tolerance in meters; ties on equal distance go to the lowest
# polygon index (enforced by ascending scan order in the kernels).
HIT_EPS = 1e-9

# Fixed, irrationally oriented directions for the parity (point-in-enclosure)
# test. Several are tried so that a grazing direction cannot flip the vote.
_PARITY_DIRS = np.array(
    [
        [0.12871945, 0.75343156, 0.64477089],
        [0.83912922, 0.21456317, 0.49992085],
        [0.33310117, 0.91128311, 0.24201175],
        [0.73411294, 0.50131313, 0.45782344],
        [0.17291811, 0.32117205, 0.93111217],
    ]
)
_PARITY_DIRS /= np.linalg.norm(_PARITY_DIRS, axis=1, keepdims=True)


@dataclass(frozen=True)
class Ray:
    """A ray with unit-norm direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-12:
            raise ValidationError(f"ray direction norm {n!r} is not 1 within 1e-12")
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class Hit:
    """Nearest-polygon intersection result."""

    polygon_index: int
    distance: float
    point: np.ndarray


@dataclass(frozen=True)
class ScenePack:
    """Flat-array view of a scene consumed by the ray kernels."""

    poly_start: np.ndarray  # (NP+1,) int32, CSR-style offsets into poly_vidx
    poly_vidx: np.ndarray  # (sum vertex counts,) int32
    vertices: np.ndarray  # (NV, 3) float64
    normals: np.ndarray  # (NP, 3) float64, unit, pointing into the air volume
    plane_d: np.ndarray  # (NP,) float64, n . x = d on the polygon plane
    axis_u: np.ndarray  # (NP,) int8, projection axes for containment tests
    axis_v: np.ndarray  # (NP,) int8
    proj_u: np.ndarray  # flat projected vertex coords aligned with poly_vidx
    proj_v: np.ndarray


@dataclass(frozen=True)
class Scene:
    """Immutable polygonal enclosure with materials and endpoints."""

    vertices: np.ndarray
    polygons: tuple  # tuple of int32 index arrays (vertex loops)
    material_ids: np.ndarray  # (NP,) int32, polygon -> material
    material_alpha: np.ndarray  # (NM,) float64
    sources: np.ndarray  # (NS, 3)
    listeners: np.ndarray  # (NR, 3)
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    # Derived quantities, filled by finalize_scene().
    alpha: np.ndarray = None  # (NP,) per-polygon absorption
    normals: np.ndarray = None
    plane_d: np.ndarray = None
    centroids: np.ndarray = None
    areas: np.ndarray = None
    pack: ScenePack = None
    content_hash: str = None

    @property
    def n_patches(self) -> int:
        return len(self.polygons)

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def n_listeners(self) -> int:
        return len(self.listeners)

    @property
    def bbox_diagonal(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def polygon_vertices(self, i: int) -> np.ndarray:
        return self.vertices[self.polygons[i]]


def _newell_normal(pts: np.ndarray) -> np.ndarray:
    """Area-weighted polygon normal (robust for any planar simple loop)."""
    nxt = np.roll(pts, -1, axis=0)
    n = np.array(
        [
            np.sum((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])),
            np.sum((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])),
            np.sum((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])),
        ]
    )
    return n


def _projection_axes(normal: np.ndarray):
    k = int(np.argmax(np.abs(normal)))
    return (1, 2) if k == 0 else (2, 0) if k == 1 else (0, 1)


def finalize_scene(scene: Scene, validate: bool = True, watertight_rays: int = 10_000,
                   watertight_seed: int = 0) -> Scene:
    """Compute derived geometry, run validation, and return the scene.

    Validation covers: absorption range, polygon planarity and degeneracy,
    endpoint containment, and a probabilistic watertightness check with a
    fixed seed (every random interior ray must hit a front-facing polygon).
    """
    verts = np.ascontiguousarray(np.asarray(scene.vertices, dtype=np.float64))
    if verts.ndim != 2 or verts.shape[1] != 3:
        raise ValidationError("vertices must be an (N, 3) array")
    polys = tuple(np.asarray(p, dtype=np.int32) for p in scene.polygons)
    n_poly = len(polys)
    if n_poly == 0:
        raise ValidationError("scene has no polygons")
    mat_ids = np.asarray(scene.material_ids, dtype=np.int32)
    mat_alpha = np.asarray(scene.material_alpha, dtype=np.float64)
    if mat_ids.shape != (n_poly,):
        raise ValidationError("material_ids must have one entry per polygon")
    if np.any(mat_ids < 0) or np.any(mat_ids >= len(mat_alpha)):
        bad = int(np.argmax((mat_ids < 0) | (mat_ids >= len(mat_alpha))))
        raise ValidationError(f"polygon {bad}: material_id {mat_ids[bad]} out of range")
    for m, a in enumerate(mat_alpha):
        if not (0.0 <= a <= 1.0):
            raise ValidationError(f"material {m}: alpha {a} outside [0, 1]")
    alpha = mat_alpha[mat_ids]

    lo, hi = verts.min(axis=0), verts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    plane_tol = 1e-6 * diag if diag > 0 else 1e-12

    normals = np.empty((n_poly, 3))
    plane_d = np.empty(n_poly)
    centroids = np.empty((n_poly, 3))
    areas = np.empty(n_poly)
    axis_u = np.empty(n_poly, dtype=np.int8)
    axis_v = np.empty(n_poly, dtype=np.int8)
    vidx_flat = []
    for i, loop in enumerate(polys):
        if len(loop) < 3:
            raise ValidationError(f"polygon {i}: fewer than 3 vertices")
        if np.any(loop < 0) or np.any(loop >= len(verts)):
            raise ValidationError(f"polygon {i}: vertex index out of range")
        pts = verts[loop]
        n = _newell_normal(pts)
        area = 0.5 * np.linalg.norm(n)
        if area <= 0.0:
            raise ValidationError(f"polygon {i}: degenerate (area is 0)")
        n = n / np.linalg.norm(n)
        d = float(np.dot(n, pts[0]))
        if validate:
            dev = np.max(np.abs(pts @ n - d))
            if dev > plane_tol:
                raise ValidationError(
                    f"polygon {i}: not planar (deviation {dev:.3g} m > {plane_tol:.3g} m)"
                )
        normals[i] = n
        plane_d[i] = d
        centroids[i] = pts.mean(axis=0)
        areas[i] = area
        au, av = _projection_axes(n)
        axis_u[i] = au
        axis_v[i] = av
        vidx_flat.append(loop)

    poly_start = np.zeros(n_poly + 1, dtype=np.int32)
    poly_start[1:] = np.cumsum([len(p) for p in polys])
    poly_vidx = np.ascontiguousarray(np.concatenate(vidx_flat).astype(np.int32))
    proj_u = np.empty(len(poly_vidx))
    proj_v = np.empty(len(poly_vidx))
    for i in range(n_poly):
        s, e = poly_start[i], poly_start[i + 1]
        pts = verts[poly_vidx[s:e]]
        proj_u[s:e] = pts[:, axis_u[i]]
        proj_v[s:e] = pts[:, axis_v[i]]

    pack = ScenePack(
        poly_start=poly_start,
        poly_vidx=poly_vidx,
        vertices=verts,
        normals=np.ascontiguousarray(normals),
        plane_d=plane_d,
        axis_u=axis_u,
        axis_v=axis_v,
        proj_u=proj_u,
        proj_v=proj_v,
    )

    sources = np.asarray(scene.sources, dtype=np.float64).reshape(-1, 3)
    listeners = np.asarray(scene.listeners, dtype=np.float64).reshape(-1, 3)

    h = hashlib.sha256()
    for arr in (verts, poly_vidx, poly_start, alpha, sources, listeners):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(np.float64(scene.speed_of_sound).tobytes())

    out = Scene(
        vertices=verts,
        polygons=polys,
        material_ids=mat_ids,
        material_alpha=mat_alpha,
        sources=sources,
        listeners=listeners,
        speed_of_sound=float(scene.speed_of_sound),
        alpha=alpha,
        normals=normals,
        plane_d=plane_d,
        centroids=centroids,
        areas=areas,
        pack=pack,
        content_hash=h.hexdigest(),
    )

    if validate:
        for tag, pts in (("sources", sources), ("listeners", listeners)):
            for j, p in enumerate(pts):
                if not point_inside(out, p):
                    raise ValidationError(f"{tag}[{j}] at {p.tolist()} is outside the enclosure")
        check_watertight(out, n_rays=watertight_rays, seed=watertight_seed)
    return out


def scene_from_dict(data: dict, validate: bool = True, watertight_rays: int = 10_000) -> Scene:
    try:
        vertices = data["vertices"]
        raw_polys = data["polygons"]
        materials = data["materials"]
        sources = data.get("sources", [])
        listeners = data.get("listeners", [])
        speed = float(data.get("speed_of_sound", DEFAULT_SPEED_OF_SOUND))
        polygons = [p["vertex_indices"] for p in raw_polys]
        material_ids = [p["material_id"] for p in raw_polys]
        material_alpha = [m["alpha"] for m in materials]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"scene schema violation: {exc!r}") from exc
    scene = Scene(
        vertices=np.asarray(vertices, dtype=np.float64),
        polygons=tuple(np.asarray(p, dtype=np.int32) for p in polygons),
        material_ids=np.asarray(material_ids, dtype=np.int32),
        material_alpha=np.asarray(material_alpha, dtype=np.float64),
        sources=np.asarray(sources, dtype=np.float64).reshape(-1, 3),
        listeners=np.asarray(listeners, dtype=np.float64).reshape(-1, 3),
        speed_of_sound=speed,
    )
    return finalize_scene(scene, validate=validate, watertight_rays=watertight_rays)


def scene_to_dict(scene: Scene) -> dict:
    return {
        "speed_of_sound": scene.speed_of_sound,
        "vertices": scene.vertices.tolist(),
        "polygons": [
            {"vertex_indices": [int(i) for i in loop], "material_id": int(mid)}
            for loop, mid in zip(scene.polygons, scene.material_ids)
        ],
        "materials": [{"alpha": float(a)} for a in scene.material_alpha],
        "sources": scene.sources.tolist(),
        "listeners": scene.listeners.tolist(),
    }


def load_scene(path, validate: bool = True, watertight_rays: int = 10_000) -> Scene:
    """Load and validate a scene file (UTF-8 JSON, see scene_from_dict)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read scene file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"scene file {path} is not valid JSON: {exc}") from exc
    return scene_from_dict(data, validate=validate, watertight_rays=watertight_rays)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(scene), fh, indent=1)
        fh.write("\n")


def _ray_nearest(scene: Scene, origins, directions, front_only=True):
    from . import _kernels

    return _kernels.ray_nearest(scene.pack, origins, directions, HIT_EPS, front_only)


def intersect(scene: Scene, ray: Ray):
    """Nearest front-facing polygon hit, or None (non-watertight scenes only)."""
    idx, t = _ray_nearest(
        scene, ray.origin.reshape(1, 3), ray.direction.reshape(1, 3), front_only=True
    )
    if idx[0] < 0:
        return None
    point = ray.origin + t[0] * ray.direction
    return Hit(polygon_index=int(idx[0]), distance=float(t[0]), point=point)


def intersect_batch(scene: Scene, origins, directions, front_only=True):
    """Vectorized nearest-hit query; returns (polygon indices, distances)."""
    return _ray_nearest(scene, origins, directions, front_only=front_only)


def line_of_sight(scene: Scene, a, b) -> bool:
    """True iff the open segment a-b crosses no polygon (1e-9 m end tolerance)."""
    a = np.asarray(a, dtype=np.float64).reshape(1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(1, 3)
    from . import _kernels

    blocked = _kernels.segments_blocked(scene.pack, a, b, HIT_EPS)
    return not bool(blocked[0])


def segments_unoccluded(scene: Scene, starts, ends) -> np.ndarray:
    """Vectorized open-segment visibility test."""
    from . import _kernels

    return ~_kernels.segments_blocked(scene.pack, starts, ends, HIT_EPS)


def point_inside(scene: Scene, p) -> bool:
    """Parity test: odd crossing count along a probe ray means inside.

    Interior zero-thickness fins contribute crossings in pairs, so parity
    is unaffected by them. A majority over several fixed probe directions
    guards against edge-grazing degeneracies.
    """
    p = np.asarray(p, dtype=np.float64).reshape(1, 3)
    from . import _kernels

    votes = 0
    for d in _PARITY_DIRS:
        n_cross = _kernels.count_crossings(scene.pack, p, d.reshape(1, 3), HIT_EPS)[0]
        votes += 1 if (n_cross % 2 == 1) else -1
    return votes > 0


def check_watertight(scene: Scene, n_rays: int = 10_000, seed: int = 0) -> None:
    """Probabilistic watertightness witness (fixed seed, deterministic).

    Casts uniformly random directed rays from an interior point; every ray
    must hit some front-facing polygon.
    """
    origin = None
    for cand in list(scene.sources) + list(scene.listeners) + [scene.vertices.mean(axis=0)]:
        if point_inside(scene, cand):
            origin = np.asarray(cand, dtype=np.float64)
            break
    if origin is None:
        raise ValidationError("no interior witness point found (all candidates outside)")
    from .sampling import uniform_sphere_directions

    dirs = uniform_sphere_directions(n_rays, seed=seed, stream=("watertight",))
    origins = np.broadcast_to(origin, (n_rays, 3))
    idx, _ = _ray_nearest(scene, origins, dirs, front_only=True)
    misses = np.flatnonzero(idx < 0)
    if misses.size:
        d = dirs[misses[0]]
        raise ValidationError(
            f"enclosure is not watertight: {misses.size}/{n_rays} probe rays "
            f"escaped (first escaping direction {d.tolist()})"
        )
