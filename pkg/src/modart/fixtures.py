"""Canonical test scenes built programmatically.

All fixtures use axis-aligned rectangles. Interior partition walls are
zero-thickness fins: two coincident rectangles with opposite normals, one
per adjoining room, each carrying its room's absorption. Parity and
front-face tests keep ray queries well-defined on such fins.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import Scene, finalize_scene

# Three coupled rooms (left / middle / right), heights 3 m, connected by two
# full-height 1.5 m-wide openings. Footprints: left 4x8 at x in [0,4],
# y in [0,8]; middle 6x3 at x in [4,10], y in [2,5]; right 4x8 at
# x in [6,10], y in [5,13]. Openings: x=4, y in [2.75,4.25] and y=5,
# x in [8.5,10]. Absorption per room: 0.2, 0.01, 0.1.
THREE_ROOM_ALPHA = (0.2, 0.01, 0.1)
THREE_ROOM_SOURCE = (2.0, 2.0, 1.5)
THREE_ROOM_LISTENERS = ((2.0, 6.8, 1.5), (8.8, 3.5, 1.5), (9.3, 10.2, 1.5))
THREE_ROOM_HEIGHT = 3.0

# Patch-edge targets that reproduce the reference patching density of the
# three-room scene: 140 patches, ~7800 directed paths (see tests).
THREE_ROOM_WALL_EDGE = 1.5
THREE_ROOM_FLOOR_EDGE = 1.7


class _SceneBuilder:
    def __init__(self):
        self.vertices = []
        self.vert_index = {}
        self.polygons = []
        self.material_ids = []

    def _vid(self, p):
        key = (round(p[0], 9), round(p[1], 9), round(p[2], 9))
        idx = self.vert_index.get(key)
        if idx is None:
            idx = len(self.vertices)
            self.vert_index[key] = idx
            self.vertices.append([float(c) for c in key])
        return idx

    def add_rect(self, origin, e1, e2, material, n1=1, n2=1):
        """Add an n1 x n2 grid of patches over origin + [0,1]e1 + [0,1]e2.

        Winding is (o, o+e1, o+e1+e2, o+e2), so the outward normal is
        cross(e1, e2) normalized; callers orient it into the air volume.
        """
        origin = np.asarray(origin, dtype=float)
        e1 = np.asarray(e1, dtype=float)
        e2 = np.asarray(e2, dtype=float)
        for i in range(n1):
            for j in range(n2):
                a = origin + e1 * (i / n1) + e2 * (j / n2)
                b = origin + e1 * ((i + 1) / n1) + e2 * (j / n2)
                c = origin + e1 * ((i + 1) / n1) + e2 * ((j + 1) / n2)
                d = origin + e1 * (i / n1) + e2 * ((j + 1) / n2)
                self.polygons.append([self._vid(p) for p in (a, b, c, d)])
                self.material_ids.append(material)

    def build(self, material_alpha, sources, listeners, validate=True,
              speed_of_sound=343.0) -> Scene:
        scene = Scene(
            vertices=np.asarray(self.vertices, dtype=np.float64),
            polygons=tuple(np.asarray(p, dtype=np.int32) for p in self.polygons),
            material_ids=np.asarray(self.material_ids, dtype=np.int32),
            material_alpha=np.asarray(material_alpha, dtype=np.float64),
            sources=np.asarray(sources, dtype=np.float64).reshape(-1, 3),
            listeners=np.asarray(listeners, dtype=np.float64).reshape(-1, 3),
            speed_of_sound=speed_of_sound,
        )
        return finalize_scene(scene, validate=validate)


def _tiles(length, edge):
    if edge is None:
        return 1
    return max(1, int(math.floor(length / edge + 0.5)))


def box_scene(dims, alpha=0.5, max_edge=None, sources=(), listeners=(),
              validate=True) -> Scene:
    """Axis-aligned box enclosure with inward normals.

    alpha is one coefficient for all faces or a sequence of six (order:
    x=0, x=dx, y=0, y=dy, z=0, z=dz). With max_edge set, every face is
    split into ceil(length/max_edge) tiles per axis, one patch per tile.
    """
    dx, dy, dz = (float(v) for v in dims)
    b = _SceneBuilder()

    def n_t(length):
        if max_edge is None:
            return 1
        return max(1, int(math.ceil(length / max_edge - 1e-12)))

    # (origin, e1, e2) chosen so cross(e1, e2) points into the box.
    faces = [
        ((0, 0, 0), (0, dy, 0), (0, 0, dz)),  # x = 0, normal +x
        ((dx, 0, 0), (0, 0, dz), (0, dy, 0)),  # x = dx, normal -x
        ((0, 0, 0), (0, 0, dz), (dx, 0, 0)),  # y = 0, normal +y
        ((0, dy, 0), (dx, 0, 0), (0, 0, dz)),  # y = dy, normal -y
        ((0, 0, 0), (dx, 0, 0), (0, dy, 0)),  # z = 0, normal +z
        ((0, 0, dz), (0, dy, 0), (dx, 0, 0)),  # z = dz, normal -z
    ]
    alphas = list(alpha) if np.ndim(alpha) else [float(alpha)]
    materials = ([0] * 6) if len(alphas) == 1 else list(range(6))
    if len(alphas) not in (1, 6):
        raise ValueError("alpha must be a scalar or six per-face values")
    for (origin, e1, e2), mid in zip(faces, materials):
        b.add_rect(origin, e1, e2,
                   material=mid,
                   n1=n_t(np.linalg.norm(e1)),
                   n2=n_t(np.linalg.norm(e2)))
    if len(np.atleast_2d(np.asarray(sources)).reshape(-1, 3)) == 0:
        sources = [(dx / 2, dy / 2, dz / 2)]
    if len(np.atleast_2d(np.asarray(listeners)).reshape(-1, 3)) == 0:
        listeners = [(dx / 3, dy / 3, dz / 2)]
    return b.build(alphas, sources, listeners, validate=validate)


def unit_shoebox_scene(alpha=0.5) -> Scene:
    """Unit cube, 6 patches, uniform absorption."""
    return box_scene((1.0, 1.0, 1.0), alpha=alpha,
                     sources=[(0.5, 0.5, 0.5)], listeners=[(0.3, 0.4, 0.5)])


def sixpatch_scene(alpha=0.5) -> Scene:
    """Six-patch box with unequal edges (keeps the pole spectrum simple).

    Sized so the dominant decay time sits above 0.1 s at alpha = 0.5.
    """
    return box_scene((3.0, 3.9, 5.1), alpha=alpha,
                     sources=[(1.2, 1.5, 2.4)], listeners=[(2.1, 2.7, 3.3)])


def shoebox32_scene(alpha=0.3) -> Scene:
    """6 m x 4 m x 3 m box split into 32 patches (848 directed paths)."""
    return box_scene((6.0, 4.0, 3.0), alpha=alpha, max_edge=2.0,
                     sources=[(2.0, 1.5, 1.2)], listeners=[(4.5, 2.5, 1.6)])


def three_room_scene(wall_edge=THREE_ROOM_WALL_EDGE,
                     floor_edge=THREE_ROOM_FLOOR_EDGE,
                     listeners=THREE_ROOM_LISTENERS,
                     sources=(THREE_ROOM_SOURCE,),
                     validate=True) -> Scene:
    """Three coupled rooms with per-room absorption (see module docstring)."""
    h = THREE_ROOM_HEIGHT
    b = _SceneBuilder()

    def wall(origin, e1, e2, material):
        b.add_rect(origin, e1, e2, material,
                   n1=_tiles(np.linalg.norm(e1), wall_edge),
                   n2=_tiles(np.linalg.norm(e2), wall_edge))

    def slab(origin, e1, e2, material):
        b.add_rect(origin, e1, e2, material,
                   n1=_tiles(np.linalg.norm(e1), floor_edge),
                   n2=_tiles(np.linalg.norm(e2), floor_edge))

    L, M, R = 0, 1, 2

    # Left room x in [0,4], y in [0,8].
    wall((0, 0, 0), (0, 8, 0), (0, 0, h), L)            # x=0, +x
    wall((0, 0, 0), (0, 0, h), (4, 0, 0), L)            # y=0, +y
    wall((0, 8, 0), (4, 0, 0), (0, 0, h), L)            # y=8, -y
    wall((4, 0, 0), (0, 0, h), (0, 2.75, 0), L)         # x=4 low fin, -x
    wall((4, 4.25, 0), (0, 0, h), (0, 3.75, 0), L)      # x=4 high fin, -x
    slab((0, 0, 0), (4, 0, 0), (0, 8, 0), L)            # floor, +z
    slab((0, 0, h), (0, 8, 0), (4, 0, 0), L)            # ceiling, -z

    # Middle room x in [4,10], y in [2,5].
    wall((4, 2, 0), (0, 0, h), (6, 0, 0), M)            # y=2, +y
    wall((10, 2, 0), (0, 0, h), (0, 3, 0), M)           # x=10, -x
    wall((4, 5, 0), (4.5, 0, 0), (0, 0, h), M)          # y=5 (x 4..8.5), -y
    wall((4, 2, 0), (0, 0.75, 0), (0, 0, h), M)         # x=4 low fin, +x
    wall((4, 4.25, 0), (0, 0.75, 0), (0, 0, h), M)      # x=4 high fin, +x
    slab((4, 2, 0), (6, 0, 0), (0, 3, 0), M)            # floor
    slab((4, 2, h), (0, 3, 0), (6, 0, 0), M)            # ceiling

    # Right room x in [6,10], y in [5,13].
    wall((6, 5, 0), (0, 8, 0), (0, 0, h), R)            # x=6, +x
    wall((6, 13, 0), (4, 0, 0), (0, 0, h), R)           # y=13, -y
    wall((10, 5, 0), (0, 0, h), (0, 8, 0), R)           # x=10, -x
    wall((6, 5, 0), (0, 0, h), (2.5, 0, 0), R)          # y=5 (x 6..8.5), +y
    slab((6, 5, 0), (4, 0, 0), (0, 8, 0), R)            # floor
    slab((6, 5, h), (0, 8, 0), (4, 0, 0), R)            # ceiling

    return b.build(THREE_ROOM_ALPHA, sources, listeners, validate=validate)


def room_of_point(p) -> int:
    """Room index (0 left, 1 middle, 2 right) for a three-room interior point."""
    x, y = p[0], p[1]
    if x <= 4.0 and 0.0 <= y <= 8.0:
        return 0
    if x >= 6.0 and y >= 5.0:
        return 2
    return 1
