import numpy as np
import pytest

from modart import fixtures, timedomain


@pytest.fixture(scope="session")
def unit_box():
    return fixtures.unit_shoebox_scene()


@pytest.fixture(scope="session")
def sixpatch_system():
    scene = fixtures.sixpatch_scene()
    return timedomain.build_system(scene, fs_e=2000.0, seed=7)


@pytest.fixture(scope="session")
def shoebox32():
    return fixtures.shoebox32_scene()


@pytest.fixture(scope="session")
def three_room():
    return fixtures.three_room_scene()


@pytest.fixture(scope="session")
def three_room_system(three_room):
    return timedomain.build_system(three_room, fs_e=4000.0, seed=11)


def brute_force_nearest(scene, origin, direction, t_min=1e-9, front_only=True):
    """Independent nearest-hit oracle: shapely containment, plane algebra."""
    from shapely.geometry import Point, Polygon

    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    best = (None, np.inf)
    for j in range(scene.n_patches):
        n = scene.normals[j]
        denom = float(direction @ n)
        if abs(denom) < 1e-15:
            continue
        if front_only and denom >= 0:
            continue
        t = (scene.plane_d[j] - float(origin @ n)) / denom
        if t < t_min or t >= best[1]:
            continue
        pt = origin + t * direction
        pack = scene.pack
        au, av = pack.axis_u[j], pack.axis_v[j]
        s, e = pack.poly_start[j], pack.poly_start[j + 1]
        loop = list(zip(pack.proj_u[s:e], pack.proj_v[s:e]))
        poly = Polygon(loop)
        if poly.buffer(1e-9).contains(Point(pt[au], pt[av])):
            best = (j, t)
    return best
