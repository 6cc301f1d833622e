import json

import numpy as np
import pytest

from modart import fixtures
from modart.errors import ParseError, ValidationError
from modart.geometry import (
    Ray,
    check_watertight,
    intersect,
    line_of_sight,
    load_scene,
    point_inside,
    save_scene,
    scene_from_dict,
    scene_to_dict,
)
from modart.sampling import uniform_sphere_directions

from conftest import brute_force_nearest


def test_unit_shoebox_has_six_patches(unit_box):
    assert unit_box.n_patches == 6
    assert np.all(unit_box.alpha == 0.5)


def test_three_room_fixture_shape(three_room):
    assert three_room.n_patches == 140
    assert set(np.round(three_room.material_alpha, 3)) == {0.2, 0.01, 0.1}
    assert len(three_room.sources) == 1
    assert len(three_room.listeners) == 3


def test_alpha_out_of_range_rejected(unit_box):
    data = scene_to_dict(unit_box)
    data["materials"][0]["alpha"] = 1.3
    with pytest.raises(ValidationError, match="material 0"):
        scene_from_dict(data)


def test_degenerate_polygon_rejected(unit_box):
    data = scene_to_dict(unit_box)
    loop = data["polygons"][0]["vertex_indices"]
    data["polygons"][0]["vertex_indices"] = [loop[0], loop[1], loop[0], loop[1]]
    with pytest.raises(ValidationError, match="polygon 0"):
        scene_from_dict(data)


def test_open_box_rejected(unit_box):
    data = scene_to_dict(unit_box)
    del data["polygons"][3]
    with pytest.raises(ValidationError, match="watertight|outside"):
        scene_from_dict(data)


def test_missing_keys_raise_parse_error():
    with pytest.raises(ParseError):
        scene_from_dict({"vertices": []})


def test_load_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_scene(tmp_path / "nope.scene")


def test_load_bad_json(tmp_path):
    p = tmp_path / "bad.scene"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_scene(p)


def test_scene_roundtrip(tmp_path, unit_box):
    p = tmp_path / "box.scene"
    save_scene(unit_box, p)
    again = load_scene(p)
    assert again.content_hash == unit_box.content_hash


def test_ray_direction_must_be_unit():
    with pytest.raises(ValidationError):
        Ray(origin=(0, 0, 0), direction=(1.0, 1.0, 0.0))


def test_axis_hit(unit_box):
    hit = intersect(unit_box, Ray(origin=(0.5, 0.5, 0.5), direction=(1.0, 0.0, 0.0)))
    assert hit.distance == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(hit.point, [1.0, 0.5, 0.5], atol=1e-9)


def test_diagonal_hit(unit_box):
    d = np.array([1.0, 1.0, 0.0])
    d /= np.linalg.norm(d)
    hit = intersect(unit_box, Ray(origin=(0.5, 0.5, 0.5), direction=d))
    assert hit.distance == pytest.approx(0.5 * np.sqrt(2), abs=1e-12)


def test_hit_point_identity(unit_box):
    dirs = uniform_sphere_directions(64, seed=5, stream=("watertight",))
    for d in dirs:
        hit = intersect(unit_box, Ray(origin=(0.4, 0.6, 0.3), direction=d))
        recon = np.array([0.4, 0.6, 0.3]) + hit.distance * d
        assert np.linalg.norm(recon - hit.point) <= 1e-9


def test_three_room_hit_matches_brute_force(three_room):
    src = np.array(fixtures.THREE_ROOM_SOURCE)
    d = np.array([-1.0, 0.05, 0.02])
    d /= np.linalg.norm(d)
    hit = intersect(three_room, Ray(origin=src, direction=d))
    j, t = brute_force_nearest(three_room, src, d)
    assert hit.polygon_index == j
    assert hit.distance == pytest.approx(t, abs=1e-9)
    # toward the left wall: the hit patch lies on the x=0 plane
    assert abs(three_room.plane_d[hit.polygon_index]) < 1e-9
    assert np.allclose(three_room.normals[hit.polygon_index], [1, 0, 0], atol=1e-12)


def test_intersect_is_minimal(three_room):
    dirs = uniform_sphere_directions(40, seed=12, stream=("watertight",))
    origin = np.array([8.8, 3.5, 1.5])
    for d in dirs:
        hit = intersect(three_room, Ray(origin=origin, direction=d))
        j, t = brute_force_nearest(three_room, origin, d)
        assert hit is not None
        assert hit.distance <= t + 1e-9


def test_line_of_sight_same_room(three_room):
    s = fixtures.THREE_ROOM_SOURCE
    l1 = fixtures.THREE_ROOM_LISTENERS[0]
    assert line_of_sight(three_room, s, l1)


def test_line_of_sight_across_rooms_blocked(three_room):
    s = fixtures.THREE_ROOM_SOURCE
    l3 = fixtures.THREE_ROOM_LISTENERS[2]
    assert not line_of_sight(three_room, s, l3)


def test_line_of_sight_zero_length(unit_box):
    assert line_of_sight(unit_box, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5))


def test_line_of_sight_symmetry(three_room):
    rng = np.random.default_rng(3)
    pts = []
    while len(pts) < 8:
        p = rng.uniform([0.2, 0.2, 0.2], [9.8, 12.8, 2.8])
        if point_inside(three_room, p):
            pts.append(p)
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            assert line_of_sight(three_room, pts[i], pts[j]) == line_of_sight(
                three_room, pts[j], pts[i]
            )


def test_watertight_witness(three_room):
    check_watertight(three_room, n_rays=10_000, seed=0)


def test_point_inside(three_room):
    assert point_inside(three_room, (2, 2, 1.5))
    assert point_inside(three_room, (9.3, 10.2, 1.5))
    assert not point_inside(three_room, (5.0, 7.0, 1.5))  # notch outside middle room
    assert not point_inside(three_room, (-1.0, 1.0, 1.5))


def test_endpoint_outside_rejected(unit_box):
    data = scene_to_dict(unit_box)
    data["sources"] = [[2.0, 0.5, 0.5]]
    with pytest.raises(ValidationError, match="sources"):
        scene_from_dict(data)
