import math

import numpy as np
import pytest

from modart import assembly, fixtures
from modart.errors import OutOfEnclosureError


def analytic_parallel_square_factor(a=1.0, b=1.0, c=1.0):
    """View factor between equal coaxial parallel rectangles (radiosity)."""
    x = a / c
    y = b / c
    xx = math.sqrt(1 + x * x)
    yy = math.sqrt(1 + y * y)
    term = math.log(math.sqrt((1 + x * x) * (1 + y * y) / (1 + x * x + y * y)))
    term += x * yy * math.atan(x / yy)
    term += y * xx * math.atan(y / xx)
    term -= x * math.atan(x)
    term -= y * math.atan(y)
    return 2.0 / (math.pi * x * y) * term


def test_unit_box_path_count(unit_box):
    paths = assembly.enumerate_paths(unit_box)
    assert paths.n_paths == 30  # 6 * 5 ordered pairs


def test_shoebox32_path_count(shoebox32):
    assert shoebox32.n_patches == 32
    paths = assembly.enumerate_paths(shoebox32)
    # coplanar patches on one wall never see each other, so < 32 * 31
    assert paths.n_paths == 848


def test_three_room_reference_patching(three_room):
    assert three_room.n_patches == 140
    paths = assembly.enumerate_paths(three_room, seed=11)
    assert abs(paths.n_paths - 7982) <= 0.05 * 7982


def test_path_reciprocity(three_room):
    paths = assembly.enumerate_paths(three_room, seed=11)
    pairs = set(zip(paths.from_patch.tolist(), paths.to_patch.tolist()))
    assert all((j, i) in pairs for (i, j) in pairs)
    assert paths.n_paths <= three_room.n_patches * (three_room.n_patches - 1)


def test_path_lengths_are_centroid_distances(unit_box):
    paths = assembly.enumerate_paths(unit_box)
    for k in range(paths.n_paths):
        i, j = paths.from_patch[k], paths.to_patch[k]
        d = np.linalg.norm(unit_box.centroids[i] - unit_box.centroids[j])
        assert paths.length_m[k] == pytest.approx(d, abs=1e-12)


def test_form_factor_rows_sum_to_one(unit_box):
    f = assembly.form_factors(unit_box, 2000, seed=1)
    sums = np.asarray(f.sum(axis=1)).ravel()
    assert np.array_equal(sums, np.ones(6))  # exact: counts / n_rays


def test_form_factor_diagonal_zero(unit_box):
    f = assembly.form_factors(unit_box, 2000, seed=1)
    assert np.all(f.diagonal() == 0.0)


def test_parallel_plate_form_factor(unit_box):
    # floor (z=0) and ceiling (z=1) of the unit cube are parallel unit
    # squares at distance 1; Monte-Carlo estimate within 3 sigma.
    n_rays = 20000
    f = assembly.form_factors(unit_box, n_rays, seed=2)
    expect = analytic_parallel_square_factor()
    sigma = math.sqrt(expect * (1 - expect) / n_rays)
    floor, ceiling = 4, 5  # construction order in box_scene
    assert abs(f[floor, ceiling] - expect) < 3 * sigma
    assert abs(f[ceiling, floor] - expect) < 3 * sigma


def test_form_factor_determinism(unit_box):
    f1 = assembly.form_factors(unit_box, 3000, seed=9)
    f2 = assembly.form_factors(unit_box, 3000, seed=9)
    f3 = assembly.form_factors(unit_box, 3000, seed=10)
    assert (f1 != f2).nnz == 0
    assert (f1 != f3).nnz > 0


def test_lossless_feedback_columns(three_room):
    # alpha = 0 everywhere: every column of A sums to exactly 1 in a
    # convex enclosure (all first hits land on visible patches).
    scene = fixtures.box_scene((2.0, 3.0, 2.5), alpha=0.0, validate=True)
    paths = assembly.enumerate_paths(scene)
    f = assembly.form_factors(scene, 4000, seed=3)
    a = assembly.assemble_feedback(scene, paths, f)
    sums = np.asarray(a.matrix.sum(axis=0)).ravel()
    assert np.allclose(sums, 1.0, atol=1e-12)


def test_total_absorber_blocks_columns():
    alphas = [0.3, 0.3, 1.0, 0.3, 0.3, 0.3]  # y=0 face absorbs everything
    scene = fixtures.box_scene((2.0, 3.0, 2.5), alpha=alphas)
    paths = assembly.enumerate_paths(scene)
    f = assembly.form_factors(scene, 2000, seed=4)
    a = assembly.assemble_feedback(scene, paths, f).matrix
    absorber = 2  # face order in box_scene
    arriving = [k for k in range(paths.n_paths) if paths.to_patch[k] == absorber]
    departing = [k for k in range(paths.n_paths) if paths.from_patch[k] == absorber]
    cols = np.asarray(a[:, arriving].sum(axis=0)).ravel()
    assert np.all(cols == 0.0)
    rows = np.asarray(np.abs(a[departing, :]).sum(axis=1)).ravel()
    assert np.all(rows > 0.0)


def test_column_sum_bound(sixpatch_system):
    a = sixpatch_system.a_matrix
    paths = sixpatch_system.paths
    scene = sixpatch_system.scene
    sums = np.asarray(a.sum(axis=0)).ravel()
    bound = 1.0 - scene.alpha[paths.to_patch]
    assert np.all(sums <= bound + 1e-12)


def test_feedback_nnz_structure(sixpatch_system):
    paths = sixpatch_system.paths
    expect = sum(
        len(paths.incoming[b]) * len(paths.outgoing[b])
        for b in range(sixpatch_system.scene.n_patches)
    )
    assert sixpatch_system.feedback.nnz == expect


def test_three_room_sparsity(three_room_system):
    n_l = three_room_system.n_paths
    n_p = three_room_system.scene.n_patches
    density = three_room_system.feedback.nnz / n_l**2
    assert 0.5 / n_p < density < 1.5 / n_p


def test_spectral_radius_below_one(sixpatch_system):
    a = sixpatch_system.a_matrix
    v = np.ones(a.shape[0])
    for _ in range(200):
        w = a.dot(v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            break
        v = w / nrm
    rho = float(v @ a.dot(v)) / float(v @ v)
    assert rho < 1.0


def test_delay_rounding(sixpatch_system):
    d = sixpatch_system.delays
    assert np.all(d.integer >= 1)
    big = d.real >= 0.5
    assert np.all(np.abs(d.integer[big] - d.real[big]) <= 0.5)
    assert np.all(d.integer[~big] == 1)


def test_gain_support_convex_room(unit_box):
    paths = assembly.enumerate_paths(unit_box)
    f = assembly.form_factors(unit_box, 2000, seed=5)
    src = assembly.endpoint_gains(unit_box, paths, f, (0.5, 0.5, 0.5), "source",
                                  4000, seed=5, endpoint_index=0, fs_e=1000.0)
    lsn = assembly.endpoint_gains(unit_box, paths, f, (0.5, 0.5, 0.5), "listener",
                                  4000, seed=5, endpoint_index=0, fs_e=1000.0)
    assert set(np.unique(src.path)) == set(range(30))
    assert set(np.unique(lsn.path)) == set(range(30))
    assert np.all(src.gain >= 0) and np.all(lsn.gain >= 0)


def test_center_source_symmetry(unit_box):
    # from the cube center, accumulated weight per wall is equal within
    # 3 sigma of the multinomial estimator
    n_rays = 24000
    paths = assembly.enumerate_paths(unit_box)
    f = assembly.form_factors(unit_box, 2000, seed=6)
    lsn = assembly.endpoint_gains(unit_box, paths, f, (0.5, 0.5, 0.5), "listener",
                                  n_rays, seed=6, endpoint_index=0, fs_e=1000.0)
    per_patch = np.zeros(6)
    for p in range(6):
        arriving = paths.incoming[p]
        mask = np.isin(lsn.path, arriving)
        # listener gain = weight * (1 - alpha); 5 incoming paths share each bin
        per_patch[p] = lsn.gain[mask].sum() / 5 / (1 - 0.5)
    p0 = 1.0 / 6.0
    sigma = math.sqrt(p0 * (1 - p0) / n_rays)
    assert np.all(np.abs(per_patch - p0) < 3 * sigma)


def test_cross_room_listener_gains(three_room_system):
    # L3 sits in the right room: no gain on paths departing left-room patches
    sysm = three_room_system
    scene = sysm.scene
    l3 = sysm.gains.listeners[2]
    left_patches = {
        p for p in range(scene.n_patches)
        if fixtures.room_of_point(scene.centroids[p]) == 0
        and scene.centroids[p][0] < 3.99  # exclude patches on the shared x=4 plane
    }
    from_patches = set(sysm.paths.from_patch[l3.path].tolist())
    assert not (from_patches & left_patches)


def test_endpoint_outside_raises(unit_box):
    paths = assembly.enumerate_paths(unit_box)
    f = assembly.form_factors(unit_box, 500, seed=1)
    with pytest.raises(OutOfEnclosureError):
        assembly.endpoint_gains(unit_box, paths, f, (1.5, 0.5, 0.5), "source",
                                100, seed=1, endpoint_index=0, fs_e=1000.0)


def test_direct_gain_values(unit_box, three_room):
    g, d = assembly.direct_gain(unit_box, (0.2, 0.5, 0.5), (0.7, 0.5, 0.5), fs_e=1000.0)
    r = 0.5
    assert g == pytest.approx(1.0 / (4 * np.pi * r * r), rel=1e-12)
    assert d == pytest.approx(r * 1000.0 / 343.0, rel=1e-12)
    s = fixtures.THREE_ROOM_SOURCE
    l3 = fixtures.THREE_ROOM_LISTENERS[2]
    assert assembly.direct_gain(three_room, s, l3, fs_e=1000.0) is None


def test_gain_determinism(unit_box):
    paths = assembly.enumerate_paths(unit_box)
    f = assembly.form_factors(unit_box, 1000, seed=2)
    a = assembly.endpoint_gains(unit_box, paths, f, (0.4, 0.5, 0.6), "source",
                                2000, seed=2, endpoint_index=0, fs_e=500.0)
    b = assembly.endpoint_gains(unit_box, paths, f, (0.4, 0.5, 0.6), "source",
                                2000, seed=2, endpoint_index=0, fs_e=500.0)
    assert assembly.gain_entries_hash(a) == assembly.gain_entries_hash(b)
