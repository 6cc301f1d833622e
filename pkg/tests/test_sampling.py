import numpy as np
import pytest

from modart import sampling


def test_stream_determinism():
    a = sampling.uniform_sphere_directions(500, seed=3, stream=("source", 2))
    b = sampling.uniform_sphere_directions(500, seed=3, stream=("source", 2))
    assert np.array_equal(a, b)


def test_stream_independence():
    a = sampling.uniform_sphere_directions(500, seed=3, stream=("source", 0))
    b = sampling.uniform_sphere_directions(500, seed=3, stream=("source", 1))
    c = sampling.uniform_sphere_directions(500, seed=4, stream=("source", 0))
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sphere_directions_are_unit_and_centered():
    d = sampling.uniform_sphere_directions(20000, seed=0, stream=("watertight",))
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
    # mean of N uniform sphere points: each component sigma = 1/sqrt(3N)
    tol = 3.0 / np.sqrt(3 * len(d))
    assert np.all(np.abs(d.mean(axis=0)) < tol)


def test_cosine_directions_statistics():
    rng = sampling.stream_generator(0, ("form", 0))
    normal = np.array([0.0, 0.0, 1.0])
    d = sampling.cosine_directions(normal, rng.random((40000, 2)))
    assert np.all(d @ normal > 0)
    # E[cos theta] = 2/3 for the cosine-weighted hemisphere; var = 1/2 - 4/9
    mean_cos = (d @ normal).mean()
    sigma = np.sqrt((0.5 - 4.0 / 9.0) / len(d))
    assert abs(mean_cos - 2.0 / 3.0) < 3 * sigma


def test_stratified_points_cover_patch():
    pts = np.array([[0, 0, 0], [2, 0, 0], [2, 1, 0], [0, 1, 0]], dtype=float)
    rng = sampling.stream_generator(1, ("form", 3))
    samples = sampling.stratified_patch_points(pts, 64, rng)
    assert samples.shape == (64, 3)
    assert np.all(samples[:, 0] >= 0) and np.all(samples[:, 0] <= 2)
    assert np.all(samples[:, 1] >= 0) and np.all(samples[:, 1] <= 1)
    assert np.all(samples[:, 2] == 0)
    # centroid within 3 sigma of the patch center (uniform variance/12-ish)
    assert np.allclose(samples.mean(axis=0)[:2], [1.0, 0.5], atol=0.25)


def test_allocation_is_exact():
    out = sampling._allocate(17, np.array([1.0, 1.0, 2.0]))
    assert out.sum() == 17
    assert out[2] >= out[0]
