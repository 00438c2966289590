import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sfcontact.point_process import (
    Boundary, PointCloud, SpatialDomain, add_palm_origin, distance, sample_point_cloud,
)


def test_zero_volume_gives_empty_cloud():
    cloud = sample_point_cloud(SpatialDomain(1, 0.0), 3)
    assert cloud.size == 0


def test_counts_are_poisson_mean():
    dom = SpatialDomain(1, 1000.0)
    counts = [sample_point_cloud(dom, s).size for s in range(500)]
    assert abs(np.mean(counts) - 1000) <= 3 * np.sqrt(1000 / 500)


def test_marks_uniform_ks():
    cloud = sample_point_cloud(SpatialDomain(2, 100.0), 8)
    assert stats.kstest(cloud.marks, "uniform").pvalue > 0.01
    assert np.all((cloud.marks > 0) & (cloud.marks < 1))
    assert np.all(np.abs(cloud.positions) <= 50.0)


def test_deterministic_given_seed():
    dom = SpatialDomain(2, 30.0, Boundary.TORUS)
    a, b = sample_point_cloud(dom, 99), sample_point_cloud(dom, 99)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.marks, b.marks)


def test_spatial_homogeneity_chi_square():
    dom = SpatialDomain(2, 20.0)
    table = []
    for s in range(200):
        pos = sample_point_cloud(dom, s).positions
        q = (pos[:, 0] >= 0).astype(int) * 2 + (pos[:, 1] >= 0).astype(int)
        table.append(np.bincount(q, minlength=4))
    table = np.array(table)
    assert stats.chi2_contingency(table).pvalue > 0.01


def test_palm_origin_on_empty_cloud():
    cloud = add_palm_origin(sample_point_cloud(SpatialDomain(1, 0.0), 1), 2)
    assert cloud.size == 1
    assert cloud.palm_origin == 0
    assert np.all(cloud.positions[0] == 0)


def test_palm_origin_appends_at_zero():
    base = sample_point_cloud(SpatialDomain(3, 5.0), 4)
    cloud = add_palm_origin(base, 5)
    assert cloud.size == base.size + 1
    assert np.all(cloud.positions[cloud.palm_origin] == 0.0)
    with pytest.raises(ValueError):
        add_palm_origin(cloud, 6)


def test_palm_mark_override():
    cloud = add_palm_origin(sample_point_cloud(SpatialDomain(1, 4.0), 1), 2, mark=0.125)
    assert cloud.marks[cloud.palm_origin] == 0.125


def test_palm_mark_uniform():
    empty = sample_point_cloud(SpatialDomain(1, 0.0), 0)
    marks = [add_palm_origin(empty, s).marks[0] for s in range(10_000)]
    assert stats.kstest(marks, "uniform").pvalue > 0.01


def test_distance_examples():
    free = SpatialDomain(1, 10.0)
    torus = SpatialDomain(1, 10.0, Boundary.TORUS)
    assert distance(free, -4.5, 4.5) == 9.0
    assert distance(torus, -4.5, 4.5) == pytest.approx(1.0, abs=1e-12)
    assert distance(torus, 2.0, 2.0) == 0.0
    assert distance(free, 2.0, 2.0) == 0.0


def test_torus_is_metric(rng):
    dom = SpatialDomain(2, 7.0, Boundary.TORUS)
    a, b, c = (rng.uniform(-3.5, 3.5, size=(10_000, 2)) for _ in range(3))
    ab, ba = distance(dom, a, b), distance(dom, b, a)
    assert np.array_equal(ab, ba)
    assert np.all(ab <= distance(dom, a, c) + distance(dom, c, b) + 1e-12)
    assert np.all(ab <= distance(SpatialDomain(2, 7.0), a, b) + 1e-12)


def test_cloud_rejects_bad_marks():
    with pytest.raises(ValueError):
        PointCloud(SpatialDomain(1, 1.0), [[0.0]], [1.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.5, 30))
def test_torus_distance_bounded_by_half_side(x, y, L):
    dom = SpatialDomain(1, L, Boundary.TORUS)
    assert distance(dom, x, y) <= L / 2 + 1e-9
