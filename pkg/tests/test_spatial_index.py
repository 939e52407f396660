import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from app.services.spatial_index import SpatialIndex

coords = st.floats(min_value=0.0, max_value=50.0, allow_nan=False)
points = st.lists(st.tuples(coords, coords), min_size=1, max_size=60)


def _filled(pts, rebuild_every):
    index = SpatialIndex(rebuild_every=rebuild_every, capacity=4)
    for p in pts:
        index.add(p)
    return index


def test_ids_are_insertion_order():
    index = SpatialIndex(rebuild_every=2)
    assert [index.add((i, i)) for i in range(5)] == [0, 1, 2, 3, 4]
    assert len(index) == 5
    np.testing.assert_array_equal(index.points[3], [3, 3])


def test_empty_index():
    index = SpatialIndex()
    assert index.knn((0, 0), 3) == []
    assert index.within((0, 0), 10.0) == []


@settings(max_examples=60, deadline=None)
@given(points, st.tuples(coords, coords), st.integers(1, 10), st.sampled_from([1, 3, 64]))
def test_knn_matches_brute_force(pts, query, k, rebuild_every):
    index = _filled(pts, rebuild_every)
    found = index.knn(query, k)
    arr = np.asarray(pts, dtype=float)
    d = np.hypot(*(arr - np.asarray(query)).T)
    assert len(found) == min(k, len(pts))
    np.testing.assert_allclose(np.sort(d[found]), np.sort(d)[: len(found)], atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(points, st.tuples(coords, coords), st.floats(0.0, 30.0), st.sampled_from([1, 3, 64]))
def test_within_matches_brute_force(pts, query, radius, rebuild_every):
    index = _filled(pts, rebuild_every)
    found = set(index.within(query, radius))
    arr = np.asarray(pts, dtype=float)
    d = np.hypot(*(arr - np.asarray(query)).T)
    clear = np.abs(d - radius) > 1e-9
    assert {i for i in np.flatnonzero(d < radius) if clear[i]} <= found
    assert not {i for i in np.flatnonzero(d > radius) if clear[i]} & found
