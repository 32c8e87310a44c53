import numpy as np
import pytest

from oracles import hdbscan_reference
from vbs_beamsim.hdbscan import core_distances, hdbscan


def _blobs(rng, centres, n=100, scale=0.3):
    return np.vstack([rng.normal(c, scale, size=(n, 3)) for c in centres])


def test_core_distance_counts_self(rng):
    pts = np.array([[0, 0, 0], [1, 0, 0], [3, 0, 0.0]])
    np.testing.assert_allclose(core_distances(pts, 1), [0, 0, 0])
    np.testing.assert_allclose(core_distances(pts, 2), [1, 1, 2])


def test_two_blobs(rng):
    pts = _blobs(rng, [(0, 0, 0), (10, 0, 0)])
    labels = hdbscan(pts, min_cluster_size=20, min_samples=5)
    assert set(labels) - {-1} == {0, 1}
    assert len(set(labels[:100]) - {-1}) == 1 and len(set(labels[100:]) - {-1}) == 1


def test_labels_canonical_by_first_member(rng):
    pts = _blobs(rng, [(10, 0, 0), (0, 0, 0)])
    labels = hdbscan(pts, 20, 5)
    assert labels[np.flatnonzero(labels >= 0)[0]] == 0


def test_uniform_noise_single_or_no_cluster(rng):
    pts = rng.uniform(0, 1, size=(200, 3))
    assert len(set(hdbscan(pts, 50, 10)) - {-1}) <= 1


def test_too_few_points_is_noise():
    assert (hdbscan(np.zeros((3, 3)), 5, 2) == -1).all()


def test_parameter_validation():
    with pytest.raises(ValueError):
        hdbscan(np.zeros((10, 3)), 1, 1)
    with pytest.raises(ValueError):
        hdbscan(np.zeros((10, 3)), 5, 0)


def test_epsilon_merges_close_clusters(rng):
    pts = _blobs(rng, [(0, 0, 0), (2.5, 0, 0)], n=80, scale=0.2)
    assert len(set(hdbscan(pts, 20, 5)) - {-1}) == 2
    assert len(set(hdbscan(pts, 20, 5, cluster_selection_epsilon=5.0)) - {-1}) == 1


def _ari(a, b):
    from math import comb
    ua, ub = np.unique(a), np.unique(b)
    table = np.array([[np.sum((a == x) & (b == y)) for y in ub] for x in ua])
    n = len(a)
    s_ij = sum(comb(int(v), 2) for v in table.ravel())
    s_a = sum(comb(int(v), 2) for v in table.sum(1))
    s_b = sum(comb(int(v), 2) for v in table.sum(0))
    exp = s_a * s_b / comb(n, 2)
    return (s_ij - exp) / (0.5 * (s_a + s_b) - exp)


def test_agrees_with_reference_implementation(rng):
    pts = np.vstack([_blobs(rng, [(0, 0, 0), (6, 0, 0), (0, 7, 2)], n=120, scale=0.6),
                     rng.uniform(-5, 12, size=(60, 3))])
    ref = hdbscan_reference(pts, 15, 5)
    if ref is None:
        pytest.skip("scikit-learn not installed")
    ours = hdbscan(pts, 15, 5, allow_single_cluster=False)
    assert _ari(ours, ref) >= 0.99


def test_permutation_invariance(rng):
    pts = _blobs(rng, [(0, 0, 0), (5, 5, 0), (0, 8, 3)], n=60, scale=0.5)
    base = hdbscan(pts, 15, 5)
    for _ in range(10):
        perm = rng.permutation(len(pts))
        lab = hdbscan(pts[perm], 15, 5)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        assert _ari(lab[inv], base) == pytest.approx(1.0)
