import logging

import numpy as np
import pytest

from idim.errors import ConfigError, DataError
from idim.geometry import (
    Metric,
    PointCloud,
    adjacency_matrix,
    compute_mus,
    deduplicate,
    distance_matrix,
    knn,
    knn_points,
)


class TestDeduplicate:
    def test_keeps_first_occurrences(self, duplicated_rows, caplog):
        with caplog.at_level(logging.WARNING, logger="idim"):
            X, removed = deduplicate(duplicated_rows)
        assert removed == 2
        np.testing.assert_array_equal(X.data, duplicated_rows[[0, 2, 4]])
        assert "Original sample size: 5. New sample size: 3." in caplog.text

    def test_no_duplicates(self, caplog):
        data = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]])
        with caplog.at_level(logging.WARNING, logger="idim"):
            X, removed = deduplicate(data)
        assert removed == 0
        np.testing.assert_array_equal(X.data, data)
        assert caplog.text == ""

    def test_too_few_distinct_rows(self):
        data = np.vstack([np.ones((4, 2)), [[0.0, 0.0], [0.0, 0.0]]])
        with pytest.raises(DataError):
            deduplicate(data)


def test_point_cloud_rejects_nan():
    with pytest.raises(DataError):
        PointCloud(np.array([[0.0, np.nan], [1.0, 2.0], [3.0, 4.0]]))


def test_point_cloud_default_names():
    assert PointCloud(np.zeros((3, 2))).col_names == ["V1", "V2"]


class TestDistanceMatrix:
    def test_euclidean(self):
        dist = distance_matrix(np.array([[0.0], [3.0]]), Metric.EUCLIDEAN)
        assert dist[0, 1] == 3.0

    def test_manhattan(self):
        dist = distance_matrix(np.array([[0.0, 0.0], [1.0, 1.0]]), "manhattan")
        assert dist[0, 1] == 2.0

    def test_canberra(self):
        dist = distance_matrix(np.array([[1.0], [3.0]]), Metric.CANBERRA)
        assert dist[0, 1] == pytest.approx(0.5)

    def test_canberra_zero_over_zero(self):
        dist = distance_matrix(np.array([[0.0, 1.0], [0.0, 3.0]]), Metric.CANBERRA)
        assert dist[0, 1] == pytest.approx(0.5)

    def test_matches_gram_formula(self, rng):
        X = rng.normal(size=(50, 5))
        sq = np.sum(X**2, axis=1)
        gram = np.sqrt(np.clip(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0, None))
        # the expansion leaves cancellation noise on the diagonal
        np.fill_diagonal(gram, 0.0)
        dist = distance_matrix(X)
        np.testing.assert_allclose(dist, gram, atol=1e-9)
        np.testing.assert_array_equal(dist, dist.T)
        assert np.all(np.diag(dist) == 0)

    def test_precomputed_has_no_distance(self):
        with pytest.raises(ConfigError):
            distance_matrix(np.zeros((3, 1)), Metric.PRECOMPUTED)

    def test_chunking_does_not_change_result(self, rng, monkeypatch):
        X = rng.normal(size=(40, 3))
        expected = distance_matrix(X)
        monkeypatch.setattr("idim.geometry.CHUNK_ROWS", 7)
        np.testing.assert_array_equal(distance_matrix(X), expected)


class TestKnn:
    def test_hand_example(self, line3):
        nn_dist, nn_index = knn(distance_matrix(line3), 2)
        np.testing.assert_array_equal(nn_dist, [[1, 3], [1, 2], [2, 3]])
        np.testing.assert_array_equal(nn_index, [[1, 2], [0, 2], [1, 0]])

    def test_k1_is_row_minimum(self, rng):
        dist = distance_matrix(rng.normal(size=(30, 4)))
        nn_dist, _ = knn(dist, 1)
        off = dist + np.diag(np.full(30, np.inf))
        np.testing.assert_array_equal(nn_dist[:, 0], off.min(axis=1))

    def test_ties_go_to_lower_index(self):
        dist = np.ones((3, 3)) - np.eye(3)
        nn_dist, nn_index = knn(dist, 2)
        np.testing.assert_array_equal(nn_dist, np.ones((3, 2)))
        np.testing.assert_array_equal(nn_index, [[1, 2], [0, 2], [0, 1]])

    def test_zero_distance_is_an_error(self):
        dist = distance_matrix(np.array([[0.0], [0.0], [1.0]]))
        with pytest.raises(DataError, match="deduplicate"):
            knn(dist, 1)

    def test_invalid_k(self, line3):
        with pytest.raises(ConfigError):
            knn(distance_matrix(line3), 3)

    def test_permutation_equivariance(self, rng):
        X = rng.normal(size=(25, 3))
        perm = rng.permutation(25)
        nn_dist, nn_index = knn(distance_matrix(X), 4)
        p_dist, p_index = knn(distance_matrix(X[perm]), 4)
        np.testing.assert_array_equal(p_dist, nn_dist[perm])
        np.testing.assert_array_equal(perm[p_index], nn_index[perm])

    def test_matches_full_sort(self, rng):
        dist = distance_matrix(rng.normal(size=(70, 3)))
        nn_dist, nn_index = knn(dist, 6)
        off = dist + np.diag(np.full(70, np.inf))
        order = np.argsort(off, axis=1, kind="stable")[:, :6]
        np.testing.assert_array_equal(nn_index, order)
        np.testing.assert_array_equal(nn_dist, np.take_along_axis(off, order, axis=1))

    def test_ties_across_the_kth_value(self):
        # 1-d grid: every inner point has two neighbors at each distance
        dist = distance_matrix(np.arange(7.0)[:, None])
        nn_dist, nn_index = knn(dist, 3)
        np.testing.assert_array_equal(nn_index[3], [2, 4, 1])
        np.testing.assert_array_equal(nn_dist[3], [1, 1, 2])
        np.testing.assert_array_equal(nn_index[0], [1, 2, 3])


class TestKnnPoints:
    def test_matches_dense(self, rng, monkeypatch):
        X = rng.normal(size=(90, 4))
        expected = knn(distance_matrix(X, "manhattan"), 5)
        monkeypatch.setattr("idim.geometry.CHUNK_ROWS", 16)
        nn_dist, nn_index = knn_points(X, 5, "manhattan")
        np.testing.assert_array_equal(nn_dist, expected[0])
        np.testing.assert_array_equal(nn_index, expected[1])

    def test_lattice_ties_go_to_lower_index(self, monkeypatch):
        grid = np.array([[i, j] for i in range(5) for j in range(5)], dtype=float)
        monkeypatch.setattr("idim.geometry.CHUNK_ROWS", 4)
        nn_dist, nn_index = knn_points(grid, 4)
        # centre point 12 = (2, 2) has four neighbors at distance 1
        np.testing.assert_array_equal(nn_index[12], [7, 11, 13, 17])
        np.testing.assert_array_equal(nn_dist[12], np.ones(4))
        np.testing.assert_array_equal(nn_index[0], [1, 5, 6, 2])

    def test_duplicates_are_an_error(self):
        with pytest.raises(DataError, match="deduplicate"):
            knn_points(np.array([[0.0], [0.0], [1.0]]), 1)

    def test_precomputed_is_rejected(self, line3):
        with pytest.raises(ConfigError):
            knn_points(line3, 1, Metric.PRECOMPUTED)


class TestComputeMus:
    def test_hand_example(self, line3):
        ratios = compute_mus(line3)
        np.testing.assert_allclose(ratios.mus, [3.0, 2.0, 1.5])
        assert ratios.removed_duplicates == 0
        assert ratios.adjacency is None

    def test_adjacency(self, line3):
        ratios = compute_mus(line3, with_adjacency=True, q=1)
        np.testing.assert_array_equal(
            ratios.adjacency, [[0, 1, 0], [1, 0, 0], [0, 1, 0]]
        )
        np.testing.assert_array_equal(ratios.neighbors(), [[1], [0], [1]])

    def test_adjacency_rows(self, rng):
        ratios = compute_mus(rng.normal(size=(60, 3)), with_adjacency=True, q=5)
        assert np.all(ratios.adjacency.sum(axis=1) == 5)
        assert np.all(np.diag(ratios.adjacency) == 0)
        assert ratios.neighbors().shape == (60, 5)

    def test_points_never_build_the_full_matrix(self, rng, monkeypatch):
        def refuse(*args, **kwargs):
            raise AssertionError("dense distance matrix requested")

        monkeypatch.setattr("idim.geometry.distance_matrix", refuse)
        ratios = compute_mus(rng.normal(size=(50, 3)), with_adjacency=True, q=4)
        assert ratios.neighbors().shape == (50, 4)
        np.testing.assert_array_equal(ratios.neighbors()[:, :2], ratios.nn_index)

    def test_equal_distances_give_one(self):
        ratios = compute_mus(np.array([[-1.0], [0.0], [1.0], [5.0]]))
        assert ratios.mus[1] == 1.0

    def test_precomputed_matches_points(self, rng):
        X = rng.normal(size=(40, 3))
        from_points = compute_mus(X, n1=2, n2=4)
        from_dist = compute_mus(dist_mat=distance_matrix(X), n1=2, n2=4)
        np.testing.assert_array_equal(from_points.mus, from_dist.mus)
        np.testing.assert_array_equal(from_points.nn_index, from_dist.nn_index)

    def test_dist_mat_overrides_x(self, line3, rng):
        ratios = compute_mus(X=rng.normal(size=(10, 2)), dist_mat=distance_matrix(line3))
        assert ratios.n == 3

    def test_invariants(self, rng):
        ratios = compute_mus(rng.normal(size=(80, 4)), n1=1, n2=3)
        assert np.all(ratios.mus >= 1)
        assert np.all(ratios.nn_dist > 0)
        assert np.all(np.diff(ratios.nn_dist, axis=1) >= 0)
        assert ratios.nn_dist.shape == (80, 3)

    def test_duplicates_removed(self, duplicated_rows):
        ratios = compute_mus(duplicated_rows)
        assert ratios.removed_duplicates == 2
        np.testing.assert_array_equal(ratios.kept_index, [0, 2, 4])

    def test_precomputed_duplicates_removed(self, duplicated_rows):
        ratios = compute_mus(dist_mat=distance_matrix(duplicated_rows))
        np.testing.assert_array_equal(ratios.kept_index, [0, 2, 4])

    @pytest.mark.parametrize("n1, n2", [(0, 2), (2, 2), (3, 1)])
    def test_invalid_orders(self, line3, n1, n2):
        with pytest.raises(ConfigError):
            compute_mus(line3, n1=n1, n2=n2)

    def test_order_too_large(self, line3):
        with pytest.raises(ConfigError):
            compute_mus(line3, n1=1, n2=3)

    def test_invalid_precomputed(self):
        with pytest.raises(DataError):
            compute_mus(dist_mat=np.array([[0.0, 1.0, 2.0], [1.5, 0.0, 1.0], [2.0, 1.0, 0.0]]))


def test_adjacency_matrix_from_index():
    adjacency = adjacency_matrix(np.array([[1, 2], [2, 0], [0, 1]]), 1)
    np.testing.assert_array_equal(adjacency, [[0, 1, 0], [0, 0, 1], [1, 0, 0]])
