"""
Distances, nearest neighbors and distance ratios.

Everything the estimators consume is built here: the ratios
mu_i = r_{i,n2} / r_{i,n1} between the n2-th and n1-th nearest-neighbor
distances of each point, and the q-nearest-neighbor adjacency matrix.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from idim.errors import ConfigError, DataError
from idim.utils import num_threads

logger = logging.getLogger(__name__)

# rows per work unit for the distance and kNN kernels
CHUNK_ROWS = 256


class Metric(str, Enum):
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"
    CANBERRA = "canberra"
    PRECOMPUTED = "precomputed"


_SCIPY_METRICS = {
    Metric.EUCLIDEAN: "euclidean",
    Metric.MANHATTAN: "cityblock",
    Metric.CANBERRA: "canberra",
}


@dataclass
class PointCloud:
    """n observations (rows) measured over D variables (columns)."""

    data: np.ndarray
    col_names: Optional[List[str]] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim == 1:
            self.data = self.data[:, None]
        if self.data.ndim != 2:
            raise DataError(f"expected a 2-d matrix, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DataError("data contains NaN or infinite values")
        if self.col_names is None:
            self.col_names = [f"V{j + 1}" for j in range(self.data.shape[1])]
        elif len(self.col_names) != self.data.shape[1]:
            raise DataError(
                f"{len(self.col_names)} column names for {self.data.shape[1]} columns"
            )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def D(self) -> int:
        return self.data.shape[1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.data, columns=self.col_names)


@dataclass
class RatioSet:
    """Nearest-neighbor distances and the ratios built from them."""

    mus: np.ndarray
    n1: int
    n2: int
    nn_dist: np.ndarray
    nn_index: np.ndarray
    neighbor_index: Optional[np.ndarray] = None
    q: Optional[int] = None
    removed_duplicates: int = 0
    kept_index: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kept_index is None:
            self.kept_index = np.arange(len(self.mus))

    @property
    def n(self) -> int:
        return len(self.mus)

    @property
    def adjacency(self) -> Optional[np.ndarray]:
        """Dense N^(q), built on request from the q nearest neighbors."""
        if self.neighbor_index is None:
            return None
        return adjacency_matrix(self.neighbor_index, self.q)

    def neighbors(self) -> np.ndarray:
        """(n, q) matrix of neighbor indices, nearest first."""
        if self.neighbor_index is None:
            raise ConfigError("adjacency was not computed; pass with_adjacency=True")
        return self.neighbor_index

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"index": self.kept_index, "mu": self.mus})


def as_point_cloud(X) -> PointCloud:
    if isinstance(X, PointCloud):
        return X
    if isinstance(X, pd.DataFrame):
        return PointCloud(X.to_numpy(dtype=float), [str(c) for c in X.columns])
    return PointCloud(np.asarray(X, dtype=float))


def deduplicate(X) -> Tuple[PointCloud, int]:
    """
    Drop exact duplicate rows, keeping the first occurrence in original order.

    Returns the reduced point cloud and the number of removed rows.
    """
    X = as_point_cloud(X)
    kept, removed = _unique_rows(X)
    if removed:
        X = PointCloud(X.data[kept], list(X.col_names))
    return X, removed


def _unique_rows(X: PointCloud) -> Tuple[np.ndarray, int]:
    duplicated = pd.DataFrame(X.data).duplicated(keep="first").to_numpy()
    kept = np.flatnonzero(~duplicated)
    removed = X.n - len(kept)
    _check_kept(X.n, len(kept))
    return kept, removed


def _check_kept(n_original: int, n_kept: int):
    if n_kept < n_original:
        logger.warning(
            "Duplicates are present and will be removed. "
            "Original sample size: %d. New sample size: %d.",
            n_original,
            n_kept,
        )
    if n_kept < 3:
        raise DataError(
            f"only {n_kept} distinct points; at least 3 are needed to compute ratios"
        )


def _chunks(n: int):
    return [slice(start, min(start + CHUNK_ROWS, n)) for start in range(0, n, CHUNK_ROWS)]


def _map_chunks(func, n: int):
    """Apply `func` to row-chunks, in parallel; results come back in order."""
    chunks = _chunks(n)
    threads = min(num_threads(), len(chunks))
    if threads <= 1:
        return [func(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, chunks))


def distance_matrix(X, metric: Union[Metric, str] = Metric.EUCLIDEAN) -> np.ndarray:
    """
    Full n x n distance matrix of `X`.

    Canberra terms with 0/0 contribute 0.
    """
    metric = Metric(metric)
    if metric is Metric.PRECOMPUTED:
        raise ConfigError("a precomputed metric has no distance computation")
    X = as_point_cloud(X)
    name = _SCIPY_METRICS[metric]
    blocks = _map_chunks(lambda rows: cdist(X.data[rows], X.data, metric=name), X.n)
    dist = np.vstack(blocks)
    np.fill_diagonal(dist, 0.0)
    return dist


def check_distance_matrix(dist) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise DataError(f"distance matrix must be square, got shape {dist.shape}")
    if not np.all(np.isfinite(dist)):
        raise DataError("distance matrix contains NaN or infinite values")
    if np.any(np.diag(dist) != 0):
        raise DataError("distance matrix must have a zero diagonal")
    if np.any(dist < 0):
        raise DataError("distance matrix has negative entries")
    if not np.array_equal(dist, dist.T):
        raise DataError("distance matrix is not symmetric")
    return dist


def deduplicate_distances(dist) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Drop points at distance zero from an earlier point.

    Returns the reduced matrix, the kept row indices and the removed count.
    """
    dist = check_distance_matrix(dist)
    n = dist.shape[0]
    zero = np.triu(dist == 0, k=1)
    duplicated = zero.any(axis=0)
    kept = np.flatnonzero(~duplicated)
    removed = n - len(kept)
    _check_kept(n, len(kept))
    if removed:
        dist = dist[np.ix_(kept, kept)]
    return dist, kept, removed


def _check_k(n: int, k: int):
    if not 1 <= k <= n - 1:
        raise ConfigError(f"k must be between 1 and n-1={n - 1}, got {k}")


def _smallest_k(block: np.ndarray, k: int, first_row: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    The k smallest entries of each row of `block`, skipping the point itself.

    `block` holds rows first_row, first_row + 1, ... of a distance matrix and
    is modified in place. Every entry tied with the k-th smallest stays a
    candidate, so the final (distance, column) sort breaks ties by index.
    """
    rows = np.arange(block.shape[0])
    block[rows, first_row + rows] = np.inf
    kth = np.partition(block, k - 1, axis=1)[:, k - 1 : k]
    width = int((block <= kth).sum(axis=1).max())
    candidates = np.argpartition(block, width - 1, axis=1)[:, :width]
    cand_dist = np.take_along_axis(block, candidates, axis=1)
    order = np.lexsort((candidates, cand_dist), axis=-1)[:, :k]
    return (
        np.take_along_axis(cand_dist, order, axis=1),
        np.take_along_axis(candidates, order, axis=1),
    )


def _stack_neighbors(results) -> Tuple[np.ndarray, np.ndarray]:
    nn_dist = np.vstack([r[0] for r in results])
    nn_index = np.vstack([r[1] for r in results])
    if np.any(nn_dist[:, 0] <= 0):
        raise DataError(
            "zero distance between distinct points: duplicates are present, "
            "deduplicate the data first"
        )
    return nn_dist, nn_index


def knn(dist, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    The k nearest neighbors of every point of a distance matrix.

    Row i holds the k smallest off-diagonal distances of row i in ascending
    order, with their column indices; ties go to the lower column index.
    """
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    _check_k(n, k)
    return _stack_neighbors(
        _map_chunks(lambda rows: _smallest_k(dist[rows].copy(), k, rows.start), n)
    )


def knn_points(
    X, k: int, metric: Union[Metric, str] = Metric.EUCLIDEAN
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Same result as `knn(distance_matrix(X, metric), k)`, computed from row
    blocks of distances so the n x n matrix is never held.
    """
    metric = Metric(metric)
    if metric is Metric.PRECOMPUTED:
        raise ConfigError("a precomputed metric has no distance computation")
    X = as_point_cloud(X)
    _check_k(X.n, k)
    name = _SCIPY_METRICS[metric]

    def select(rows):
        return _smallest_k(cdist(X.data[rows], X.data, metric=name), k, rows.start)

    return _stack_neighbors(_map_chunks(select, X.n))


def adjacency_matrix(nn_index: np.ndarray, q: int) -> np.ndarray:
    """Binary N^(q): entry (i, j) is 1 iff j is among the q nearest neighbors of i."""
    n = nn_index.shape[0]
    adjacency = np.zeros((n, n), dtype=np.int8)
    adjacency[np.repeat(np.arange(n), q), nn_index[:, :q].ravel()] = 1
    return adjacency


def prepare_distances(
    X=None,
    dist_mat=None,
    metric: Union[Metric, str] = Metric.EUCLIDEAN,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Deduplicated distance matrix from either data or a precomputed matrix.

    `dist_mat` overrides `X`. Returns (dist, kept_index, removed_count).
    """
    if dist_mat is not None:
        return deduplicate_distances(dist_mat)
    if X is None:
        raise ConfigError("either X or dist_mat must be given")
    metric = Metric(metric)
    if metric is Metric.PRECOMPUTED:
        return deduplicate_distances(as_point_cloud(X).data)
    X = as_point_cloud(X)
    kept, removed = _unique_rows(X)
    return distance_matrix(X.data[kept], metric), kept, removed


def compute_mus(
    X=None,
    dist_mat=None,
    metric: Union[Metric, str] = Metric.EUCLIDEAN,
    n1: int = 1,
    n2: int = 2,
    with_adjacency: bool = False,
    q: int = 3,
) -> RatioSet:
    """
    Compute the ratios mu_{i,n1,n2} = r_{i,n2} / r_{i,n1} for every point.

    Args:
        X: n x D data (array, DataFrame or PointCloud). Ignored if `dist_mat`
            is given.
        dist_mat: n x n precomputed distance matrix.
        metric: distance used on `X`.
        n1, n2: nearest-neighbor orders, 1 <= n1 < n2.
        with_adjacency: also build the q-nearest-neighbor adjacency matrix.
        q: number of neighbors in the adjacency matrix.

    Returns:
        RatioSet for the deduplicated points. Distances from `X` are computed
        in row blocks; only a precomputed matrix is held in full.
    """
    if not 1 <= n1 < n2:
        raise ConfigError(f"need 1 <= n1 < n2, got n1={n1}, n2={n2}")
    if with_adjacency and q < 1:
        raise ConfigError(f"q must be at least 1, got {q}")

    k = max(n2, q) if with_adjacency else n2
    metric = Metric(metric)
    if dist_mat is None and X is not None and metric is not Metric.PRECOMPUTED:
        X = as_point_cloud(X)
        kept, removed = _unique_rows(X)
        _check_order(len(kept), k)
        nn_dist, nn_index = knn_points(X.data[kept], k, metric)
    else:
        dist, kept, removed = prepare_distances(X, dist_mat, metric)
        _check_order(dist.shape[0], k)
        nn_dist, nn_index = knn(dist, k)

    return RatioSet(
        mus=nn_dist[:, n2 - 1] / nn_dist[:, n1 - 1],
        n1=n1,
        n2=n2,
        nn_dist=nn_dist[:, :n2],
        nn_index=nn_index[:, :n2],
        neighbor_index=nn_index[:, :q] if with_adjacency else None,
        q=q if with_adjacency else None,
        removed_duplicates=removed,
        kept_index=kept,
    )


def _check_order(n: int, k: int):
    if k > n - 1:
        raise ConfigError(
            f"neighbor order {k} too large for {n} points (at most {n - 1})"
        )
