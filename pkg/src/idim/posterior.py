"""
Algorithms for posterior analysis of Hidalgo chains.

Raw chains are mapped to observation-level id chains (which are immune to
label switching), summarized, and turned into a posterior similarity matrix
and a dendrogram clustering.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.spatial.distance import squareform

from idim.errors import ConfigError, DataError
from idim.geometry import Metric, knn, prepare_distances
from idim.hidalgo import HidalgoChains

logger = logging.getLogger(__name__)

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
LINKAGES = ("average", "complete", "single")


@dataclass
class Clustering:
    labels: np.ndarray
    method: str
    K: int

    @property
    def frequencies(self) -> pd.Series:
        counts = pd.Series(self.labels).value_counts().sort_index()
        counts.index = [f"Cluster {k}" for k in counts.index]
        return counts

    def to_frame(self, index=None) -> pd.DataFrame:
        index = np.arange(len(self.labels)) if index is None else index
        return pd.DataFrame({"index": index, "cluster": self.labels})

    def report(self) -> str:
        return "\n".join(
            [
                "Estimated clustering solution summary:",
                "",
                f"Method: dendrogram ({self.method} linkage).",
                f"Retrieved clusters: {self.K}.",
                "Clustering frequencies:",
                "",
                self.frequencies.to_frame().T.to_string(index=False),
            ]
        )


@dataclass
class PosteriorSummary:
    id_postpr: np.ndarray
    id_summary: pd.DataFrame
    psm: np.ndarray
    clusters: Optional[Clustering] = None


def fix_label_switching(chains: HidalgoChains) -> np.ndarray:
    """
    Observation-level id chains: d*_i(t) = d_{z_i(t)}(t).

    Returns a T x n matrix.
    """
    return np.take_along_axis(chains.id_raw, chains.membership_labels - 1, axis=1)


def summarize_ids(id_postpr) -> pd.DataFrame:
    """Posterior mean and 5/25/50/75/95% quantiles of every observation's chain."""
    id_postpr = np.asarray(id_postpr, dtype=float)
    if id_postpr.ndim != 2 or id_postpr.shape[0] < 1:
        raise DataError("need a T x n matrix with T >= 1")
    q = np.quantile(id_postpr, QUANTILES, axis=0)
    summary = pd.DataFrame({"mean": id_postpr.mean(axis=0)})
    for level, values in zip(QUANTILES, q):
        summary[f"q{round(level * 100):02d}"] = values
    return summary


def posterior_similarity(membership_labels) -> np.ndarray:
    """
    Posterior similarity matrix.

    Entry (i, j) is the fraction of draws in which observations i and j share a
    component.
    """
    labels = np.asarray(membership_labels)
    if labels.ndim != 2 or labels.shape[0] < 1:
        raise DataError("need a T x n matrix of labels with T >= 1")
    T, n = labels.shape
    together = np.zeros((n, n), dtype=np.int64)
    for row in labels:
        together += row[:, None] == row[None, :]
    return together / T


def cluster_from_psm(psm, K: int, method: str = "average") -> Clustering:
    """
    Cut the dendrogram built on 1 - psm into exactly K clusters.

    Labels run 1..K in order of first appearance. Tied merges follow the
    index order of the linkage scan, so among equally similar pairs the
    one with the lowest indices merges first.
    """
    psm = np.asarray(psm, dtype=float)
    n = psm.shape[0]
    if method not in LINKAGES:
        raise ConfigError(f"linkage must be one of {LINKAGES}, got {method}")
    if not 1 <= K <= n:
        raise ConfigError(f"K must be between 1 and n={n}, got {K}")

    if K == n:
        labels = np.arange(1, n + 1)
    elif K == 1:
        labels = np.ones(n, dtype=int)
    else:
        dissimilarity = np.clip(1.0 - psm, 0.0, None)
        np.fill_diagonal(dissimilarity, 0.0)
        tree = linkage(squareform(dissimilarity, checks=False), method=method)
        raw = cut_tree(tree, n_clusters=K).ravel()
        _, first = np.unique(raw, return_index=True)
        relabel = {raw[pos]: k + 1 for k, pos in enumerate(np.sort(first))}
        labels = np.array([relabel[r] for r in raw])

    return Clustering(labels=labels, method=method, K=K)


def id_by_class(id_postpr, classes: Sequence) -> pd.DataFrame:
    """
    id estimates stratified by an external class.

    Per class: mean of the observation means, median of the observation
    medians, and standard deviation of the pooled draws.
    """
    id_postpr = np.asarray(id_postpr, dtype=float)
    classes = np.asarray(classes)
    if classes.shape != (id_postpr.shape[1],):
        raise DataError(
            f"class has length {len(classes)}, expected {id_postpr.shape[1]}"
        )
    rows = []
    for label in pd.unique(classes):
        chains = id_postpr[:, classes == label]
        rows.append(
            {
                "class": label,
                "mean": chains.mean(axis=0).mean(),
                "median": np.median(np.median(chains, axis=0)),
                "sd": chains.std(ddof=1) if chains.size > 1 else np.nan,
            }
        )
    return pd.DataFrame(rows)


def nn_distance_profile(
    X=None,
    dist_mat=None,
    metric: Union[Metric, str] = Metric.EUCLIDEAN,
) -> np.ndarray:
    """
    Ergodic means of the sorted nearest-neighbor distances.

    Row i holds r_i(j) = (r_{i,1} + ... + r_{i,j}) / j for j = 1..n-1.
    """
    dist, _, _ = prepare_distances(X, dist_mat, metric)
    nn_dist, _ = knn(dist, dist.shape[0] - 1)
    return np.cumsum(nn_dist, axis=1) / np.arange(1, nn_dist.shape[1] + 1)


def summarize_chains(
    chains: HidalgoChains,
    k_clusters: Optional[int] = None,
    method: str = "average",
) -> PosteriorSummary:
    id_postpr = fix_label_switching(chains)
    psm = posterior_similarity(chains.membership_labels)
    clusters = cluster_from_psm(psm, k_clusters, method) if k_clusters else None
    return PosteriorSummary(
        id_postpr=id_postpr,
        id_summary=summarize_ids(id_postpr),
        psm=psm,
        clusters=clusters,
    )
