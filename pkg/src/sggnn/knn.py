"""K-nearest-neighbour graphs over node feature matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .graph import Graph, to_undirected

SOURCES = ("feat", "role", "global")
_LABELS = {"feat": "Feats", "role": "Role", "global": "Global"}
_BLOCK = 1024


@dataclass(frozen=True)
class KnnConfig:
    k: int
    symmetrize: bool = True
    source: str = "feat"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown KNN source {self.source!r}")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    @property
    def label(self):
        """Display name, e.g. ``KNN-Global-3``."""
        return f"KNN-{_LABELS[self.source]}-{self.k}"

    @property
    def filename(self):
        return f"knn-{self.source}-{self.k}.tsv"


def _check_finite(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    if not np.isfinite(z).all():
        raise ValueError("feature matrix contains non-finite entries")
    return z


def pairwise_euclidean(z):
    """Full symmetric matrix of Euclidean distances between rows of ``z``."""
    z = _check_finite(z)
    if z.shape[0] < 2:
        raise ValueError("need at least two rows")
    d = cdist(z, z)
    np.fill_diagonal(d, 0.0)
    return d


def _exact_dist(z, i, cols):
    diff = z[cols] - z[i]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def nearest_neighbors(z, k):
    """Indices of the ``k`` nearest other rows for every row, shape ``(N, k)``.

    Ordering is by exact Euclidean distance, ties broken by smaller index.
    Candidates are shortlisted with the fast ``|a|^2 + |b|^2 - 2ab`` expansion,
    then every node that could tie with the k-th neighbour under that
    expansion's rounding error is re-ranked with directly computed distances.
    """
    z = _check_finite(z)
    n = z.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} out of range for {n} nodes")
    sq = np.einsum("ij,ij->i", z, z)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        approx = sq[start:stop, None] + sq[None, :] - 2.0 * (z[start:stop] @ z.T)
        approx[np.arange(stop - start), np.arange(start, stop)] = np.inf
        shortlist = np.argpartition(approx, k - 1, axis=1)[:, :k]
        for r, i in enumerate(range(start, stop)):
            bound = _exact_dist(z, i, shortlist[r]).max()
            slack = 1e-9 * (sq[i] + sq) + 1e-12
            cand = np.flatnonzero(approx[r] <= bound * bound + slack)
            dist = _exact_dist(z, i, cand)
            order = np.lexsort((cand, dist))
            out[i] = cand[order[:k]]
    return out


def knn_graph(z, cfg):
    """Connect every node to its ``cfg.k`` nearest neighbours (weight 1)."""
    z = _check_finite(z)
    n = z.shape[0]
    if not 1 <= cfg.k <= n - 1:
        raise ValueError(f"k={cfg.k} out of range for {n} nodes")
    nbrs = nearest_neighbors(z, cfg.k)
    src = np.repeat(np.arange(n), cfg.k)
    g = Graph.from_edges(n, src, nbrs.ravel(), directed=True)
    return to_undirected(g) if cfg.symmetrize else g
