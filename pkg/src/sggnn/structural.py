"""Role-based and global structural node features."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .graph import Graph, to_undirected

logger = logging.getLogger(__name__)

ROLE_FEATURES = (
    "in_degree",
    "out_degree",
    "total_degree",
    "triangle_count",
    "local_clustering_coefficient",
    "egonet_edge_count",
    "egonet_size",
    "average_neighbor_degree",
    "two_hop_neighborhood_size",
    "core_number",
)
GLOBAL_FEATURES = (
    "pagerank",
    "harmonic_closeness",
    "betweenness",
    "eigenvector_centrality",
    "eccentricity",
    "component_size",
)

PAGERANK_DAMPING = 0.85
PAGERANK_TOL = 1e-10
PAGERANK_MAX_ITER = 200
EIGVEC_TOL = 1e-10
EIGVEC_MAX_ITER = 1000

_BLOCK = 512


@dataclass
class FeatureSpec:
    kind: str
    selected: tuple = ()
    standardize: bool = True

    def __post_init__(self):
        catalog = {"role": ROLE_FEATURES, "global": GLOBAL_FEATURES}.get(self.kind)
        if catalog is None:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        self.selected = tuple(self.selected) or catalog
        unknown = [s for s in self.selected if s not in catalog]
        if unknown:
            raise ValueError(f"unknown {self.kind} feature(s): {', '.join(unknown)}")


@dataclass
class StructuralFeatures:
    """Feature matrix plus the column names and any computation flags."""

    values: np.ndarray
    names: tuple
    flags: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.names)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])


def simple_undirected(g):
    """0/1 symmetric adjacency without self-loops, as a scipy CSR matrix."""
    a = to_undirected(g).to_scipy().tocsr(copy=True)
    a.setdiag(0)
    a.eliminate_zeros()
    a.data[:] = 1.0
    a.sort_indices()
    return a


# -- role features -----------------------------------------------------------

def triangle_counts(a):
    """Triangles through each node of a simple undirected 0/1 adjacency."""
    n = a.shape[0]
    out = np.zeros(n)
    for start in range(0, n, _BLOCK):
        rows = a[start:start + _BLOCK]
        out[start:start + _BLOCK] = np.asarray((rows @ a).multiply(rows).sum(axis=1)).ravel()
    return out / 2.0


def two_hop_sizes(a):
    """Number of other nodes within two hops."""
    n = a.shape[0]
    deg = np.diff(a.indptr)
    out = np.zeros(n)
    for start in range(0, n, _BLOCK):
        rows = a[start:start + _BLOCK]
        reach = (rows @ a + rows).tocsr()
        # every non-isolated node reaches itself in two hops
        out[start:start + _BLOCK] = np.diff(reach.indptr) - (deg[start:start + _BLOCK] > 0)
    return out


def core_numbers(a):
    """k-core index of every node (Batagelj-Zaversnik bucket algorithm)."""
    n = a.shape[0]
    indptr, indices = a.indptr, a.indices
    deg = np.diff(indptr).astype(np.int64)
    if n == 0:
        return np.zeros(0)
    max_deg = int(deg.max())
    bin_start = np.zeros(max_deg + 2, dtype=np.int64)
    np.cumsum(np.bincount(deg, minlength=max_deg + 1), out=bin_start[1:])
    order = np.argsort(deg, kind="stable")
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    bin_start = bin_start[:-1].tolist()
    indptr, indices = indptr.tolist(), indices.tolist()
    deg = deg.tolist()
    order = order.tolist()
    pos = pos.tolist()
    for i in range(n):
        v = order[i]
        for u in indices[indptr[v]:indptr[v + 1]]:
            if deg[u] > deg[v]:
                du = deg[u]
                pu = pos[u]
                pw = bin_start[du]
                w = order[pw]
                if u != w:
                    order[pu], order[pw] = w, u
                    pos[u], pos[w] = pw, pu
                bin_start[du] += 1
                deg[u] -= 1
    return np.array(deg, dtype=np.float64)


def role_features(g, spec=None):
    """Compute the selected role-based features, one column each.

    Everything except ``in_degree``/``out_degree`` is computed on the simple
    symmetrized graph (self-loops dropped, weights ignored).
    """
    spec = spec or FeatureSpec("role")
    if spec.kind != "role":
        raise ValueError("spec.kind must be 'role'")
    a = simple_undirected(g)
    directed = g.to_scipy().tocsr(copy=True)
    directed.setdiag(0)
    directed.eliminate_zeros()
    deg = np.diff(a.indptr).astype(np.float64)
    cache = {}

    def tri():
        if "tri" not in cache:
            cache["tri"] = triangle_counts(a)
        return cache["tri"]

    def compute(name):
        if name == "in_degree":
            return np.diff(directed.tocsc().indptr).astype(np.float64)
        if name == "out_degree":
            return np.diff(directed.indptr).astype(np.float64)
        if name == "total_degree":
            return deg.copy()
        if name == "triangle_count":
            return tri()
        if name == "local_clustering_coefficient":
            pairs = deg * (deg - 1) / 2.0
            out = np.zeros_like(deg)
            ok = pairs > 0
            out[ok] = tri()[ok] / pairs[ok]
            return out
        if name == "egonet_edge_count":
            return deg + tri()
        if name == "egonet_size":
            return deg + 1.0
        if name == "average_neighbor_degree":
            total = a @ deg
            out = np.zeros_like(deg)
            ok = deg > 0
            out[ok] = total[ok] / deg[ok]
            return out
        if name == "two_hop_neighborhood_size":
            return two_hop_sizes(a)
        if name == "core_number":
            return core_numbers(a)
        raise ValueError(name)

    cols = [compute(name) for name in spec.selected]
    z = np.column_stack(cols) if cols else np.zeros((g.num_nodes, 0))
    if spec.standardize:
        z = standardize(z)
    return StructuralFeatures(z, spec.selected)


# -- global features ---------------------------------------------------------

def pagerank(a, damping=PAGERANK_DAMPING, tol=PAGERANK_TOL, max_iter=PAGERANK_MAX_ITER):
    """PageRank by power iteration; dangling mass is spread uniformly."""
    n = a.shape[0]
    out_deg = np.asarray(a.sum(axis=1)).ravel()
    inv = np.zeros(n)
    inv[out_deg > 0] = 1.0 / out_deg[out_deg > 0]
    transition_t = (sp.diags(inv) @ a).T.tocsr()
    dangling = out_deg == 0
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        prev = x
        x = damping * (transition_t @ prev + prev[dangling].sum() / n) + (1.0 - damping) / n
        x /= x.sum()
        if np.abs(x - prev).sum() < tol:
            break
    return x


def eigenvector_centrality(a, tol=EIGVEC_TOL, max_iter=EIGVEC_MAX_ITER):
    """Leading eigenvector of ``A`` by power iteration on ``A + I``.

    Returns ``(vector, converged)``. The identity shift keeps the iteration
    from oscillating on bipartite components without changing eigenvectors.
    """
    n = a.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(max_iter):
        prev = x
        x = a @ prev + prev
        norm = np.linalg.norm(x)
        if norm == 0:
            return x, True
        x /= norm
        if np.abs(x - prev).max() < tol:
            return x, True
    return x, False


def shortest_path_stats(a, need_betweenness=True):
    """Betweenness, eccentricity and harmonic closeness of an unweighted graph.

    Brandes' algorithm run level-synchronously for a block of sources at a
    time: the forward sweep finds BFS levels and shortest-path counts with one
    sparse product per level, the backward sweep accumulates dependencies the
    same way. ``a`` must be symmetric 0/1 without self-loops. Betweenness is
    unnormalized and counts each unordered pair once.
    """
    n = a.shape[0]
    between = np.zeros(n)
    ecc = np.zeros(n)
    harmonic = np.zeros(n)
    a = a.tocsr()
    for start in range(0, n, _BLOCK):
        sources = np.arange(start, min(start + _BLOCK, n))
        cols = np.arange(len(sources))
        depth = np.full((n, len(sources)), -1, dtype=np.int32)
        depth[sources, cols] = 0
        sigma = np.zeros((n, len(sources)))
        sigma[sources, cols] = 1.0
        frontier = sigma.copy()
        level = 0
        while True:
            reached = a @ frontier
            new = (reached > 0) & (depth < 0)
            if not new.any():
                break
            level += 1
            depth[new] = level
            frontier = np.where(new, reached, 0.0)
            sigma += frontier
        ecc[sources] = depth.max(axis=0)
        inv = np.zeros(depth.shape)
        pos = depth > 0
        inv[pos] = 1.0 / depth[pos]
        harmonic[sources] = inv.sum(axis=0)
        if not need_betweenness:
            continue
        delta = np.zeros(depth.shape)
        safe_sigma = np.where(sigma > 0, sigma, 1.0)
        for lvl in range(level - 1, 0, -1):
            push = np.where(depth == lvl + 1, (1.0 + delta) / safe_sigma, 0.0)
            cur = depth == lvl
            delta[cur] = (sigma * (a @ push))[cur]
        between += delta.sum(axis=1)
    return between / 2.0, ecc, harmonic


def global_features(g, spec=None):
    """Compute the selected global (positional) features, one column each.

    All features use the simple symmetrized graph. Eccentricity is taken
    within each node's connected component.
    """
    spec = spec or FeatureSpec("global")
    if spec.kind != "global":
        raise ValueError("spec.kind must be 'global'")
    a = simple_undirected(g)
    flags = {}
    cache = {}

    def paths():
        if "paths" not in cache:
            cache["paths"] = shortest_path_stats(a, need_betweenness="betweenness" in spec.selected)
        return cache["paths"]

    def compute(name):
        if name == "pagerank":
            return pagerank(a)
        if name == "harmonic_closeness":
            return paths()[2]
        if name == "betweenness":
            return paths()[0]
        if name == "eigenvector_centrality":
            vec, ok = eigenvector_centrality(a)
            if not ok:
                logger.warning("eigenvector centrality did not converge; using degree instead")
                flags["eigenvector_centrality_fallback"] = True
                return np.diff(a.indptr).astype(np.float64)
            return vec
        if name == "eccentricity":
            return paths()[1].astype(np.float64)
        if name == "component_size":
            _, comp = csgraph.connected_components(a, directed=False)
            return np.bincount(comp)[comp].astype(np.float64)
        raise ValueError(name)

    cols = [compute(name) for name in spec.selected]
    z = np.column_stack(cols) if cols else np.zeros((g.num_nodes, 0))
    if spec.standardize:
        z = standardize(z)
    return StructuralFeatures(z, spec.selected, flags)


def standardize(z):
    """Zero-mean, unit (population) variance columns; constant columns become 0."""
    z = np.asarray(z, dtype=np.float64)
    mean = z.mean(axis=0)
    sd = z.std(axis=0)
    out = z - mean
    ok = sd > 0
    out[:, ok] /= sd[ok]
    out[:, ~ok] = 0.0
    return out
