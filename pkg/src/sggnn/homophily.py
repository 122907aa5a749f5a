"""Label smoothness and homophily measures for a (graph, labels) pair."""
from __future__ import annotations

import numpy as np

from .graph import row_normalized_adjacency, spmm, sym_normalized_adjacency

TV_CONVENTIONS = ("raw", "row", "sym")
DEFAULT_TV_CONVENTION = "row"


def total_variation(labels, g, convention=DEFAULT_TV_CONVENTION):
    """``||y - A y||_1 / N`` with integer class indices as the signal.

    ``convention`` picks the shift operator: ``"raw"`` adjacency,
    ``"row"`` row-normalized (default) or ``"sym"`` symmetric-normalized
    with self-loops.
    """
    y = np.asarray(labels, dtype=np.float64)
    if len(y) != g.num_nodes:
        raise ValueError("label vector length does not match graph")
    if convention == "raw":
        op = g
    elif convention == "row":
        op = row_normalized_adjacency(g)
    elif convention == "sym":
        op = sym_normalized_adjacency(g)
    else:
        raise ValueError(f"unknown TV convention {convention!r}")
    shifted = spmm(op, y[:, None])[:, 0]
    return float(np.abs(y - shifted).sum() / len(y))


def _edges_without_loops(g):
    src, dst, _ = g.edges()
    keep = src != dst
    return src[keep], dst[keep]


def edge_homophily(g, labels):
    """Fraction of stored edges (self-loops excluded) joining equal labels."""
    y = np.asarray(labels)
    src, dst = _edges_without_loops(g)
    if len(src) == 0:
        raise ValueError("edge homophily is undefined for a graph without edges")
    return float(np.mean(y[src] == y[dst]))


def node_homophily(g, labels):
    """Per-node share of out-neighbours with the node's label.

    Nodes without neighbours (self-loops ignored) get ``NaN``.
    """
    y = np.asarray(labels)
    if len(y) != g.num_nodes:
        raise ValueError("label vector length does not match graph")
    src, dst = _edges_without_loops(g)
    total = np.bincount(src, minlength=g.num_nodes).astype(np.float64)
    same = np.bincount(src, weights=(y[src] == y[dst]).astype(np.float64), minlength=g.num_nodes)
    out = np.full(g.num_nodes, np.nan)
    ok = total > 0
    out[ok] = same[ok] / total[ok]
    return out


def homophily_histogram(values, bins=10):
    """Counts over ``bins`` equal-width bins on [0, 1]; NaN entries are skipped.

    Returns ``(counts, edges)``. The last bin is closed on the right.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    v = np.asarray(values, dtype=np.float64)
    v = v[~np.isnan(v)]
    counts, edges = np.histogram(v, bins=bins, range=(0.0, 1.0))
    return counts, edges
