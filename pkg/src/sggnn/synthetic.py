"""Synthetic graphs for sanity checks."""
from __future__ import annotations

import numpy as np

from .graph import Graph


def stochastic_block_model(block_sizes, p_in, p_out, rng):
    """Undirected SBM without self-loops. Returns ``(graph, block_labels)``."""
    rng = np.random.default_rng(rng)
    labels = np.repeat(np.arange(len(block_sizes)), block_sizes)
    n = len(labels)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    src, dst = iu[keep], ju[keep]
    g = Graph.from_edges(n, np.concatenate([src, dst]), np.concatenate([dst, src]), directed=False)
    return g, labels


def random_graph(num_nodes, num_edges, rng):
    """Uniform random undirected simple graph with exactly ``num_edges`` edges."""
    rng = np.random.default_rng(rng)
    iu, ju = np.triu_indices(num_nodes, k=1)
    pick = rng.choice(len(iu), size=num_edges, replace=False)
    src, dst = iu[pick], ju[pick]
    return Graph.from_edges(num_nodes, np.concatenate([src, dst]), np.concatenate([dst, src]), directed=False)
