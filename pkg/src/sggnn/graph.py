"""Sparse graph storage, dataset ingestion and the linear operators built on it.

Edges are stored in CSR form: row ``i`` holds the out-neighbours of node ``i``
(an edge-file line ``src<TAB>dst`` becomes the entry ``A[src, dst]``).
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class DatasetFormatError(ValueError):
    """Malformed or inconsistent dataset file."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True, eq=False)
class Graph:
    """Weighted adjacency in compressed-sparse-row form.

    Column indices are sorted and unique inside every row. Instances are
    treated as immutable; use the module functions to derive new graphs.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    directed: bool = True

    def __post_init__(self):
        for name in ("row_offsets", "col_indices", "values"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        if len(self.row_offsets) != self.num_nodes + 1:
            raise ValueError("row_offsets must have num_nodes + 1 entries")
        if self.row_offsets[-1] != len(self.col_indices) or len(self.values) != len(self.col_indices):
            raise ValueError("CSR arrays have inconsistent lengths")

    @classmethod
    def from_edges(cls, num_nodes, src, dst, weights=None, directed=True):
        """Build a graph from edge arrays, keeping the first copy of duplicates."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if weights is None:
            weights = np.ones(len(src))
        weights = np.asarray(weights, dtype=np.float64)
        if len(src) and (src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= num_nodes):
            raise ValueError("edge endpoint out of range")
        key = src * num_nodes + dst
        _, first = np.unique(key, return_index=True)
        if len(first) < len(key):
            logger.warning("collapsed %d duplicate edges", len(key) - len(first))
        # np.unique sorts by key, i.e. by (row, col)
        src, dst, weights = src[first], dst[first], weights[first]
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=num_nodes), out=offsets[1:])
        return cls(int(num_nodes), offsets, dst.copy(), weights.copy(), bool(directed))

    @classmethod
    def from_scipy(cls, mat, directed=True):
        mat = sp.csr_matrix(mat, dtype=np.float64)
        mat.sum_duplicates()
        mat.sort_indices()
        return cls(mat.shape[0], mat.indptr.astype(np.int64), mat.indices.astype(np.int64),
                   mat.data.copy(), directed)

    @classmethod
    def empty(cls, num_nodes, directed=False):
        return cls.from_edges(num_nodes, [], [], directed=directed)

    @property
    def num_edges(self):
        """Number of stored (directed) entries."""
        return len(self.col_indices)

    def edges(self):
        """Return ``(src, dst, weight)`` arrays in CSR order."""
        src = np.repeat(np.arange(self.num_nodes), np.diff(self.row_offsets))
        return src, np.asarray(self.col_indices), np.asarray(self.values)

    def out_degree(self):
        return np.diff(self.row_offsets)

    def neighbors(self, i):
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def to_scipy(self):
        return sp.csr_matrix(
            (np.asarray(self.values), np.asarray(self.col_indices), np.asarray(self.row_offsets)),
            shape=(self.num_nodes, self.num_nodes),
        )

    def to_dense(self):
        return self.to_scipy().toarray()

    def is_symmetric(self):
        a = self.to_scipy()
        return (a != a.T).nnz == 0


@dataclass(frozen=True)
class SplitMask:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        if not self.train.any():
            raise ValueError("train mask is empty")
        if (self.train & self.val).any() or (self.train & self.test).any() or (self.val & self.test).any():
            raise ValueError("split masks overlap")


@dataclass(eq=False)
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.graph.num_nodes
        if self.features.shape[0] != n or len(self.labels) != n:
            raise ValueError(
                f"inconsistent sizes: graph {n}, features {self.features.shape[0]}, labels {len(self.labels)}"
            )
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label outside [0, num_classes)")


def read_edge_file(path, num_nodes=None):
    """Parse a ``src<TAB>dst[<TAB>weight]`` edge list.

    Returns ``(src, dst, weights)`` as arrays. Blank lines and lines starting
    with ``#`` are skipped.
    """
    src, dst, w = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise DatasetFormatError(path, lineno, f"expected 2 or 3 columns, got {len(parts)}")
            try:
                a, b = int(parts[0]), int(parts[1])
                weight = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise DatasetFormatError(path, lineno, f"cannot parse edge {line!r}") from None
            for node in (a, b):
                if node < 0 or (num_nodes is not None and node >= num_nodes):
                    raise DatasetFormatError(
                        path, lineno, f"node id {node} out of range for {num_nodes} nodes"
                    )
            src.append(a)
            dst.append(b)
            w.append(weight)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(w, dtype=np.float64)


def read_feature_file(path):
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), 1):
            if not record or all(not c.strip() for c in record):
                continue
            try:
                values = [float(c) for c in record]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header row
                raise DatasetFormatError(path, lineno, "non-numeric feature value") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DatasetFormatError(path, lineno, f"expected {width} columns, got {len(values)}")
            rows.append(values)
    feats = np.array(rows, dtype=np.float64).reshape(len(rows), width or 0)
    if not np.isfinite(feats).all():
        raise DatasetFormatError(path, None, "non-finite feature values")
    return feats


def read_label_file(path):
    """Read ``node_id,label`` rows. Returns a dense label array indexed by node id."""
    pairs = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, record in enumerate(reader, 1):
            if not record:
                continue
            if lineno == 1 and record[0].strip() == "node_id":
                continue
            if len(record) != 2:
                raise DatasetFormatError(path, lineno, "expected columns node_id,label")
            try:
                node = int(record[0])
            except ValueError:
                raise DatasetFormatError(path, lineno, f"non-integer node id {record[0]!r}") from None
            try:
                label = int(record[1])
            except ValueError:
                raise DatasetFormatError(path, lineno, f"non-integer label {record[1]!r}") from None
            if node in pairs:
                raise DatasetFormatError(path, lineno, f"duplicate node id {node}")
            pairs[node] = label
    n = len(pairs)
    labels = np.full(n, -1, dtype=np.int64)
    for node, label in pairs.items():
        if node < 0 or node >= n:
            raise DatasetFormatError(path, None, f"node ids must be 0..{n - 1}, found {node}")
        labels[node] = label
    if len(labels) and labels.min() < 0:
        raise DatasetFormatError(path, None, "labels must be integers 0..C-1")
    return labels


def load_dataset(edge_file, feature_file, label_file, name=None):
    """Load a dataset from an edge list, a feature CSV and a label CSV."""
    features = read_feature_file(feature_file)
    labels = read_label_file(label_file)
    n = features.shape[0]
    if len(labels) != n:
        raise DatasetFormatError(label_file, None, f"{len(labels)} labels but {n} feature rows")
    src, dst, w = read_edge_file(edge_file, num_nodes=n)
    graph = Graph.from_edges(n, src, dst, w, directed=True)
    num_classes = int(labels.max()) + 1 if n else 0
    if num_classes < 2:
        raise DatasetFormatError(label_file, None, "need at least two classes")
    return Dataset(graph, features, labels, num_classes, name or Path(edge_file).parent.name)


def write_edge_file(graph, path):
    src, dst, w = graph.edges()
    weighted = not np.all(w == 1.0)
    with open(path, "w") as fh:
        for a, b, c in zip(src, dst, w):
            fh.write(f"{a}\t{b}\t{c!r}\n" if weighted else f"{a}\t{b}\n")


def to_undirected(g):
    """Union of ``g`` and its reverse; a pair's weight is the larger direction."""
    a = g.to_scipy()
    sym = a.maximum(a.T).tocsr()
    return Graph.from_scipy(sym, directed=False)


def _with_self_loops(g):
    a = g.to_scipy().tolil()
    a.setdiag(1.0 + a.diagonal())
    return a.tocsr()


def sym_normalized_adjacency(g):
    """``D^-1/2 (I + A) D^-1/2`` with ``D = diag((I + A) 1)``."""
    a = _with_self_loops(g)
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = np.zeros_like(deg)
    pos = deg > 0
    inv_sqrt[pos] = deg[pos] ** -0.5
    d = sp.diags(inv_sqrt)
    return Graph.from_scipy(d @ a @ d, directed=g.directed)


def row_normalized_adjacency(g):
    a = g.to_scipy()
    sums = np.asarray(a.sum(axis=1)).ravel()
    scale = np.zeros_like(sums)
    nz = sums != 0
    scale[nz] = 1.0 / sums[nz]
    return Graph.from_scipy(sp.diags(scale) @ a, directed=g.directed)


def spmm(g, m):
    """Sparse-dense product ``A @ M``."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[0] != g.num_nodes:
        raise ValueError(f"dimension mismatch: graph has {g.num_nodes} nodes, matrix has {m.shape[0]} rows")
    return g.to_scipy() @ m
