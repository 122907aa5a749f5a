"""GCN, filter-bank GCN and the adaptive multi-graph SG-GNN models.

Every model exposes the same small surface used by the trainer:

* ``prepare(graphs)`` turns a list of graphs into the constant operators the
  model consumes (done once per training run),
* ``forward(ops, x, training=False, rng=None)`` returns class logits,
* ``parameters()`` lists the learnable tensors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .graph import sym_normalized_adjacency


@dataclass
class GcnConfig:
    layer_dims: list
    dropout: float = 0.5

    def __post_init__(self):
        self.layer_dims = list(self.layer_dims)
        if len(self.layer_dims) < 2:
            raise ValueError("layer_dims needs at least an input and an output width")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class FbGcnConfig(GcnConfig):
    filter_order: int = 3
    normalized: bool = True

    def __post_init__(self):
        super().__post_init__()
        if self.filter_order < 1:
            raise ValueError("filter_order must be >= 1")


@dataclass
class SgGnnConfig:
    branch_configs: list
    embedding_dim: int
    mlp_dims: list = field(default_factory=lambda: [32])
    alpha_mode: str = "global"
    dropout: float = 0.5

    def __post_init__(self):
        if not self.branch_configs:
            raise ValueError("SG-GNN needs at least one branch")
        if any(b.layer_dims[-1] != self.embedding_dim for b in self.branch_configs):
            raise ValueError("every branch must output embedding_dim features")
        if self.alpha_mode not in ("global", "per_node"):
            raise ValueError(f"unknown alpha_mode {self.alpha_mode!r}")


class GCN:
    """Stack of ``relu(A_norm H W)`` layers; the last layer returns raw scores."""

    def __init__(self, cfg, rng, final_activation=False):
        rng = np.random.default_rng(rng)
        self.cfg = cfg
        self.final_activation = final_activation
        dims = cfg.layer_dims
        self.weights = [ad.glorot_init((dims[i], dims[i + 1]), rng, name=f"W{i}")
                        for i in range(len(dims) - 1)]

    def parameters(self):
        return list(self.weights)

    @staticmethod
    def operator(g):
        return sym_normalized_adjacency(g).to_scipy()

    def prepare(self, graphs):
        if len(graphs) != 1:
            raise ValueError("single-graph model expects exactly one graph")
        return self.operator(graphs[0])

    def _check_input(self, x):
        if x.shape[1] != self.cfg.layer_dims[0]:
            raise ValueError(f"input has {x.shape[1]} features, model expects {self.cfg.layer_dims[0]}")

    def layer(self, op, h, i):
        return ad.sparse_matmul(op, h @ self.weights[i])

    def forward(self, op, x, training=False, rng=None):
        self._check_input(x)
        h = x
        last = len(self.weights) - 1
        for i in range(len(self.weights)):
            h = self.layer(op, h, i)
            if i < last or self.final_activation:
                h = ad.relu(h)
            if i < last and training:
                h = ad.dropout(h, self.cfg.dropout, rng)
        return h


class FBGCN(GCN):
    """Filter-bank layers ``relu(sum_r A^r H W_r)`` for ``r < filter_order``.

    ``A`` is the symmetric-normalized adjacency unless ``cfg.normalized`` is
    false, in which case raw weights are used.
    """

    def __init__(self, cfg, rng, final_activation=False):
        rng = np.random.default_rng(rng)
        self.cfg = cfg
        self.final_activation = final_activation
        dims = cfg.layer_dims
        self.taps = [
            [ad.glorot_init((dims[i], dims[i + 1]), rng, name=f"W{i}_{r}") for r in range(cfg.filter_order)]
            for i in range(len(dims) - 1)
        ]
        self.weights = [w for taps in self.taps for w in taps]

    def prepare(self, graphs):
        if len(graphs) != 1:
            raise ValueError("single-graph model expects exactly one graph")
        g = graphs[0]
        return sym_normalized_adjacency(g).to_scipy() if self.cfg.normalized else g.to_scipy()

    def forward(self, op, x, training=False, rng=None):
        self._check_input(x)
        h = x
        last = len(self.taps) - 1
        for i, taps in enumerate(self.taps):
            # Horner form: H W_0 + A (H W_1 + A (H W_2 + ...))
            acc = h @ taps[-1]
            for w in reversed(taps[:-1]):
                acc = ad.add(h @ w, ad.sparse_matmul(op, acc))
            h = acc
            if i < last or self.final_activation:
                h = ad.relu(h)
            if i < last and training:
                h = ad.dropout(h, self.cfg.dropout, rng)
        return h


class MLP:
    def __init__(self, dims, dropout, rng):
        rng = np.random.default_rng(rng)
        self.dropout = dropout
        self.weights = [ad.glorot_init((dims[i], dims[i + 1]), rng, name=f"mlp{i}")
                        for i in range(len(dims) - 1)]
        self.biases = [ad.Tensor(np.zeros((1, dims[i + 1])), requires_grad=True, name=f"mlp_b{i}")
                       for i in range(len(dims) - 1)]

    def parameters(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, h, training=False, rng=None):
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add(h @ w, b)
            if i < last:
                h = ad.relu(h)
                if training:
                    h = ad.dropout(h, self.dropout, rng)
        return h


def build_branch(cfg, rng):
    cls = FBGCN if isinstance(cfg, FbGcnConfig) else GCN
    return cls(cfg, rng, final_activation=True)


class SGGNN:
    """One GNN branch per input graph, mixed by softmax weights, then an MLP.

    With ``alpha_mode="global"`` a single weight per graph scales the whole
    branch embedding. With ``"per_node"`` every node has its own weights,
    softmaxed across graphs so that each node's weights sum to one.
    """

    def __init__(self, cfg, num_classes, rng, num_nodes=None):
        rng = np.random.default_rng(rng)
        self.cfg = cfg
        self.branches = [build_branch(b, rng) for b in cfg.branch_configs]
        n_graphs = len(self.branches)
        if cfg.alpha_mode == "global":
            logits = np.zeros((1, n_graphs))
        else:
            if num_nodes is None:
                raise ValueError("per-node mixing needs num_nodes")
            logits = np.zeros((num_nodes, n_graphs))
        self.alpha_logits = ad.Tensor(logits, requires_grad=True, name="alpha_logits")
        dims = [n_graphs * cfg.embedding_dim, *cfg.mlp_dims, num_classes]
        self.head = MLP(dims, cfg.dropout, rng)

    @property
    def num_graphs(self):
        return len(self.branches)

    def parameters(self):
        params = [p for b in self.branches for p in b.parameters()]
        return params + [self.alpha_logits] + self.head.parameters()

    def prepare(self, graphs):
        if len(graphs) != self.num_graphs:
            raise ValueError(f"model has {self.num_graphs} branches but got {len(graphs)} graphs")
        return [b.prepare([g]) for b, g in zip(self.branches, graphs)]

    def alphas(self):
        """Current mixing weights as a tensor, ``(1, I)`` or ``(N, I)``."""
        if self.cfg.alpha_mode == "global":
            return ad.softmax_vector(self.alpha_logits)
        return ad.softmax_rows(self.alpha_logits)

    def embed(self, ops, x, training=False, rng=None):
        if len(ops) != self.num_graphs:
            raise ValueError(f"model has {self.num_graphs} branches but got {len(ops)} operators")
        alpha = self.alphas()
        parts = [
            ad.scale_rows(b.forward(op, x, training, rng), ad.select_col(alpha, i))
            for i, (b, op) in enumerate(zip(self.branches, ops))
        ]
        return ad.concat_cols(parts)

    def forward(self, ops, x, training=False, rng=None):
        return self.head.forward(self.embed(ops, x, training, rng), training, rng)


def extract_alphas(model):
    """Softmaxed mixing weights in input-graph order: shape ``(I,)`` or ``(N, I)``."""
    if not isinstance(model, SGGNN):
        raise TypeError("extract_alphas needs an SG-GNN model")
    alpha = model.alphas().data
    return alpha[0].copy() if model.cfg.alpha_mode == "global" else alpha.copy()


def write_alphas_csv(alphas, graph_names, path):
    """``graph_name,alpha`` rows for global weights; one row per node otherwise."""
    alphas = np.asarray(alphas)
    with open(path, "w") as fh:
        if alphas.ndim == 1:
            fh.write("graph_name,alpha\n")
            for name, a in zip(graph_names, alphas):
                fh.write(f"{name},{a!r}\n")
        else:
            fh.write("node_id," + ",".join(graph_names) + "\n")
            for n, row in enumerate(alphas):
                fh.write(f"{n}," + ",".join(repr(float(v)) for v in row) + "\n")


def build_model(kind, num_features, num_classes, num_graphs=1, num_nodes=None, hidden=32,
                layers=2, filter_order=3, dropout=0.5, rng=None):
    """Construct a model by name: ``gcn``, ``fbgcn``, ``sggnn-gcn``, ``sggnn-fbgcn``,
    ``sggnn-node-gcn`` or ``sggnn-node-fbgcn``."""
    kind = kind.lower()
    inner = [num_features] + [hidden] * (layers - 1)
    if kind == "gcn":
        return GCN(GcnConfig(inner + [num_classes], dropout), rng)
    if kind == "fbgcn":
        return FBGCN(FbGcnConfig(inner + [num_classes], dropout, filter_order), rng)
    if kind.startswith("sggnn"):
        family = kind.rsplit("-", 1)[-1]
        mode = "per_node" if "-node-" in kind else "global"
        if family == "gcn":
            branch = [GcnConfig(inner + [hidden], dropout) for _ in range(num_graphs)]
        elif family == "fbgcn":
            branch = [FbGcnConfig(inner + [hidden], dropout, filter_order) for _ in range(num_graphs)]
        else:
            raise ValueError(f"unknown branch family in {kind!r}")
        cfg = SgGnnConfig(branch, hidden, [hidden], mode, dropout)
        return SGGNN(cfg, num_classes, rng, num_nodes=num_nodes)
    raise ValueError(f"unknown model kind {kind!r}")
