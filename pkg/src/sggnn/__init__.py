"""Structure-guided neighbourhood discovery for heterophilic node classification."""

from .graph import (
    Dataset,
    DatasetFormatError,
    Graph,
    SplitMask,
    load_dataset,
    row_normalized_adjacency,
    spmm,
    sym_normalized_adjacency,
    to_undirected,
)
from .homophily import edge_homophily, homophily_histogram, node_homophily, total_variation
from .knn import KnnConfig, knn_graph, pairwise_euclidean
from .models import build_model, extract_alphas
from .structural import FeatureSpec, global_features, role_features, standardize
from .trainer import RunResult, TrainConfig, evaluate, make_splits, train

__version__ = "0.1.0"
