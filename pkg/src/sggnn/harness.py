"""Experiment orchestration: homophily tables, histograms, accuracy runs, alpha maps.

A single JSON config drives every command. Each command writes into its own
subdirectory of the output directory together with a ``metadata.json`` that
records the config hash, master seed and the conventions in effect. Nothing
time- or host-dependent is written, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import homophily as hm
from .graph import Dataset, load_dataset, to_undirected, write_edge_file
from .knn import KnnConfig, knn_graph
from .models import build_model
from .structural import FeatureSpec, global_features, role_features
from .trainer import RunResult, TrainConfig, make_splits, train

logger = logging.getLogger(__name__)

DATASET_FILES = ("edges.tsv", "features.csv", "labels.csv")
SOURCE_ORDER = ("feat", "role", "global")
SINGLE_MODELS = ("gcn", "fbgcn")
ADAPTIVE_MODELS = ("sggnn-gcn", "sggnn-fbgcn", "sggnn-node-gcn", "sggnn-node-fbgcn")
FAMILY_LABELS = {"gcn": "GCN", "fbgcn": "FBGCN"}


@dataclass
class ExperimentConfig:
    datasets: list
    data_dir: str = "data"
    metrics_k: int = 3
    k_values: list = field(default_factory=lambda: [3, 7])
    symmetrize_original: bool = True
    symmetrize_knn: bool = True
    tv_convention: str = hm.DEFAULT_TV_CONVENTION
    histogram_bins: int = 10
    role_features: list = field(default_factory=list)
    global_features: list = field(default_factory=list)
    models: list = field(default_factory=lambda: list(SINGLE_MODELS))
    adaptive_models: list = field(default_factory=lambda: list(ADAPTIVE_MODELS))
    hidden: int = 32
    layers: int = 2
    filter_order: int = 3
    dropout: float = 0.5
    train: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    base_dir: str = "."

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        raw = json.loads(path.read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        raw.setdefault("base_dir", str(path.resolve().parent))
        return cls(**raw)

    def train_config(self):
        return TrainConfig(**{"seed": self.seed, **self.train})

    def digest(self):
        payload = {k: v for k, v in asdict(self).items() if k != "base_dir"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def conventions(self):
        return {
            "original_graph_for_models": "symmetrized (max weight)" if self.symmetrize_original else "as loaded",
            "original_graph_for_metrics": "as loaded (directed edges counted once)",
            "knn_graphs": "symmetrized union" if self.symmetrize_knn else "directed k out-edges",
            "knn_distance": "euclidean; structural features standardized (population sd), node features raw",
            "knn_ties": "smaller node index first",
            "tv_convention": self.tv_convention,
            "tv_label_encoding": "integer class index",
            "edge_homophily_self_loops": "excluded",
            "structural_graph": "simple symmetrized graph (self-loops dropped, weights ignored)",
            "gcn_operator": "D^-1/2 (I + A) D^-1/2",
            "fbgcn_operator": "symmetric-normalized with self-loops",
            "fbgcn_filter_order": self.filter_order,
            "layers": self.layers,
            "hidden_width": self.hidden,
            "dropout": self.dropout,
            "alpha_init": "zero logits (uniform mixture)",
            "alpha_weight_decay": "not applied",
            "sggnn_branch_parameters": "independent per graph",
            "train": asdict(self.train_config()),
        }


def resolve_dataset_paths(cfg, entry):
    """Return ``(name, edge_file, feature_file, label_file)`` for a config entry."""
    base = Path(cfg.base_dir)
    if isinstance(entry, str):
        root = base / cfg.data_dir / entry
        return (entry, *(root / f for f in DATASET_FILES))
    name = entry["name"]
    return name, base / entry["edges"], base / entry["features"], base / entry["labels"]


def load_configured_dataset(cfg, entry):
    name, *paths = resolve_dataset_paths(cfg, entry)
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise FileNotFoundError(f"dataset {name!r}: missing {', '.join(missing)}")
    return load_dataset(*paths, name=name)


class GraphSet:
    """The original graph of a dataset plus lazily built KNN graphs."""

    def __init__(self, dataset, cfg):
        self.dataset = dataset
        self.cfg = cfg
        self._features = {}
        self._graphs = {}

    @property
    def original(self):
        return self.dataset.graph

    def model_original(self):
        g = self.dataset.graph
        return to_undirected(g) if self.cfg.symmetrize_original else g

    def features(self, source):
        if source not in self._features:
            if source == "feat":
                self._features[source] = self.dataset.features
            elif source == "role":
                spec = FeatureSpec("role", tuple(self.cfg.role_features))
                self._features[source] = role_features(self.dataset.graph, spec).values
            else:
                spec = FeatureSpec("global", tuple(self.cfg.global_features))
                self._features[source] = global_features(self.dataset.graph, spec).values
        return self._features[source]

    def knn(self, source, k):
        key = (source, k)
        if key not in self._graphs:
            kc = KnnConfig(k, self.cfg.symmetrize_knn, source)
            self._graphs[key] = knn_graph(self.features(source), kc)
        return self._graphs[key]

    def model_graphs(self):
        """Ordered ``{name: graph}`` used for training: Original then KNN graphs."""
        out = {"Original": self.model_original()}
        for source in SOURCE_ORDER:
            for k in self.cfg.k_values:
                out[KnnConfig(k, source=source).label] = self.knn(source, k)
        return out


def metrics_row(gs, cfg):
    """TV and edge homophily on the original and the three k=metrics_k KNN graphs."""
    y = gs.dataset.labels
    graphs = {"Original": gs.original}
    for source in SOURCE_ORDER:
        graphs[KnnConfig(cfg.metrics_k, source=source).label] = gs.knn(source, cfg.metrics_k)
    tv = {name: hm.total_variation(y, g, cfg.tv_convention) for name, g in graphs.items()}
    he = {name: hm.edge_homophily(g, y) for name, g in graphs.items()}
    return tv, he


def _write_metadata(out_dir, cfg, command, extra=None):
    meta = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "datasets": [e if isinstance(e, str) else e["name"] for e in cfg.datasets],
        "conventions": cfg.conventions(),
    }
    if extra:
        meta.update(extra)
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _fmt(x):
    return repr(float(x))


class CommandFailed(RuntimeError):
    def __init__(self, failures):
        self.failures = failures
        super().__init__("failed cells: " + "; ".join(failures))


def _each_dataset(cfg, failures):
    for entry in cfg.datasets:
        name = entry if isinstance(entry, str) else entry.get("name", "?")
        try:
            yield GraphSet(load_configured_dataset(cfg, entry), cfg)
        except Exception as exc:  # reported, other datasets continue
            logger.error("dataset %s: %s", name, exc)
            failures.append(f"{name}: {exc}")


def cmd_metrics(cfg, out):
    out = Path(out) / "metrics"
    out.mkdir(parents=True, exist_ok=True)
    failures, rows = [], []
    names = None
    for gs in _each_dataset(cfg, failures):
        name = gs.dataset.name
        try:
            tv, he = metrics_row(gs, cfg)
        except Exception as exc:
            failures.append(f"{name}: {exc}")
            continue
        names = list(tv)
        rows.append([name] + [_fmt(tv[g]) for g in names] + [_fmt(he[g]) for g in names])
        graph_dir = out / "graphs" / name
        graph_dir.mkdir(parents=True, exist_ok=True)
        for source in SOURCE_ORDER:
            kc = KnnConfig(cfg.metrics_k, cfg.symmetrize_knn, source)
            write_edge_file(gs.knn(source, cfg.metrics_k), graph_dir / kc.filename)
    if names is None:
        names = ["Original"] + [KnnConfig(cfg.metrics_k, source=s).label for s in SOURCE_ORDER]
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset"] + [f"TV_{g}" for g in names] + [f"h_edge_{g}" for g in names])
        writer.writerows(rows)
    _write_metadata(out, cfg, "metrics")
    if failures:
        raise CommandFailed(failures)
    return out / "metrics.csv"


def histogram_table(gs, cfg):
    """Node-homophily histograms on the original and the KNN-Global graph."""
    y = gs.dataset.labels
    k = cfg.metrics_k
    h_orig = hm.node_homophily(gs.original, y)
    h_glob = hm.node_homophily(gs.knn("global", k), y)
    c_orig, edges = hm.homophily_histogram(h_orig, cfg.histogram_bins)
    c_glob, _ = hm.homophily_histogram(h_glob, cfg.histogram_bins)
    return edges, c_orig, c_glob, h_orig, h_glob


def cmd_homophily_hist(cfg, out):
    out = Path(out) / "homophily-hist"
    out.mkdir(parents=True, exist_ok=True)
    failures, summary = [], []
    for gs in _each_dataset(cfg, failures):
        name = gs.dataset.name
        try:
            edges, c_orig, c_glob, h_orig, h_glob = histogram_table(gs, cfg)
        except Exception as exc:
            failures.append(f"{name}: {exc}")
            continue
        with open(out / f"hist-{name}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_low", "bin_high", "count_original", "count_knn_global"])
            for lo, hi, a, b in zip(edges[:-1], edges[1:], c_orig, c_glob):
                writer.writerow([_fmt(lo), _fmt(hi), int(a), int(b)])
        summary.append([name, _fmt(np.nanmean(h_orig)), _fmt(np.nanmean(h_glob)),
                        int((~np.isnan(h_orig)).sum()), int((~np.isnan(h_glob)).sum())])
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "mean_h_node_original", "mean_h_node_knn_global",
                         "defined_original", "defined_knn_global"])
        writer.writerows(summary)
    _write_metadata(out, cfg, "homophily-hist", {"bins": cfg.histogram_bins})
    if failures:
        raise CommandFailed(failures)
    return out


# -- training cells ------------------------------------------------------------

def _seeds(cfg, split):
    return [cfg.seed, split, 7], [cfg.seed, split, 11]


def run_cell(dataset, graph_names, graphs, model_kind, cfg, split):
    """Train one model on one split. ``graphs`` holds one graph per branch."""
    tcfg = cfg.train_config()
    masks = make_splits(dataset.labels, tcfg, split)
    init_seed, drop_seed = _seeds(cfg, split)
    model = build_model(
        model_kind, dataset.features.shape[1], dataset.num_classes, num_graphs=len(graphs),
        num_nodes=dataset.graph.num_nodes, hidden=cfg.hidden, layers=cfg.layers,
        filter_order=cfg.filter_order, dropout=cfg.dropout, rng=init_seed,
    )
    result = train(model, graphs, dataset.features, dataset.labels, masks, tcfg, rng=drop_seed)
    result.split_index = split
    return result


def _cell_job(args):
    dataset, set_name, graph_names, graphs, model_kind, cfg, split = args
    try:
        return run_cell(dataset, graph_names, graphs, model_kind, cfg, split), None
    except Exception as exc:
        return None, f"{dataset.name}/{set_name}/{model_kind}/split{split}: {exc}"


def _jobs(gs, cfg, models, adaptive):
    graphs = gs.model_graphs()
    names = list(graphs)
    num_splits = cfg.train_config().num_splits
    for model in models:
        for name in names:
            for split in range(num_splits):
                yield (gs.dataset, name, [name], [graphs[name]], model, cfg, split)
    for model in adaptive:
        for split in range(num_splits):
            yield (gs.dataset, "All", names, [graphs[n] for n in names], model, cfg, split)


def run_cells(cfg, models, adaptive, failures):
    """Train every (dataset, graph set, model, split) cell.

    Returns ``{(dataset, graph_set, model): [RunResult per split]}``. Results
    are gathered in submission order, so the outcome does not depend on which
    worker finishes first.
    """
    jobs = []
    graph_names = {}
    for gs in _each_dataset(cfg, failures):
        try:
            graph_names[gs.dataset.name] = list(gs.model_graphs())
            jobs.extend(_jobs(gs, cfg, models, adaptive))
        except Exception as exc:
            failures.append(f"{gs.dataset.name}: {exc}")
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            outcomes = list(pool.map(_cell_job, jobs, chunksize=1))
    else:
        outcomes = [_cell_job(job) for job in jobs]
    results = {}
    for job, (res, err) in zip(jobs, outcomes):
        key = (job[0].name, job[1], job[4])
        if err is not None:
            failures.append(err)
            continue
        results.setdefault(key, []).append(res)
    return results, graph_names


def cmd_run(cfg, out):
    out = Path(out) / "run"
    out.mkdir(parents=True, exist_ok=True)
    failures = []
    results, graph_names = run_cells(cfg, cfg.models, cfg.adaptive_models, failures)
    num_splits = cfg.train_config().num_splits
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "graph_set", "model", "mean", "std"]
                        + [f"acc_{i}" for i in range(num_splits)])
        for (ds, gset, model), runs in results.items():
            acc = np.array([r.test_accuracy for r in runs])
            writer.writerow([ds, gset, model, _fmt(acc.mean()), _fmt(acc.std())] + [_fmt(a) for a in acc])
    payload = {
        "config_sha256": cfg.digest(),
        "graph_names": graph_names,
        "runs": [
            {"dataset": ds, "graph_set": gset, "model": model, "results": [asdict(r) for r in runs]}
            for (ds, gset, model), runs in results.items()
        ],
    }
    (out / "runs.json").write_text(json.dumps(payload) + "\n")
    _write_metadata(out, cfg, "run")
    if failures:
        raise CommandFailed(failures)
    return out / "results.csv"


def _load_previous_runs(cfg, out):
    path = Path(out) / "run" / "runs.json"
    if not path.exists():
        return None
    payload = json.loads(path.read_text())
    if payload.get("config_sha256") != cfg.digest():
        return None
    results = {}
    for item in payload["runs"]:
        key = (item["dataset"], item["graph_set"], item["model"])
        results[key] = [RunResult(**r) for r in item["results"]]
    return results, payload["graph_names"]


def alpha_matrix(results, datasets, model):
    """Rows of split-averaged alphas per dataset for ``model`` (global or per-node means)."""
    rows = {}
    for ds in datasets:
        runs = results.get((ds, "All", model))
        if not runs:
            continue
        vecs = [r.alphas if r.alphas is not None else r.node_alpha_means for r in runs]
        rows[ds] = np.mean(np.array(vecs), axis=0)
    return rows


def cmd_coefs(cfg, out):
    out_dir = Path(out) / "coefs"
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = []
    wanted = [m for m in ADAPTIVE_MODELS if m in cfg.adaptive_models] or ["sggnn-gcn", "sggnn-fbgcn"]
    previous = _load_previous_runs(cfg, out)
    if previous is not None and all(
        any(key[2] == m for key in previous[0]) for m in wanted
    ):
        results, graph_names = previous
        source = "reused run/runs.json"
    else:
        results, graph_names = run_cells(cfg, [], wanted, failures)
        source = "trained on demand"
    written = []
    for model in wanted:
        family = FAMILY_LABELS[model.rsplit("-", 1)[-1]]
        prefix = "coefs-node" if "-node-" in model else "coefs"
        rows = alpha_matrix(results, list(graph_names), model)
        if not rows:
            continue
        columns = next(iter(graph_names.values()))
        path = out_dir / f"{prefix}-{family}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset"] + columns)
            for ds, vec in rows.items():
                writer.writerow([ds] + [_fmt(v) for v in vec])
        written.append(path.name)
    _write_metadata(out_dir, cfg, "coefs", {"alpha_source": source, "files": written})
    if failures:
        raise CommandFailed(failures)
    return out_dir
