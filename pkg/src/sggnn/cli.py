"""Command line entry point: ``sggnn metrics|homophily-hist|run|coefs``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness

COMMANDS = {
    "metrics": harness.cmd_metrics,
    "homophily-hist": harness.cmd_homophily_hist,
    "run": harness.cmd_run,
    "coefs": harness.cmd_coefs,
}


def import_geomgcn(raw_dir, out_dir):
    """Convert Geom-GCN style raw files into edges.tsv / features.csv / labels.csv.

    Expects ``out1_graph_edges.txt`` and ``out1_node_feature_label.txt`` in
    ``raw_dir``. Feature rows that are lists of active indices (as in the
    Actor/film data) are expanded to 0/1 vectors.
    """
    raw_dir, out_dir = Path(raw_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids, feats, labels = [], [], []
    with open(raw_dir / "out1_node_feature_label.txt") as fh:
        next(fh)
        for line in fh:
            node, feat, label = line.rstrip("\n").split("\t")
            ids.append(int(node))
            feats.append([int(v) for v in feat.split(",")])
            labels.append(int(label))
    order = np.argsort(ids)
    if not np.array_equal(np.sort(ids), np.arange(len(ids))):
        raise ValueError("node ids are not 0..N-1")
    widths = {len(f) for f in feats}
    if len(widths) == 1 and all(set(f) <= {0, 1} for f in feats[:50]):
        x = np.array(feats, dtype=np.float64)
    else:
        dim = max(max(f) for f in feats) + 1
        x = np.zeros((len(feats), dim))
        for row, active in enumerate(feats):
            x[row, active] = 1.0
    x = x[order]
    y = np.array(labels)[order]
    with open(raw_dir / "out1_graph_edges.txt") as src, open(out_dir / "edges.tsv", "w") as dst:
        next(src)
        for line in src:
            if line.strip():
                a, b = line.split()
                dst.write(f"{int(a)}\t{int(b)}\n")
    np.savetxt(out_dir / "features.csv", x, delimiter=",", fmt="%.17g")
    with open(out_dir / "labels.csv", "w") as fh:
        fh.write("node_id,label\n")
        for i, label in enumerate(y):
            fh.write(f"{i},{label}\n")
    return out_dir


def build_parser():
    parser = argparse.ArgumentParser(prog="sggnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--workers", type=int, help="parallel training processes")
    p = sub.add_parser("import-geomgcn", help="convert Geom-GCN raw files to the input formats")
    p.add_argument("raw_dir", type=Path)
    p.add_argument("out_dir", type=Path)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "import-geomgcn":
        import_geomgcn(args.raw_dir, args.out_dir)
        return 0
    try:
        cfg = harness.ExperimentConfig.from_file(args.config)
    except (OSError, ValueError, TypeError) as exc:
        print(f"sggnn: bad config: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    try:
        COMMANDS[args.command](cfg, args.out)
    except harness.CommandFailed as exc:
        for failure in exc.failures:
            print(f"sggnn: failed: {failure}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
