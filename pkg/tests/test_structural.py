import numpy as np
import pytest

from sggnn.graph import Graph
from sggnn.structural import (
    FeatureSpec,
    GLOBAL_FEATURES,
    ROLE_FEATURES,
    global_features,
    role_features,
    standardize,
)

from oracles import betweenness_by_enumeration, dense_adjacency, random_edges, triangles_by_cube


def undirected(n, pairs):
    src = [a for a, b in pairs] + [b for a, b in pairs]
    dst = [b for a, b in pairs] + [a for a, b in pairs]
    return Graph.from_edges(n, src, dst, directed=False)


def raw(kind, g, *names):
    spec = FeatureSpec(kind, names, standardize=False)
    fn = role_features if kind == "role" else global_features
    return fn(g, spec).values


def test_triangle_graph():
    k3 = undirected(3, [(0, 1), (1, 2), (0, 2)])
    z = raw("role", k3, "triangle_count", "local_clustering_coefficient")
    assert z[:, 0].tolist() == [1, 1, 1]
    assert z[:, 1].tolist() == [1.0, 1.0, 1.0]


def test_star():
    star = undirected(5, [(0, i) for i in range(1, 5)])
    z = raw("role", star, "total_degree", "local_clustering_coefficient", "egonet_size",
            "egonet_edge_count", "two_hop_neighborhood_size", "core_number", "average_neighbor_degree")
    assert z[:, 0].tolist() == [4, 1, 1, 1, 1]
    assert z[:, 1].tolist() == [0] * 5
    assert z[:, 2].tolist() == [5, 2, 2, 2, 2]
    assert z[:, 3].tolist() == [4, 1, 1, 1, 1]
    assert z[:, 4].tolist() == [4, 4, 4, 4, 4]
    assert z[:, 5].tolist() == [1] * 5
    assert z[:, 6].tolist() == [1, 4, 4, 4, 4]


def test_in_out_degree_use_direction():
    g = Graph.from_edges(3, [0, 0, 1], [1, 2, 2])
    z = raw("role", g, "in_degree", "out_degree", "total_degree")
    assert z[:, 0].tolist() == [0, 1, 2]
    assert z[:, 1].tolist() == [2, 1, 0]
    assert z[:, 2].tolist() == [2, 2, 2]


@pytest.mark.parametrize("seed", range(8))
def test_triangles_match_cube_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 31))
    src, dst = random_edges(n, 0.3, rng, directed=False)
    a = dense_adjacency(n, src, dst)
    g = Graph.from_edges(n, src, dst, directed=False)
    assert np.array_equal(raw("role", g, "triangle_count")[:, 0], triangles_by_cube(a))


def test_pagerank_two_nodes():
    z = raw("global", undirected(2, [(0, 1)]), "pagerank")
    assert np.allclose(z[:, 0], 0.5, atol=1e-12)


def test_path_betweenness():
    z = raw("global", undirected(3, [(0, 1), (1, 2)]), "betweenness")
    assert z[:, 0].tolist() == [0.0, 1.0, 0.0]


def test_star_eccentricity_and_component():
    g = undirected(6, [(0, 1), (0, 2), (0, 3), (4, 5)])
    z = raw("global", g, "eccentricity", "component_size")
    assert z[:, 0].tolist() == [1, 2, 2, 2, 1, 1]
    assert z[:, 1].tolist() == [4, 4, 4, 4, 2, 2]


def test_harmonic_closeness_path():
    z = raw("global", undirected(3, [(0, 1), (1, 2)]), "harmonic_closeness")
    assert np.allclose(z[:, 0], [1.5, 2.0, 1.5])


def test_eigenvector_centrality_star():
    z = raw("global", undirected(4, [(0, 1), (0, 2), (0, 3)]), "eigenvector_centrality")
    # leading eigenvector of K_{1,3}: (sqrt(3), 1, 1, 1) normalized
    expected = np.array([np.sqrt(3), 1, 1, 1]) / np.sqrt(6)
    assert np.allclose(z[:, 0], expected, atol=1e-8)


@pytest.mark.parametrize("seed", range(6))
def test_betweenness_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 20))
    src, dst = random_edges(n, 0.2, rng, directed=False)
    g = Graph.from_edges(n, src, dst, directed=False)
    expected = betweenness_by_enumeration(dense_adjacency(n, src, dst))
    assert np.allclose(raw("global", g, "betweenness")[:, 0], expected, rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_tree_leaves_have_zero_betweenness(seed):
    rng = np.random.default_rng(seed)
    n = 15
    pairs = [(i, int(rng.integers(0, i))) for i in range(1, n)]
    g = undirected(n, pairs)
    b = raw("global", g, "betweenness")[:, 0]
    deg = np.diff(g.row_offsets)
    assert np.all(b[deg == 1] == 0)


def test_pagerank_sums_to_one_and_relabels():
    rng = np.random.default_rng(3)
    n = 25
    src, dst = random_edges(n, 0.15, rng)
    g = Graph.from_edges(n, src, dst)
    pr = raw("global", g, "pagerank")[:, 0]
    assert abs(pr.sum() - 1) < 1e-10
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    g2 = Graph.from_edges(n, inv[src], inv[dst])
    pr2 = raw("global", g2, "pagerank")[:, 0]
    assert np.allclose(pr2[inv], pr, atol=1e-9)


def test_features_are_deterministic():
    rng = np.random.default_rng(11)
    src, dst = random_edges(30, 0.1, rng)
    g = Graph.from_edges(30, src, dst)
    for fn in (role_features, global_features):
        assert np.array_equal(fn(g).values, fn(g).values)


def test_full_catalogs_shape_and_names():
    g = undirected(4, [(0, 1), (1, 2), (2, 3)])
    r = role_features(g)
    gl = global_features(g)
    assert r.values.shape == (4, len(ROLE_FEATURES)) and r.names == ROLE_FEATURES
    assert gl.values.shape == (4, len(GLOBAL_FEATURES)) and gl.names == GLOBAL_FEATURES
    assert np.isfinite(r.values).all() and np.isfinite(gl.values).all()


def test_unknown_feature_name():
    with pytest.raises(ValueError, match="unknown role feature"):
        FeatureSpec("role", ["pagerank"])
    with pytest.raises(ValueError, match="spec.kind"):
        role_features(undirected(2, [(0, 1)]), FeatureSpec("global"))


def test_csv_export(tmp_path):
    feats = role_features(undirected(3, [(0, 1)]), FeatureSpec("role", ["total_degree", "egonet_size"]))
    feats.to_csv(tmp_path / "z.csv")
    lines = (tmp_path / "z.csv").read_text().splitlines()
    assert lines[0] == "total_degree,egonet_size"
    assert len(lines) == 4


def test_standardize_examples():
    z = standardize(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))
    c = np.sqrt(1.5)  # 1 / population sd of (1, 2, 3)
    assert np.allclose(z[:, 0], [-c, 0, c], atol=1e-15)
    assert z[:, 1].tolist() == [0, 0, 0]
    rnd = standardize(np.random.default_rng(0).normal(3, 7, size=(50, 4)))
    assert np.all(np.abs(rnd.mean(axis=0)) < 1e-12)
    assert np.allclose(rnd.std(axis=0), 1.0)
