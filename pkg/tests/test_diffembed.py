import io
import itertools
import math
import random

import numpy as np
import pytest

from tutela.diffembed import (
    DiffusionSubgraph, EmbedConfig, InteractionGraph, KAPPA_MAX,
    ReferenceEmbedder, WalkCorpus, build_corpus, build_graph,
    cooccurrence_features, euler_sequence, load_corpus, load_embeddings,
    neighbors, sample_subgraph, save_corpus, save_embeddings, train,
    train_reference,
)
from tutela.errors import NotFoundError

from conftest import addr


def path_graph(*names):
    weights = {(a, b): 1 for a, b in zip(names, names[1:])}
    return InteractionGraph(names, weights)


def two_clique_graph():
    """Two 10-cliques joined by a single bridge edge."""
    a = [addr(i) for i in range(1, 11)]
    b = [addr(i) for i in range(11, 21)]
    weights = {}
    for group in (a, b):
        for u, v in itertools.combinations(group, 2):
            weights[(u, v)] = 1
    weights[(a[0], b[0])] = 1
    return a, b, InteractionGraph(a + b, weights)


def adjacency_fixture_corpus():
    """n1 and n2 always adjacent with shared contexts; n3 never near them."""
    return WalkCorpus({
        "n1": [["ca", "n1", "n2", "cb"]] * 10 + [["cb", "n1", "n2", "ca"]] * 10,
        "n2": [["ca", "n2", "n1", "cb"]] * 10,
        "n3": [["x1", "n3", "x2"]] * 10,
        "x1": [["x2", "x1", "n3"]] * 5,
    })


# -- graph construction --

def test_build_graph_repeated_sends(builder):
    alice, bob = addr(1), addr(2)
    for block in range(1, 6):
        builder.tx(alice, bob, 10**18, block)
    graph = build_graph(builder.sealed())
    assert graph.weight(alice, bob) == 5


def test_build_graph_empty_store(builder):
    graph = build_graph(builder.sealed())
    assert len(graph) == 0


def test_build_graph_bidirectional_counts(builder):
    a, b = addr(1), addr(2)
    builder.tx(a, b, 1, 1)
    builder.tx(b, a, 1, 2)
    graph = build_graph(builder.sealed())
    assert graph.weight(a, b) == 2


def test_build_graph_self_transfer_isolated(builder):
    builder.tx(addr(1), addr(1), 1, 1)
    graph = build_graph(builder.sealed())
    assert addr(1) in graph
    assert graph.neighbors(addr(1)) == ()
    assert graph.component_size(addr(1)) == 1


def test_graph_rejects_self_loops_and_zero_weights():
    with pytest.raises(ValueError):
        InteractionGraph(["a"], {("a", "a"): 1})
    with pytest.raises(ValueError):
        InteractionGraph(["a", "b"], {("a", "b"): 0})


# -- diffusion sampling --

def test_sample_subgraph_size_one():
    g = path_graph("a", "b", "c")
    sub = sample_subgraph(g, "a", 1, random.Random(0))
    assert sub.nodes == ("a",)
    assert sub.edges == ()


def test_sample_subgraph_path_covers_component():
    g = path_graph("a", "b", "c")
    for seed in range(20):
        sub = sample_subgraph(g, "a", 3, random.Random(seed))
        assert set(sub.nodes) == {"a", "b", "c"}
        assert all(g.weight(u, v) >= 1 for u, v in sub.edges)


def test_sample_subgraph_isolated_node():
    g = InteractionGraph(["lonely"], {})
    sub = sample_subgraph(g, "lonely", 40, random.Random(0))
    assert sub.nodes == ("lonely",)


def test_sample_subgraph_absent_node():
    with pytest.raises(ValueError):
        sample_subgraph(path_graph("a", "b"), "zz", 3, random.Random(0))


def test_sample_subgraph_is_tree():
    _, _, g = two_clique_graph()
    sub = sample_subgraph(g, addr(1), 15, random.Random(4))
    assert len(sub.edges) == len(sub.nodes) - 1


# -- Euler circuits --

def test_euler_single_node():
    sub = DiffusionSubgraph(root="v", nodes=("v",), edges=())
    assert euler_sequence(sub, random.Random(0)) == ["v"]


def test_euler_single_edge():
    sub = DiffusionSubgraph(root="u", nodes=("u", "v"), edges=(("u", "v"),))
    assert euler_sequence(sub, random.Random(0)) == ["u", "v", "u"]


def test_euler_star_traverses_each_edge_once_per_direction():
    sub = DiffusionSubgraph(root="c", nodes=("c", "x", "y"),
                            edges=(("c", "x"), ("c", "y")))
    seq = euler_sequence(sub, random.Random(1))
    assert len(seq) == 2 * len(sub.edges) + 1
    steps = list(zip(seq, seq[1:]))
    for edge in [("c", "x"), ("x", "c"), ("c", "y"), ("y", "c")]:
        assert steps.count(edge) == 1


def test_euler_disconnected_rejected():
    sub = DiffusionSubgraph(root="a", nodes=("a", "b", "c"), edges=(("b", "c"),))
    with pytest.raises(ValueError):
        euler_sequence(sub, random.Random(0))


def random_connected_subgraph(rng: random.Random) -> DiffusionSubgraph:
    n = rng.randint(1, 12)
    nodes = [f"n{i}" for i in range(n)]
    edges = []
    for i in range(1, n):
        edges.append((nodes[rng.randrange(i)], nodes[i]))
    return DiffusionSubgraph(root=nodes[0], nodes=tuple(nodes), edges=tuple(edges))


def test_euler_validity_random_subgraphs():
    rng = random.Random(12)
    for _ in range(100):
        sub = random_connected_subgraph(rng)
        # Degree parity: doubling must make every degree even.
        degree: dict[str, int] = {}
        for u, v in sub.edges:
            degree[u] = degree.get(u, 0) + 2
            degree[v] = degree.get(v, 0) + 2
        assert all(d % 2 == 0 for d in degree.values())

        seq = euler_sequence(sub, rng)
        assert seq[0] == seq[-1] == sub.root
        assert set(seq) == set(sub.nodes)
        assert len(seq) == 2 * len(sub.edges) + 1
        # Edge-count oracle: each undirected edge traversed exactly twice.
        traversed: dict[tuple[str, str], int] = {}
        for u, v in zip(seq, seq[1:]):
            key = (min(u, v), max(u, v))
            traversed[key] = traversed.get(key, 0) + 1
        expected = {(min(u, v), max(u, v)): 2 for u, v in sub.edges}
        assert traversed == expected


# -- corpus --

def test_corpus_counts_and_determinism():
    g = path_graph("a", "b", "c")
    config = EmbedConfig(d=8, walks_per_node=2, seed=5)
    corpus = build_corpus(g, config)
    assert sum(len(seqs) for seqs in corpus.grouped.values()) == 6
    again = build_corpus(g, config)
    assert list(corpus.sequences()) == list(again.sequences())


def test_corpus_differs_across_seeds():
    g = path_graph("a", "b", "c", "d")
    base = list(build_corpus(g, EmbedConfig(d=8, seed=0)).sequences())
    differing = sum(
        list(build_corpus(g, EmbedConfig(d=8, seed=s)).sequences()) != base
        for s in range(1, 11)
    )
    assert differing >= 1


def test_corpus_rejects_empty():
    with pytest.raises(ValueError):
        WalkCorpus({})
    with pytest.raises(ValueError):
        WalkCorpus({"a": [[]]})


def test_corpus_file_round_trip():
    # Generated walks start at their group's node, so grouping survives
    # the flat one-sequence-per-line format.
    g = path_graph("a", "b", "c", "d")
    corpus = build_corpus(g, EmbedConfig(d=8, walks_per_node=3, seed=2))
    sink = io.StringIO()
    save_corpus(corpus, sink)
    loaded = load_corpus(io.StringIO(sink.getvalue()))
    assert list(loaded.sequences()) == list(corpus.sequences())
    assert loaded.grouped.keys() == corpus.grouped.keys()


# -- training --

def test_train_separates_adjacent_nodes():
    corpus = adjacency_fixture_corpus()
    wins = 0
    for seed in range(5):
        table = train(corpus, EmbedConfig(seed=seed))
        d12 = float(np.linalg.norm(table.vectors["n1"] - table.vectors["n2"]))
        d13 = float(np.linalg.norm(table.vectors["n1"] - table.vectors["n3"]))
        wins += d12 < d13
    assert wins >= 3


def test_train_loss_finite_and_non_increasing():
    table = train(adjacency_fixture_corpus(), EmbedConfig(seed=0))
    losses = table.epoch_losses
    assert len(losses) == 5
    assert all(math.isfinite(loss) for loss in losses)
    assert all(a >= b for a, b in zip(losses, losses[1:]))


def test_train_single_node_corpus():
    table = train(WalkCorpus({"v": [["v"]]}), EmbedConfig(seed=1))
    assert len(table) == 1
    vec = table.vectors["v"]
    assert vec.shape == (128,)
    assert np.all(np.isfinite(vec))


def test_train_default_dimension_is_128():
    table = train(adjacency_fixture_corpus(), EmbedConfig(seed=0))
    assert table.d == 128
    assert all(v.shape == (128,) for v in table.vectors.values())


def test_pipeline_bit_reproducible():
    _, _, g = two_clique_graph()
    config = EmbedConfig(d=16, l=8, walks_per_node=2, epochs=2, seed=9)

    def run() -> bytes:
        table = train(build_corpus(g, config), config)
        sink = io.BytesIO()
        save_embeddings(table, sink)
        return sink.getvalue()

    assert run() == run()


def test_two_clique_separation():
    a, b, g = two_clique_graph()
    wins = 0
    for seed in range(2):
        config = EmbedConfig(seed=seed)
        table = train(build_corpus(g, config), config)
        intra, inter = [], []
        for u, v in itertools.combinations(a + b, 2):
            dist = float(np.linalg.norm(
                table.vectors[u].astype(np.float64)
                - table.vectors[v].astype(np.float64)))
            (intra if (u in a) == (v in a) else inter).append(dist)
        wins += sum(intra) / len(intra) < sum(inter) / len(inter)
    assert wins == 2


# -- nearest neighbors --

def table_from(vectors):
    from tutela.diffembed import EmbeddingTable
    return EmbeddingTable(
        d=len(next(iter(vectors.values()))),
        vectors={k: np.asarray(v, dtype=np.float32) for k, v in vectors.items()},
    )


def test_neighbors_two_points():
    table = table_from({"a": [0.0, 0.0], "b": [2.0, 0.0]})
    result = neighbors(table, "a", k=1)
    assert len(result) == 1
    nbr, dist, kappa = result[0]
    assert nbr == "b"
    assert dist == pytest.approx(2.0)
    assert kappa == pytest.approx(0.5)


def test_neighbors_duplicate_vectors_clamped():
    table = table_from({"a": [1.0, 1.0], "b": [1.0, 1.0]})
    _, dist, kappa = neighbors(table, "a", k=1)[0]
    assert dist == 0.0
    assert kappa == KAPPA_MAX


def test_neighbors_untrained_address():
    table = table_from({"a": [0.0], "b": [1.0]})
    with pytest.raises(NotFoundError):
        neighbors(table, "zz", k=1)
    with pytest.raises(ValueError):
        neighbors(table, "a", k=0)


def test_neighbors_excludes_self_and_caps_k():
    table = table_from({"a": [0.0], "b": [1.0], "c": [2.0]})
    result = neighbors(table, "a", k=10)
    assert [r[0] for r in result] == ["b", "c"]


def test_neighbors_ties_break_by_address():
    table = table_from({"q": [0.0], "z": [1.0], "m": [1.0]})
    result = neighbors(table, "q", k=2)
    assert [r[0] for r in result] == ["m", "z"]


def test_neighbors_matches_brute_force_scan():
    rng = np.random.RandomState(17)
    names = [addr(i) for i in range(1, 1001)]
    table = table_from({n: rng.randn(32) for n in names})
    query = names[500]
    got = neighbors(table, query, k=25)

    brute = []
    qvec = table.vectors[query].astype(np.float64)
    for name in names:
        if name == query:
            continue
        delta = table.vectors[name].astype(np.float64) - qvec
        brute.append((math.sqrt(float((delta * delta).sum())), name))
    brute.sort()
    assert [g[0] for g in got] == [name for _, name in brute[:25]]
    assert all(a[1] <= b[1] for a, b in zip(got, got[1:]))


# -- persistence --

def test_embedding_file_round_trip():
    table = train(adjacency_fixture_corpus(), EmbedConfig(d=16, seed=2))
    # Addresses in the file format are 42-byte hex strings.
    renamed = {addr(i): v for i, v in enumerate(table.vectors.values(), start=1)}
    table = table_from(renamed)
    sink = io.BytesIO()
    save_embeddings(table, sink)
    loaded = load_embeddings(io.BytesIO(sink.getvalue()))
    assert loaded.d == table.d
    assert set(loaded.vectors) == set(table.vectors)
    for key, vec in table.vectors.items():
        assert np.array_equal(loaded.vectors[key], vec)


def test_embedding_file_rejects_bad_magic():
    with pytest.raises(ValueError):
        load_embeddings(io.BytesIO(b"NOTEMBED" + b"\x00" * 12))


# -- reference objective --

def test_cooccurrence_shapes_and_zero_rule():
    corpus = WalkCorpus({
        "a": [["a", "b", "a"]],
        "b": [["b", "a", "b"]],
        "c": [["c"]],
    })
    features = cooccurrence_features(corpus, h=2)
    vocab_size = 3
    for vec in features.values():
        assert vec.shape == (2 * 2 * vocab_size,)
        assert np.all(vec >= 0)
    assert np.all(features["c"] == 0)
    assert features["a"].sum() > 0


def test_reference_embedder_loss_decreases_both_distances():
    corpus = adjacency_fixture_corpus()
    for dist in ("euclidean", "cross_entropy"):
        config = EmbedConfig(d=16, epochs=10, learning_rate=0.01, seed=0)
        model = ReferenceEmbedder(corpus, config, dist=dist).fit()
        assert model.epoch_losses[-1] < model.epoch_losses[0]
        table = model.table()
        assert all(np.all(np.isfinite(v)) for v in table.vectors.values())


def test_reference_embedder_node_cap():
    corpus = WalkCorpus({f"n{i}": [[f"n{i}"]] for i in range(501)})
    with pytest.raises(ValueError):
        ReferenceEmbedder(corpus, EmbedConfig(d=4))


def test_reference_rejects_unknown_distance():
    with pytest.raises(ValueError):
        train_reference(adjacency_fixture_corpus(), EmbedConfig(d=8), dist="cosine")
