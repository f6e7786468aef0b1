"""Interaction-graph node embeddings via diffusion walks.

Pipeline: build an undirected interaction graph from the store, grow a
small random diffusion subgraph around every node, extract an Euler
circuit of the edge-doubled subgraph as a walk, then train vectors on the
walk corpus so that addresses with similar transaction neighborhoods land
close together in Euclidean space. Cluster queries are exact
nearest-neighbor scans with inverse-distance confidence.

Two trainers exist. The default is skip-gram with negative sampling over
the walks, which scales. A reference trainer materializes the positional
co-occurrence vector of every node and regresses onto it with a two-layer
perceptron; it is quadratic in the vocabulary and exists for tests on
small graphs.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator, Optional, Sequence, TextIO

import numpy as np

from .darcluster import UnionFind
from .errors import NotFoundError, StoreError
from .ledger import LedgerStore

KAPPA_MAX = 1e6
_MIN_DISTANCE = 1e-6

EMBEDDING_MAGIC = b"TUTELEMB"
EMBEDDING_VERSION = 1


@dataclass(frozen=True)
class EmbedConfig:
    """Hyperparameters; defaults follow the deployed configuration."""

    d: int = 128
    l: int = 40
    h: int = 5
    walks_per_node: int = 10
    epochs: int = 5
    learning_rate: float = 0.025
    negative_samples: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("d", "l", "h", "walks_per_node", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.negative_samples < 0:
            raise ValueError("negative_samples must be >= 0")


class InteractionGraph:
    """Undirected graph weighted by interaction counts, no self-loops."""

    def __init__(self, nodes: Sequence[str], weights: dict[tuple[str, str], int]):
        self.nodes: tuple[str, ...] = tuple(sorted(set(nodes)))
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for (a, b), w in weights.items():
            if a == b:
                raise ValueError("self-loops are not allowed")
            if w < 1:
                raise ValueError("edge weights must be >= 1")
            adj[a].add(b)
            adj[b].add(a)
        self._adj: dict[str, tuple[str, ...]] = {
            n: tuple(sorted(nbrs)) for n, nbrs in adj.items()
        }
        self._weights = {(min(a, b), max(a, b)): w for (a, b), w in weights.items()}
        uf = UnionFind()
        for n in self.nodes:
            uf.add(n)
        for a, b in self._weights:
            uf.union(a, b)
        self._component_size: dict[str, int] = {}
        for group in uf.groups():
            for n in group:
                self._component_size[n] = len(group)

    def __contains__(self, node: str) -> bool:
        return node in self._adj

    def __len__(self) -> int:
        return len(self.nodes)

    def neighbors(self, node: str) -> tuple[str, ...]:
        return self._adj[node]

    def weight(self, a: str, b: str) -> int:
        return self._weights.get((min(a, b), max(a, b)), 0)

    def edges(self) -> Iterator[tuple[str, str]]:
        return iter(self._weights)

    def edge_count(self) -> int:
        return len(self._weights)

    def component_size(self, node: str) -> int:
        return self._component_size[node]


def build_graph(store: LedgerStore) -> InteractionGraph:
    """Interaction graph over all transfer endpoints; self transfers excluded."""
    if not store.sealed:
        raise StoreError("build_graph requires a sealed store")
    nodes: set[str] = set()
    for tx in store.transactions:
        nodes.add(tx.from_addr)
        nodes.add(tx.to_addr)
    weights = dict(store.interaction_pairs())
    return InteractionGraph(nodes, weights)


@dataclass(frozen=True)
class DiffusionSubgraph:
    """A sampled tree around root; edges are in insertion order."""

    root: str
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]


def sample_subgraph(g: InteractionGraph, v: str, l: int,
                    rng: random.Random) -> DiffusionSubgraph:
    """Grow a diffusion subgraph from v until it has min(l, component) nodes.

    Growth step: pick a uniform node u already in the subgraph, then a
    uniform neighbor w of u in the full graph; adopt w (and the edge) if it
    is new. Steps that land on an already-adopted node are retried.
    """
    if v not in g:
        raise ValueError(f"node not in graph: {v}")
    target = min(l, g.component_size(v))
    nodes: list[str] = [v]
    node_set = {v}
    edges: list[tuple[str, str]] = []
    while len(nodes) < target:
        u = nodes[rng.randrange(len(nodes))]
        nbrs = g.neighbors(u)
        if not nbrs:
            continue
        w = nbrs[rng.randrange(len(nbrs))]
        if w in node_set:
            continue
        nodes.append(w)
        node_set.add(w)
        edges.append((u, w))
    return DiffusionSubgraph(root=v, nodes=tuple(nodes), edges=tuple(edges))


def euler_sequence(subgraph: DiffusionSubgraph,
                   rng: Optional[random.Random] = None) -> list[str]:
    """Euler circuit of the subgraph with every edge doubled.

    Doubling makes every degree even, so a closed walk exists that uses each
    doubled edge exactly once and starts and ends at the root. Among the
    unused edges at the current node, the next one is chosen by rng
    (Hierholzer construction). Length is 2 * |edges| + 1, or 1 for a single
    node.
    """
    rng = rng or random.Random(0)
    if not subgraph.edges:
        if len(subgraph.nodes) > 1:
            raise ValueError("subgraph with several nodes but no edges is disconnected")
        return [subgraph.root]

    multi_edges: list[tuple[str, str]] = []
    incident: dict[str, list[int]] = {n: [] for n in subgraph.nodes}
    for u, w in subgraph.edges:
        for _ in range(2):
            eid = len(multi_edges)
            multi_edges.append((u, w))
            incident[u].append(eid)
            incident[w].append(eid)
    used = [False] * len(multi_edges)

    def take_edge(node: str) -> Optional[int]:
        pool = incident[node]
        while pool:
            i = rng.randrange(len(pool))
            eid = pool[i]
            pool[i] = pool[-1]
            pool.pop()
            if not used[eid]:
                return eid
        return None

    stack = [subgraph.root]
    circuit: list[str] = []
    while stack:
        node = stack[-1]
        eid = take_edge(node)
        if eid is None:
            circuit.append(stack.pop())
            continue
        used[eid] = True
        u, w = multi_edges[eid]
        stack.append(w if node == u else u)
    circuit.reverse()

    if len(circuit) != len(multi_edges) + 1:
        raise ValueError("subgraph is not connected; no Euler circuit exists")
    return circuit


class WalkCorpus:
    """Walk sequences grouped by their start node."""

    def __init__(self, grouped: dict[str, list[list[str]]]):
        if not grouped:
            raise ValueError("corpus must not be empty")
        for node, seqs in grouped.items():
            for seq in seqs:
                if not seq:
                    raise ValueError(f"empty sequence for {node}")
        self.grouped = grouped

    def sequences(self) -> Iterator[list[str]]:
        for node in sorted(self.grouped):
            yield from self.grouped[node]

    def __len__(self) -> int:
        return sum(len(s) for s in self.grouped.values())

    def vocabulary(self) -> list[str]:
        vocab: set[str] = set()
        for seq in self.sequences():
            vocab.update(seq)
        return sorted(vocab)


def _walk_rng(seed: int, node: str, walk_index: int) -> random.Random:
    # String seeding is stable across processes (no hash randomization).
    return random.Random(f"{seed}:{node}:{walk_index}")


def build_corpus(g: InteractionGraph, config: EmbedConfig) -> WalkCorpus:
    """walks_per_node Euler walks per node, reproducible under the seed.

    Each walk draws from its own rng stream keyed by (seed, node, index),
    so corpus generation could be parallelized over start nodes without
    changing the output.
    """
    grouped: dict[str, list[list[str]]] = {}
    for node in g.nodes:
        walks: list[list[str]] = []
        for i in range(config.walks_per_node):
            rng = _walk_rng(config.seed, node, i)
            sub = sample_subgraph(g, node, config.l, rng)
            walks.append(euler_sequence(sub, rng))
        grouped[node] = walks
    return WalkCorpus(grouped)


def save_corpus(corpus: WalkCorpus, sink: TextIO) -> None:
    for seq in corpus.sequences():
        sink.write(" ".join(seq))
        sink.write("\n")


def load_corpus(source: TextIO) -> WalkCorpus:
    grouped: dict[str, list[list[str]]] = {}
    for line in source:
        seq = line.split()
        if not seq:
            continue
        grouped.setdefault(seq[0], []).append(seq)
    return WalkCorpus(grouped)


@dataclass
class EmbeddingTable:
    """addr -> d-dimensional vector; epoch_losses records the training curve."""

    d: int
    vectors: dict[str, np.ndarray]
    epoch_losses: tuple[float, ...] = ()
    _matrix: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    _order: Optional[list[str]] = field(default=None, repr=False, compare=False)

    def __contains__(self, addr: str) -> bool:
        return addr in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def dense(self) -> tuple[list[str], np.ndarray]:
        if self._matrix is None:
            self._order = sorted(self.vectors)
            self._matrix = np.stack([self.vectors[a] for a in self._order]) \
                if self._order else np.zeros((0, self.d), dtype=np.float32)
        return self._order, self._matrix


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -35.0, 35.0)))


def train(corpus: WalkCorpus, config: EmbedConfig) -> EmbeddingTable:
    """Skip-gram with negative sampling over the walk corpus.

    The window is config.h on each side; all context positions of one
    center are updated as a mini batch against shared negatives drawn from
    the unigram^0.75 distribution. The learning rate decays linearly to
    1e-4 over all updates. Single threaded and bit-reproducible under a
    fixed seed.
    """
    if len(corpus.grouped) == 0:
        raise ValueError("corpus must not be empty")
    vocab = corpus.vocabulary()
    index = {node: i for i, node in enumerate(vocab)}
    n = len(vocab)
    k = config.negative_samples
    rng = np.random.RandomState(config.seed)

    w_in = ((rng.rand(n, config.d) - 0.5) / config.d).astype(np.float32)
    w_out = np.zeros((n, config.d), dtype=np.float32)

    counts = np.zeros(n, dtype=np.float64)
    batches: list[tuple[int, np.ndarray]] = []  # (center, context ids)
    n_pairs = 0
    for seq in corpus.sequences():
        ids = [index[t] for t in seq]
        for i, center in enumerate(ids):
            counts[center] += 1
            window = ids[max(0, i - config.h):i] + ids[i + 1:i + config.h + 1]
            if window:
                batches.append((center, np.asarray(window, dtype=np.intp)))
                n_pairs += len(window)

    noise = counts ** 0.75
    total = noise.sum()
    noise_cdf = np.cumsum(noise / total) if total > 0 else np.ones(n) / n

    total_updates = max(1, n_pairs * config.epochs)
    min_lr = 1e-4
    losses: list[float] = []
    step = 0
    for _ in range(config.epochs):
        if k and n_pairs:
            epoch_negs = np.searchsorted(
                noise_cdf, rng.random_sample((n_pairs, k))
            ).astype(np.intp)
        epoch_loss = 0.0
        offset = 0
        for center, contexts in batches:
            m = len(contexts)
            lr = max(min_lr, config.learning_rate * (1.0 - step / total_updates))
            step += m
            if k:
                negs = epoch_negs[offset:offset + m]
                offset += m
                rows = np.concatenate([contexts, negs.ravel()])
            else:
                rows = contexts
            v = w_in[center]
            u = w_out[rows]
            probs = _sigmoid(u @ v)
            coef = probs.copy()
            coef[:m] -= 1.0
            if k:
                # A negative that hits its own positive target is skipped.
                dup = (negs == contexts[:, None]).ravel()
                coef[m:][dup] = 0.0
                epoch_loss -= float(
                    np.log(np.maximum(1.0 - probs[m:][~dup], 1e-10)).sum()
                )
            epoch_loss -= float(np.log(np.maximum(probs[:m], 1e-10)).sum())
            coef *= np.float32(lr)
            grad_v = coef @ u
            np.add.at(w_out, rows, -np.outer(coef, v))
            w_in[center] = v - grad_v
        losses.append(epoch_loss / max(1, n_pairs))

    vectors = {node: w_in[index[node]].copy() for node in vocab}
    return EmbeddingTable(d=config.d, vectors=vectors, epoch_losses=tuple(losses))


def neighbors(table: EmbeddingTable, v: str, k: int = 9) -> list[tuple[str, float, float]]:
    """k nearest addresses to v by Euclidean distance, v excluded.

    Returns (addr, distance, kappa) ascending by distance, ties broken by
    address order. kappa is the inverse distance, clamped to KAPPA_MAX for
    near-duplicate vectors.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if v not in table:
        raise NotFoundError(f"address not in embedding table: {v}")
    order, matrix = table.dense()
    query = table.vectors[v].astype(np.float64)
    dists = np.sqrt(((matrix.astype(np.float64) - query) ** 2).sum(axis=1))
    ranked = sorted(
        ((float(dists[i]), addr) for i, addr in enumerate(order) if addr != v),
    )
    out = []
    for dist, addr in ranked[:k]:
        kappa = KAPPA_MAX if dist < _MIN_DISTANCE else 1.0 / dist
        out.append((addr, dist, kappa))
    return out


def save_embeddings(table: EmbeddingTable, sink: BinaryIO) -> None:
    """Binary layout: magic, version, d, count, then (addr, float32 * d) rows."""
    sink.write(EMBEDDING_MAGIC)
    sink.write(struct.pack("<III", EMBEDDING_VERSION, table.d, len(table.vectors)))
    for addr in sorted(table.vectors):
        raw = addr.encode("ascii")
        if len(raw) != 42:
            raise ValueError(f"address must be 42 bytes, got {addr!r}")
        sink.write(raw)
        sink.write(table.vectors[addr].astype("<f4").tobytes())


def load_embeddings(source: BinaryIO) -> EmbeddingTable:
    magic = source.read(len(EMBEDDING_MAGIC))
    if magic != EMBEDDING_MAGIC:
        raise ValueError("not an embedding file")
    version, d, count = struct.unpack("<III", source.read(12))
    if version != EMBEDDING_VERSION:
        raise ValueError(f"unsupported embedding version: {version}")
    vectors: dict[str, np.ndarray] = {}
    for _ in range(count):
        addr = source.read(42).decode("ascii")
        data = source.read(4 * d)
        vectors[addr] = np.frombuffer(data, dtype="<f4").copy()
    return EmbeddingTable(d=d, vectors=vectors)


# -- reference objective, used only by tests on small graphs --


def cooccurrence_features(corpus: WalkCorpus, h: int,
                          vocab: Optional[list[str]] = None) -> dict[str, np.ndarray]:
    """Positional co-occurrence vector y(v) of dimension 2h|V| per node.

    Block layout: offsets 1..h, each with a before-block and an after-block
    of length |V|. Counts come from the node's own walk group.
    """
    vocab = vocab if vocab is not None else corpus.vocabulary()
    index = {node: i for i, node in enumerate(vocab)}
    n = len(vocab)
    # Nodes without a walk group of their own get the zero vector.
    features: dict[str, np.ndarray] = {
        node: np.zeros(2 * h * n, dtype=np.float64)
        for node in vocab if node not in corpus.grouped
    }
    for node, seqs in corpus.grouped.items():
        y = np.zeros(2 * h * n, dtype=np.float64)
        for seq in seqs:
            ids = [index[t] for t in seq]
            for i, token in enumerate(seq):
                if token != node:
                    continue
                for offset in range(1, h + 1):
                    if i - offset >= 0:
                        block = (offset - 1) * 2
                        y[block * n + ids[i - offset]] += 1
                    if i + offset < len(ids):
                        block = (offset - 1) * 2 + 1
                        y[block * n + ids[i + offset]] += 1
        features[node] = y
    return features


class ReferenceEmbedder:
    """Two-layer perceptron regressing one-hot nodes onto y(v).

    f1 maps the one-hot input to d dimensions, a ReLU applies, and f2 maps
    to the 2h|V| co-occurrence space. The embedding of a node is its f1 row.
    The output layer is quadratic in |V|, so this is capped at 500 nodes.
    """

    MAX_NODES = 500

    def __init__(self, corpus: WalkCorpus, config: EmbedConfig,
                 dist: str = "euclidean"):
        if dist not in ("euclidean", "cross_entropy"):
            raise ValueError(f"unknown dist: {dist}")
        self.vocab = corpus.vocabulary()
        if len(self.vocab) > self.MAX_NODES:
            raise ValueError("reference objective is limited to 500 nodes")
        self.config = config
        self.dist = dist
        self.features = cooccurrence_features(corpus, config.h, self.vocab)
        rng = np.random.RandomState(config.seed)
        n, d = len(self.vocab), config.d
        out_dim = 2 * config.h * n
        self.f1 = ((rng.rand(n, d) - 0.5) / d).astype(np.float64)
        self.f2 = ((rng.rand(d, out_dim) - 0.5) / out_dim).astype(np.float64)
        self.epoch_losses: list[float] = []

    def _forward(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        hidden = self.f1[i]
        activated = np.maximum(hidden, 0.0)
        return hidden, activated, activated @ self.f2

    def _loss_grad(self, out: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        if self.dist == "euclidean":
            delta = out - y
            return float(delta @ delta), 2.0 * delta
        total = y.sum()
        p = y / total if total > 0 else np.full_like(y, 1.0 / y.size)
        shifted = out - out.max()
        expd = np.exp(shifted)
        q = expd / expd.sum()
        loss = -float(p @ np.log(np.maximum(q, 1e-12)))
        return loss, q - p

    def fit(self) -> "ReferenceEmbedder":
        lr = self.config.learning_rate
        for _ in range(self.config.epochs):
            epoch_loss = 0.0
            for i, node in enumerate(self.vocab):
                hidden, activated, out = self._forward(i)
                loss, dout = self._loss_grad(out, self.features[node])
                epoch_loss += loss
                grad_f2 = np.outer(activated, dout)
                dhidden = (self.f2 @ dout) * (hidden > 0)
                self.f2 -= lr * grad_f2
                self.f1[i] -= lr * dhidden
            self.epoch_losses.append(epoch_loss / len(self.vocab))
        return self

    def table(self) -> EmbeddingTable:
        vectors = {
            node: self.f1[i].astype(np.float32) for i, node in enumerate(self.vocab)
        }
        return EmbeddingTable(d=self.config.d, vectors=vectors,
                              epoch_losses=tuple(self.epoch_losses))


def train_reference(corpus: WalkCorpus, config: EmbedConfig,
                    dist: str = "euclidean") -> EmbeddingTable:
    return ReferenceEmbedder(corpus, config, dist=dist).fit().table()
