"""Deposit-address-reuse clustering.

Exchanges create per-customer deposit addresses that receive funds from a
user wallet and quickly forward them to the exchange's main address. Finding
(EOA, deposit, exchange) transfer tuples under an amount threshold alpha and
a block-distance threshold tau therefore groups wallets behind one customer.
Tuples become edges of an undirected graph over EOA and deposit nodes, and
weakly connected components of that graph are the clusters.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, TextIO

import csv

from .errors import ConfigurationError
from .ledger import LedgerStore, TxRecord, WEI_PER_ETH

ROLE_EOA = "eoa"
ROLE_DEPOSIT = "deposit"
ROLE_EXCHANGE = "exchange-adjacent"

HEURISTIC_DAR = "dar"

CLUSTERS_HEADER = ["cluster_id", "addr", "role", "kappa", "heuristic"]


@dataclass(frozen=True)
class DarConfig:
    """Detection thresholds. alpha is in ETH, tau in blocks."""

    alpha: float = 0.01
    tau: int = 3200

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @property
    def alpha_wei(self) -> int:
        # Exact conversion once; all amount comparisons stay in integer wei.
        return int(Fraction(str(self.alpha)) * WEI_PER_ETH)


@dataclass(frozen=True)
class DepositTuple:
    """One matched (EOA -> deposit -> exchange) forwarding pattern.

    a_r_wei/t_r belong to the receiving transfer, a_f_wei/t_f to the
    forwarding transfer. t_f >= t_r always holds.
    """

    eoa: str
    deposit: str
    exchange: str
    a_r_wei: int
    a_f_wei: int
    t_r: int
    t_f: int
    kappa: float

    @property
    def a_r(self) -> float:
        return self.a_r_wei / WEI_PER_ETH

    @property
    def a_f(self) -> float:
        return self.a_f_wei / WEI_PER_ETH


@dataclass(frozen=True)
class ClusterMember:
    addr: str
    role: str
    kappa: float
    heuristic: str


@dataclass(frozen=True)
class Cluster:
    """Addresses believed co-owned; kappa is the cluster-level confidence."""

    cluster_id: int
    members: tuple[ClusterMember, ...]
    kappa: float

    def addresses(self) -> set[str]:
        return {m.addr for m in self.members}

    def core_addresses(self) -> set[str]:
        """EOA and deposit members; excludes exchange-adjacent ones."""
        return {m.addr for m in self.members if m.role != ROLE_EXCHANGE}


def confidence(a_r_wei: int, a_f_wei: int, t_r: int, t_f: int, config: DarConfig) -> float:
    """Per-tuple confidence: 1 minus the mean of the two normalized deltas."""
    amount_diff = abs(a_f_wei - a_r_wei)
    block_diff = t_f - t_r
    if block_diff < 0:
        raise ValueError("forwarding precedes receipt")
    if amount_diff > config.alpha_wei or block_diff > config.tau:
        raise ValueError("tuple violates alpha/tau thresholds")
    return 1.0 - (0.5 * amount_diff / config.alpha_wei + 0.5 * block_diff / config.tau)


def tuple_confidence(t: DepositTuple, config: DarConfig) -> float:
    return confidence(t.a_r_wei, t.a_f_wei, t.t_r, t.t_f, config)


def detect_tuples(store: LedgerStore, config: Optional[DarConfig] = None) -> list[DepositTuple]:
    """Search the store for deposit-reuse tuples.

    Candidate deposit addresses are non-registry addresses with at least one
    outgoing ETH transfer to an exchange main. Each receiving transfer is
    matched to the earliest forwarding transfer at or after it within tau;
    the pair becomes a tuple only if it also passes the amount threshold.
    A receiving transfer supports at most one tuple, and selecting before
    filtering keeps detection monotone in both thresholds.
    """
    config = config or DarConfig()
    if not store.known:
        raise ConfigurationError("known-address registry required for tuple detection")
    cex_mains = store.cex_main_addresses()

    candidates: set[str] = set()
    for cex in cex_mains:
        for tx in store.transactions_to(cex):
            if tx.is_self_transfer or tx.token != "ETH":
                continue
            if not store.is_known(tx.from_addr):
                candidates.add(tx.from_addr)

    tuples: list[DepositTuple] = []
    for deposit in sorted(candidates):
        forwards = sorted(
            (
                tx for tx in store.transactions_from(deposit)
                if tx.to_addr in cex_mains and tx.token == "ETH" and not tx.is_self_transfer
            ),
            key=lambda tx: (tx.block_number, tx.tx_hash),
        )
        if not forwards:
            continue
        receives = sorted(
            (
                tx for tx in store.transactions_to(deposit)
                if tx.token == "ETH" and not tx.is_self_transfer
            ),
            key=lambda tx: (tx.block_number, tx.tx_hash),
        )
        for rx in receives:
            match = _earliest_match(rx, forwards, config)
            if match is None:
                continue
            tuples.append(
                DepositTuple(
                    eoa=rx.from_addr,
                    deposit=deposit,
                    exchange=match.to_addr,
                    a_r_wei=rx.value,
                    a_f_wei=match.value,
                    t_r=rx.block_number,
                    t_f=match.block_number,
                    kappa=confidence(rx.value, match.value, rx.block_number,
                                     match.block_number, config),
                )
            )
    tuples.sort(key=lambda t: (t.deposit, t.eoa, t.t_r, t.t_f, t.exchange))
    return tuples


def _earliest_match(rx: TxRecord, forwards: Sequence[TxRecord],
                    config: DarConfig) -> Optional[TxRecord]:
    for fw in forwards:
        if fw.block_number < rx.block_number:
            continue
        if fw.block_number - rx.block_number > config.tau:
            return None
        if abs(fw.value - rx.value) <= config.alpha_wei:
            return fw
        return None
    return None


class UnionFind:
    """Path-compressing union-find over arbitrary hashable keys."""

    def __init__(self) -> None:
        self._parent: dict = {}
        self._rank: dict = {}

    def add(self, x) -> None:
        if x not in self._parent:
            self._parent[x] = x
            self._rank[x] = 0

    def find(self, x):
        root = x
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[x] != root:
            self._parent[x], x = root, self._parent[x]
        return root

    def union(self, a, b) -> None:
        self.add(a)
        self.add(b)
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._rank[ra] < self._rank[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        if self._rank[ra] == self._rank[rb]:
            self._rank[ra] += 1

    def groups(self) -> list[set]:
        out: dict = {}
        for x in self._parent:
            out.setdefault(self.find(x), set()).add(x)
        return list(out.values())


def build_clusters(tuples: Iterable[DepositTuple]) -> list[Cluster]:
    """Connected components over EOA and deposit nodes, one edge per tuple.

    Deposit members carry their best tuple confidence; EOA members and the
    cluster itself carry the mean over the cluster's deposit confidences.
    Exchange mains the cluster forwarded to are attached as exchange-adjacent
    members and do not participate in the component structure.
    """
    uf = UnionFind()
    deposit_kappa: dict[str, float] = {}
    deposit_addrs: set[str] = set()
    tuples_by_deposit: dict[str, list[DepositTuple]] = {}
    for t in tuples:
        uf.union(t.eoa, t.deposit)
        deposit_addrs.add(t.deposit)
        prev = deposit_kappa.get(t.deposit)
        deposit_kappa[t.deposit] = t.kappa if prev is None else max(prev, t.kappa)
        tuples_by_deposit.setdefault(t.deposit, []).append(t)

    clusters: list[Cluster] = []
    for component in sorted(uf.groups(), key=min):
        deposits_here = sorted(a for a in component if a in deposit_addrs)
        cluster_kappa = sum(deposit_kappa[d] for d in deposits_here) / len(deposits_here)

        members: list[ClusterMember] = []
        exchange_kappa: dict[str, float] = {}
        for addr in sorted(component):
            if addr in deposit_addrs:
                members.append(ClusterMember(addr, ROLE_DEPOSIT,
                                             deposit_kappa[addr], HEURISTIC_DAR))
                for t in tuples_by_deposit[addr]:
                    prev = exchange_kappa.get(t.exchange)
                    exchange_kappa[t.exchange] = (
                        t.kappa if prev is None else max(prev, t.kappa)
                    )
            else:
                members.append(ClusterMember(addr, ROLE_EOA, cluster_kappa, HEURISTIC_DAR))
        for exchange in sorted(exchange_kappa):
            members.append(ClusterMember(exchange, ROLE_EXCHANGE,
                                         exchange_kappa[exchange], HEURISTIC_DAR))

        clusters.append(Cluster(
            cluster_id=len(clusters),
            members=tuple(sorted(members, key=lambda m: m.addr)),
            kappa=cluster_kappa,
        ))
    return clusters


def export_clusters(clusters: Iterable[Cluster], sink: TextIO) -> None:
    """Write cluster membership rows ordered by (cluster_id, addr)."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(CLUSTERS_HEADER)
    for cluster in sorted(clusters, key=lambda c: c.cluster_id):
        for m in sorted(cluster.members, key=lambda m: m.addr):
            writer.writerow([cluster.cluster_id, m.addr, m.role, repr(m.kappa), m.heuristic])


def load_clusters(source: TextIO) -> list[Cluster]:
    """Read a cluster export back into Cluster objects."""
    rows = csv.reader(source)
    header = next(rows, None)
    if header != CLUSTERS_HEADER:
        raise ValueError(f"unexpected cluster header: {header!r}")
    by_id: dict[int, list[ClusterMember]] = {}
    for row in rows:
        cid, addr, role, kappa, heuristic = row
        by_id.setdefault(int(cid), []).append(
            ClusterMember(addr, role, float(kappa), heuristic)
        )
    clusters = []
    for cid in sorted(by_id):
        members = tuple(sorted(by_id[cid], key=lambda m: m.addr))
        deposit_kappas = [m.kappa for m in members if m.role == ROLE_DEPOSIT]
        kappa = (sum(deposit_kappas) / len(deposit_kappas)) if deposit_kappas \
            else max(m.kappa for m in members)
        clusters.append(Cluster(cluster_id=cid, members=members, kappa=kappa))
    return clusters
