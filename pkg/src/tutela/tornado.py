"""Mixer compromise heuristics and pool anonymity audits.

Each heuristic inspects the deposit/withdraw event history of the
fixed-denomination pools and emits Reveal records: evidence that a specific
set of deposits is linkable to a specific set of withdrawals, which removes
those deposits from the pool's effective anonymity set.

All heuristics are pure functions of the sealed store and event set;
repeated runs produce byte-identical output.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, TextIO

from .darcluster import Cluster, ClusterMember, ROLE_EOA
from .ledger import GWEI, LedgerStore, TornadoEvent, TornadoPool, TxRecord

log = logging.getLogger(__name__)

ADDRESS_MATCH = "address_match"
GAS_PRICE = "gas_price"
LINKED_ETH = "linked_eth"
MULTI_DENOM = "multi_denom"
TORN_MINING = "torn_mining"

HEURISTICS = (ADDRESS_MATCH, GAS_PRICE, LINKED_ETH, MULTI_DENOM, TORN_MINING)

REVEALS_HEADER = ["heuristic", "pool_id", "deposit_tx", "withdraw_tx", "confidence"]
AUDITS_HEADER = ["pool_id", "total_deposits", "compromised", "true_anonymity_set"]

BLOCKNATIVE_STYLE = "blocknative_style"
LEGACY = "legacy"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class TornadoConfig:
    """Per-heuristic confidence constants and matching knobs."""

    address_match_confidence: float = 1.0
    gas_price_confidence: float = 0.9
    multi_denom_confidence: float = 0.8
    torn_mining_confidence: float = 0.7
    linked_eth_min_interactions: int = 3
    multi_denom_window_seconds: int = 24 * 3600
    multi_denom_relaxed: bool = False


@dataclass(frozen=True)
class Reveal:
    """Evidence linking deposits to withdrawals produced by one heuristic."""

    heuristic: str
    deposit_txs: frozenset[str]
    withdraw_txs: frozenset[str]
    pool_ids: frozenset[str]
    confidence: float
    evidence: str

    def sort_key(self) -> tuple:
        return (
            self.heuristic,
            tuple(sorted(self.pool_ids)),
            tuple(sorted(self.deposit_txs)),
            tuple(sorted(self.withdraw_txs)),
        )


@dataclass(frozen=True)
class PoolAudit:
    """Deposit counts for one pool after removing compromised deposits."""

    pool_id: str
    total_deposits: int
    compromised_deposits: int
    true_anonymity_set: int


@dataclass(frozen=True)
class WalletFingerprint:
    tx_hash: str
    wallet_label: str


def _by_pool_actor(events: Iterable[TornadoEvent]) -> dict[tuple[str, str], dict[str, list[TornadoEvent]]]:
    grouped: dict[tuple[str, str], dict[str, list[TornadoEvent]]] = {}
    for ev in events:
        slot = grouped.setdefault((ev.pool_id, ev.actor), {"deposit": [], "withdraw": []})
        slot[ev.kind].append(ev)
    return grouped


def address_match(events: Sequence[TornadoEvent],
                  config: Optional[TornadoConfig] = None) -> list[Reveal]:
    """Same actor deposited and withdrew in the same pool.

    This is definitional rather than probabilistic (yield farmers and clumsy
    users), so the confidence is 1.0 by default. One reveal per (pool,
    actor) carrying all of that actor's deposits and withdrawals there.
    """
    config = config or TornadoConfig()
    reveals = []
    for (pool_id, actor), slot in sorted(_by_pool_actor(events).items()):
        if slot["deposit"] and slot["withdraw"]:
            reveals.append(Reveal(
                heuristic=ADDRESS_MATCH,
                deposit_txs=frozenset(ev.tx_hash for ev in slot["deposit"]),
                withdraw_txs=frozenset(ev.tx_hash for ev in slot["withdraw"]),
                pool_ids=frozenset({pool_id}),
                confidence=config.address_match_confidence,
                evidence=f"{actor} both deposited and withdrew in {pool_id}",
            ))
    return reveals


def gas_price_match(events: Sequence[TornadoEvent],
                    config: Optional[TornadoConfig] = None) -> list[Reveal]:
    """Deposit and later withdrawal sharing a hand-set gas price.

    The price must be unique to the pair within the pool's whole history and
    not a round number (an exact gwei multiple), and the withdrawal must not
    have gone through a relayer, since relayers set their own prices.
    """
    config = config or TornadoConfig()
    by_pool_price: dict[tuple[str, int], list[TornadoEvent]] = {}
    for ev in events:
        by_pool_price.setdefault((ev.pool_id, ev.gas_price), []).append(ev)

    reveals = []
    for (pool_id, price), group in sorted(by_pool_price.items()):
        if len(group) != 2 or price % GWEI == 0:
            continue
        first, second = sorted(group, key=lambda e: (e.block_number, e.tx_hash))
        if first.kind != "deposit" or second.kind != "withdraw":
            continue
        if second.block_number <= first.block_number or second.via_relayer:
            continue
        reveals.append(Reveal(
            heuristic=GAS_PRICE,
            deposit_txs=frozenset({first.tx_hash}),
            withdraw_txs=frozenset({second.tx_hash}),
            pool_ids=frozenset({pool_id}),
            confidence=config.gas_price_confidence,
            evidence=f"unique gas price {price} wei shared in {pool_id}",
        ))
    return reveals


def linked_eth(events: Sequence[TornadoEvent], store: LedgerStore,
               config: Optional[TornadoConfig] = None) -> list[Reveal]:
    """Depositor and withdrawer that transact with each other outside pools.

    Any pair (a, b) of unlabeled addresses where a deposited, b withdrew,
    and the two exchanged at least three direct transfers is linked across
    their shared pools. Confidence grows with the interaction count n as
    1 - 1/(n - 1), so three transfers give 0.5.
    """
    config = config or TornadoConfig()
    deposits_by_actor: dict[str, dict[str, list[TornadoEvent]]] = {}
    withdraws_by_actor: dict[str, dict[str, list[TornadoEvent]]] = {}
    for ev in events:
        target = deposits_by_actor if ev.kind == "deposit" else withdraws_by_actor
        target.setdefault(ev.actor, {}).setdefault(ev.pool_id, []).append(ev)

    reveals = []
    for (x, y), count in sorted(store.interaction_pairs()):
        if count < config.linked_eth_min_interactions:
            continue
        if store.is_known(x) or store.is_known(y):
            continue
        for depositor, withdrawer in ((x, y), (y, x)):
            pools_d = deposits_by_actor.get(depositor)
            pools_w = withdraws_by_actor.get(withdrawer)
            if not pools_d or not pools_w:
                continue
            shared = sorted(set(pools_d) & set(pools_w))
            if not shared:
                continue
            reveals.append(Reveal(
                heuristic=LINKED_ETH,
                deposit_txs=frozenset(
                    ev.tx_hash for p in shared for ev in pools_d[p]
                ),
                withdraw_txs=frozenset(
                    ev.tx_hash for p in shared for ev in pools_w[p]
                ),
                pool_ids=frozenset(shared),
                confidence=1.0 - 1.0 / (count - 1),
                evidence=(
                    f"{count} transfers between depositor {depositor} "
                    f"and withdrawer {withdrawer}"
                ),
            ))
    reveals.sort(key=Reveal.sort_key)
    return reveals


def _portfolio(events: Iterable[TornadoEvent]) -> tuple[tuple[str, int], ...]:
    counts: dict[str, int] = {}
    for ev in events:
        counts[ev.pool_id] = counts.get(ev.pool_id, 0) + 1
    return tuple(sorted(counts.items()))


def _covers(deposit_portfolio: tuple[tuple[str, int], ...],
            withdraw_portfolio: tuple[tuple[str, int], ...]) -> bool:
    have = dict(deposit_portfolio)
    return all(have.get(pool, 0) >= n for pool, n in withdraw_portfolio)


def multi_denom(events: Sequence[TornadoEvent],
                config: Optional[TornadoConfig] = None) -> list[Reveal]:
    """Identical multi-pool deposit and withdrawal portfolios.

    A withdrawal address qualifies when it withdrew at least three times
    across at least two pools, all inside one 24 hour window. A depositor
    matches when its whole deposit history forms the identical pool
    multiset, also inside a 24 hour window that ends before the first
    withdrawal. Only an unambiguous (single) match is emitted; relaxed mode
    additionally accepts deposit portfolios that merely cover the
    withdrawal portfolio componentwise.
    """
    config = config or TornadoConfig()
    window = config.multi_denom_window_seconds

    deposits_by_actor: dict[str, list[TornadoEvent]] = {}
    withdraws_by_actor: dict[str, list[TornadoEvent]] = {}
    for ev in events:
        target = deposits_by_actor if ev.kind == "deposit" else withdraws_by_actor
        target.setdefault(ev.actor, []).append(ev)

    candidates: list[tuple[str, tuple[tuple[str, int], ...], int]] = []
    strict_index: dict[tuple[tuple[str, int], ...], list[tuple[str, int]]] = {}
    for actor, deps in deposits_by_actor.items():
        stamps = [ev.timestamp for ev in deps]
        if max(stamps) - min(stamps) > window:
            continue
        portfolio = _portfolio(deps)
        entry = (actor, portfolio, max(stamps))
        candidates.append(entry)
        strict_index.setdefault(portfolio, []).append((actor, max(stamps)))

    reveals = []
    for actor in sorted(withdraws_by_actor):
        withdraws = withdraws_by_actor[actor]
        if len(withdraws) < 3:
            continue
        portfolio = _portfolio(withdraws)
        if len(portfolio) < 2:
            continue
        stamps = [ev.timestamp for ev in withdraws]
        first_withdraw = min(stamps)
        if max(stamps) - first_withdraw > window:
            continue

        if config.multi_denom_relaxed:
            matched = [
                d for d, p, last in candidates
                if last < first_withdraw and _covers(p, portfolio)
            ]
        else:
            matched = [
                d for d, last in strict_index.get(portfolio, ())
                if last < first_withdraw
            ]
        if len(matched) != 1:
            continue
        depositor = matched[0]
        deposit_events = deposits_by_actor[depositor]
        reveals.append(Reveal(
            heuristic=MULTI_DENOM,
            deposit_txs=frozenset(ev.tx_hash for ev in deposit_events),
            withdraw_txs=frozenset(ev.tx_hash for ev in withdraws),
            pool_ids=frozenset(ev.pool_id for ev in deposit_events)
            | frozenset(ev.pool_id for ev in withdraws),
            confidence=config.multi_denom_confidence,
            evidence=(
                f"portfolio {dict(portfolio)} matches depositor {depositor} "
                f"for withdrawer {actor}"
            ),
        ))
    return reveals


def torn_mining(events: Sequence[TornadoEvent],
                pools: Mapping[str, TornadoPool],
                config: Optional[TornadoConfig] = None) -> list[Reveal]:
    """Anonymity-point claims that expose a deposit's residence time.

    Point yields per block were public and fixed, so a claim divisible by
    the pool's rate pins the exact block distance between the withdrawal
    and its deposit. A reveal fires only when exactly one deposit in the
    pool sits at that distance. Pools without a configured rate are skipped
    with a warning.
    """
    config = config or TornadoConfig()
    deposits_at: dict[tuple[str, int], list[TornadoEvent]] = {}
    for ev in events:
        if ev.kind == "deposit":
            deposits_at.setdefault((ev.pool_id, ev.block_number), []).append(ev)

    warned: set[str] = set()
    reveals = []
    for ev in sorted(events, key=lambda e: (e.pool_id, e.block_number, e.tx_hash)):
        if ev.kind != "withdraw" or ev.ap_claimed is None:
            continue
        pool = pools.get(ev.pool_id)
        if pool is None or pool.ap_rate is None:
            if ev.pool_id not in warned:
                warned.add(ev.pool_id)
                log.warning("pool %s has no ap_rate; skipping mining claims", ev.pool_id)
            continue
        blocks = Fraction(ev.ap_claimed) / pool.ap_rate
        if blocks.denominator != 1 or blocks < 1:
            continue
        target = ev.block_number - int(blocks)
        if target < 0:
            continue
        matches = deposits_at.get((ev.pool_id, target), [])
        if len(matches) != 1:
            continue
        reveals.append(Reveal(
            heuristic=TORN_MINING,
            deposit_txs=frozenset({matches[0].tx_hash}),
            withdraw_txs=frozenset({ev.tx_hash}),
            pool_ids=frozenset({ev.pool_id}),
            confidence=config.torn_mining_confidence,
            evidence=(
                f"claim of {ev.ap_claimed} points implies {int(blocks)} blocks "
                f"in {ev.pool_id}"
            ),
        ))
    return reveals


def wallet_fingerprint(tx: TxRecord) -> WalletFingerprint:
    """Classify the wallet software style from how the fee fields were set.

    Blocknative-derived wallets compute max_fee = base_fee + 2 *
    max_priority_fee exactly; pre-fee-market transactions carry no max_fee
    at all.
    """
    if tx.max_fee is None:
        return WalletFingerprint(tx.tx_hash, LEGACY)
    if (
        tx.max_priority_fee is not None
        and tx.base_fee is not None
        and tx.max_fee == tx.base_fee + 2 * tx.max_priority_fee
    ):
        return WalletFingerprint(tx.tx_hash, BLOCKNATIVE_STYLE)
    return WalletFingerprint(tx.tx_hash, UNKNOWN)


def run_all(store: LedgerStore,
            config: Optional[TornadoConfig] = None) -> list[Reveal]:
    """All five heuristics over the store's events, merged deterministically."""
    config = config or TornadoConfig()
    events = store.events
    reveals = (
        address_match(events, config)
        + gas_price_match(events, config)
        + linked_eth(events, store, config)
        + multi_denom(events, config)
        + torn_mining(events, store.pools, config)
    )
    reveals.sort(key=Reveal.sort_key)
    return reveals


def lift_to_addresses(reveals: Iterable[Reveal], store: LedgerStore) -> list[Cluster]:
    """Turn transaction-level reveals into address-level clusters.

    Address matching is excluded (it never links two distinct addresses).
    Each remaining reveal contributes the deduplicated actor set of its
    transactions minus registry addresses; clusters smaller than two are
    dropped. Members carry the reveal's confidence.
    """
    clusters: list[Cluster] = []
    lifted: list[tuple[tuple[str, ...], float, str]] = []
    for reveal in reveals:
        if reveal.heuristic == ADDRESS_MATCH:
            continue
        actors = {
            store.event(tx).actor
            for tx in reveal.deposit_txs | reveal.withdraw_txs
        }
        actors -= set(store.known)
        if len(actors) < 2:
            continue
        lifted.append((tuple(sorted(actors)), reveal.confidence, reveal.heuristic))

    for addrs, conf, heuristic in sorted(set(lifted)):
        clusters.append(Cluster(
            cluster_id=len(clusters),
            members=tuple(
                ClusterMember(addr, ROLE_EOA, conf, heuristic) for addr in addrs
            ),
            kappa=conf,
        ))
    return clusters


def compromised_deposits_by_pool(reveals: Iterable[Reveal],
                                 store: LedgerStore) -> dict[str, set[str]]:
    """Union of revealed deposit txs per pool (overlaps counted once)."""
    out: dict[str, set[str]] = {pool_id: set() for pool_id in store.pools}
    for reveal in reveals:
        for tx in reveal.deposit_txs:
            ev = store.event(tx)
            if ev.kind == "deposit":
                out[ev.pool_id].add(tx)
    return out


def audit_pool(pool_id: str, reveals: Iterable[Reveal],
               store: LedgerStore) -> PoolAudit:
    """True anonymity set: total deposits minus the union of revealed ones."""
    total = len(store.pool_events(pool_id, "deposit"))
    compromised = len(compromised_deposits_by_pool(reveals, store).get(pool_id, set()))
    return PoolAudit(
        pool_id=pool_id,
        total_deposits=total,
        compromised_deposits=compromised,
        true_anonymity_set=total - compromised,
    )


def audit_all(reveals: Iterable[Reveal], store: LedgerStore) -> list[PoolAudit]:
    reveals = list(reveals)
    by_pool = compromised_deposits_by_pool(reveals, store)
    audits = []
    for pool_id in sorted(store.pools):
        total = len(store.pool_events(pool_id, "deposit"))
        compromised = len(by_pool[pool_id])
        audits.append(PoolAudit(pool_id, total, compromised, total - compromised))
    return audits


# -- persistence --


def export_reveals(reveals: Iterable[Reveal], store: LedgerStore,
                   sink: TextIO) -> None:
    """One row per linked same-pool (deposit, withdraw) pair, sorted."""
    rows = []
    for reveal in reveals:
        for pool_id in sorted(reveal.pool_ids):
            deps = sorted(
                tx for tx in reveal.deposit_txs if store.event(tx).pool_id == pool_id
            )
            wds = sorted(
                tx for tx in reveal.withdraw_txs if store.event(tx).pool_id == pool_id
            )
            for d in deps:
                for w in wds:
                    rows.append((reveal.heuristic, pool_id, d, w, reveal.confidence))
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(REVEALS_HEADER)
    for row in sorted(rows):
        writer.writerow([row[0], row[1], row[2], row[3], repr(row[4])])


def save_reveals_json(reveals: Iterable[Reveal], sink: TextIO) -> None:
    payload = [
        {
            "heuristic": r.heuristic,
            "deposit_txs": sorted(r.deposit_txs),
            "withdraw_txs": sorted(r.withdraw_txs),
            "pool_ids": sorted(r.pool_ids),
            "confidence": r.confidence,
            "evidence": r.evidence,
        }
        for r in sorted(reveals, key=Reveal.sort_key)
    ]
    json.dump(payload, sink, indent=1)
    sink.write("\n")


def load_reveals_json(source: TextIO) -> list[Reveal]:
    return [
        Reveal(
            heuristic=item["heuristic"],
            deposit_txs=frozenset(item["deposit_txs"]),
            withdraw_txs=frozenset(item["withdraw_txs"]),
            pool_ids=frozenset(item["pool_ids"]),
            confidence=item["confidence"],
            evidence=item["evidence"],
        )
        for item in json.load(source)
    ]


def export_audits(audits: Iterable[PoolAudit], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(AUDITS_HEADER)
    for audit in sorted(audits, key=lambda a: a.pool_id):
        writer.writerow([
            audit.pool_id, audit.total_deposits,
            audit.compromised_deposits, audit.true_anonymity_set,
        ])
