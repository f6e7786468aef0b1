"""Synthetic transaction/event datasets with known entity ground truth.

The generator plants deposit-reuse patterns, co-owned address groups, and
one instance of every mixer compromise type, then surrounds them with noise
that is constructed not to trigger any heuristic: noise gas prices are
round gwei multiples, noise pool users touch a single pool fewer than three
times, noise withdrawal addresses are fresh and transact with nobody, and
nothing in the noise claims mining points. Output uses the exact ledger
file formats so the whole pipeline can be exercised end to end, and every
run is byte-reproducible under its seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import csv

from .darcluster import Cluster, DarConfig
from .errors import ConfigurationError
from .ledger import (
    EVENTS_HEADER, GWEI, KNOWN_HEADER, KnownAddress, POOLS_HEADER,
    TRANSACTIONS_HEADER, TornadoEvent, TxRecord, WEI_PER_ETH,
)
from .tornado import (
    ADDRESS_MATCH, GAS_PRICE, LINKED_ETH, MULTI_DENOM, Reveal, TORN_MINING,
)

GENESIS_TIMESTAMP = 1_600_000_000
BLOCK_SECONDS = 12

# (pool_id, currency, denomination, points per block)
DEFAULT_POOL_SPECS: list[tuple[str, str, str, int]] = [
    ("0.1 ETH", "ETH", "0.1", 4),
    ("1 ETH", "ETH", "1", 20),
    ("10 ETH", "ETH", "10", 50),
    ("100 ETH", "ETH", "100", 400),
    ("100 DAI", "DAI", "100", 2),
    ("1000 DAI", "DAI", "1000", 10),
    ("10000 DAI", "DAI", "10000", 40),
    ("100000 DAI", "DAI", "100000", 250),
    ("5000 cDAI", "cDAI", "5000", 2),
    ("50000 cDAI", "cDAI", "50000", 10),
    ("500000 cDAI", "cDAI", "500000", 40),
    ("5000000 cDAI", "cDAI", "5000000", 250),
    ("0.1 WBTC", "WBTC", "0.1", 15),
    ("1 WBTC", "WBTC", "1", 120),
    ("10 WBTC", "WBTC", "10", 1000),
]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_entities: int = 100
    addrs_per_entity: tuple[int, int] = (1, 4)
    n_cex: int = 5
    tornado_usage_rate: float = 0.2
    noise_tx_count: int = 5000
    noise_event_count: int = 0
    address_match_count: int = 0
    gas_price_count: int = 0
    linked_eth_count: int = 0
    multi_denom_count: int = 0
    torn_mining_count: int = 0
    registry_decoys: int = 3

    def __post_init__(self) -> None:
        counts = (
            self.n_entities, self.n_cex, self.noise_tx_count,
            self.noise_event_count, self.address_match_count,
            self.gas_price_count, self.linked_eth_count,
            self.multi_denom_count, self.torn_mining_count,
            self.registry_decoys,
        )
        if any(c < 0 for c in counts):
            raise ConfigurationError("counts must be non-negative")
        if not 0.0 <= self.tornado_usage_rate <= 1.0:
            raise ConfigurationError("tornado_usage_rate must be in [0, 1]")
        lo, hi = self.addrs_per_entity
        if lo < 1 or hi < lo:
            raise ConfigurationError("addrs_per_entity must satisfy 1 <= min <= max")
        if self.n_entities > 0 and self.n_cex < 1:
            raise ConfigurationError("entities need at least one exchange main")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        data = dict(data)
        compromises = data.pop("compromises", {})
        kwargs = {}
        for key in ("seed", "n_entities", "n_cex", "tornado_usage_rate",
                    "noise_tx_count", "noise_event_count", "registry_decoys"):
            if key in data:
                kwargs[key] = data.pop(key)
        if "addrs_per_entity" in data:
            lo, hi = data.pop("addrs_per_entity")
            kwargs["addrs_per_entity"] = (int(lo), int(hi))
        for kind in (ADDRESS_MATCH, GAS_PRICE, LINKED_ETH, MULTI_DENOM, TORN_MINING):
            if kind in compromises:
                kwargs[f"{kind}_count"] = compromises[kind]
        if data:
            raise ConfigurationError(f"unknown config keys: {sorted(data)}")
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path: Union[str, Path]) -> "SynthConfig":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


@dataclass(frozen=True)
class PlantedReveal:
    kind: str
    deposit_txs: frozenset[str]
    withdraw_txs: frozenset[str]


@dataclass
class GroundTruth:
    """True ownership and planted compromises behind a generated dataset."""

    entities: dict[str, tuple[str, ...]] = field(default_factory=dict)
    planted_reveals: list[PlantedReveal] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not self.entities and not self.planted_reveals


@dataclass
class SynthDataset:
    transactions: list[TxRecord]
    events: list[TornadoEvent]
    known: list[KnownAddress]
    pools: list[tuple[str, str, str, str, str]]
    truth: GroundTruth


class _Generator:
    def __init__(self, config: SynthConfig):
        self.config = config
        self.rng = random.Random(config.seed)
        self._addr_n = 0
        self._tx_n = 0
        self._block = 0
        self.transactions: list[TxRecord] = []
        self.events: list[TornadoEvent] = []
        self.known: list[KnownAddress] = []
        self.truth = GroundTruth()
        self.pool_ids = [spec[0] for spec in DEFAULT_POOL_SPECS]
        self._pool_rates = {spec[0]: spec[3] for spec in DEFAULT_POOL_SPECS}
        self._used_prices: dict[str, set[int]] = {}
        self._used_portfolios: set[tuple[tuple[str, int], ...]] = set()
        self.cex_mains: list[str] = []
        self._pool_contracts: list[str] = []
        self._alpha_wei = DarConfig().alpha_wei
        self._tau = DarConfig().tau

    # -- identity and placement helpers --

    def new_addr(self) -> str:
        self._addr_n += 1
        return f"0x{self._addr_n:040x}"

    def new_tx_hash(self) -> str:
        self._tx_n += 1
        return f"0x{self._tx_n:064x}"

    def next_block(self) -> int:
        self._block += self.rng.randint(1, 2)
        return self._block

    def round_gas(self) -> int:
        return self.rng.randint(10, 300) * GWEI

    def unique_odd_price(self, pool_id: str) -> int:
        used = self._used_prices.setdefault(pool_id, set())
        while True:
            price = self.rng.randint(10, 300) * GWEI + self.rng.randint(1, GWEI - 1)
            if price not in used:
                used.add(price)
                return price

    def emit_tx(self, from_addr: str, to_addr: str, value: int,
                block: Optional[int] = None, gas_price: Optional[int] = None,
                fees: tuple[Optional[int], Optional[int], Optional[int]] = (None, None, None),
                ) -> TxRecord:
        if block is None:
            block = self.next_block()
        tx = TxRecord(
            tx_hash=self.new_tx_hash(),
            block_number=block,
            timestamp=GENESIS_TIMESTAMP + block * BLOCK_SECONDS,
            from_addr=from_addr,
            to_addr=to_addr,
            value=value,
            token="ETH",
            gas_price=gas_price if gas_price is not None else self.round_gas(),
            max_fee=fees[0],
            max_priority_fee=fees[1],
            base_fee=fees[2],
        )
        self.transactions.append(tx)
        return tx

    def emit_event(self, kind: str, pool_id: str, actor: str,
                   block: Optional[int] = None, gas_price: Optional[int] = None,
                   via_relayer: bool = False,
                   ap_claimed: Optional[int] = None) -> TornadoEvent:
        if block is None:
            block = self.next_block()
        ev = TornadoEvent(
            kind=kind,
            pool_id=pool_id,
            actor=actor,
            tx_hash=self.new_tx_hash(),
            block_number=block,
            timestamp=GENESIS_TIMESTAMP + block * BLOCK_SECONDS,
            gas_price=gas_price if gas_price is not None else self.round_gas(),
            via_relayer=via_relayer,
            ap_claimed=ap_claimed,
        )
        self.events.append(ev)
        return ev

    # -- generation passes --

    def run(self) -> SynthDataset:
        self._make_registries()
        for i in range(self.config.n_entities):
            self._plant_entity(i)
        self._plant_decoys()
        self._plant_address_match()
        self._plant_gas_price()
        self._plant_linked_eth()
        self._plant_multi_denom()
        self._plant_torn_mining()
        self._noise_transactions()
        self._noise_events()
        pools = [
            (pool_id, contract, currency, denom, str(rate))
            for (pool_id, currency, denom, rate), contract in
            zip(DEFAULT_POOL_SPECS, self._pool_contracts)
        ]
        return SynthDataset(
            transactions=sorted(self.transactions,
                                key=lambda t: (t.block_number, t.tx_hash)),
            events=sorted(self.events, key=lambda e: (e.block_number, e.tx_hash)),
            known=self.known,
            pools=pools,
            truth=self.truth,
        )

    def _make_registries(self) -> None:
        for i in range(self.config.n_cex):
            addr = self.new_addr()
            self.cex_mains.append(addr)
            self.known.append(KnownAddress(addr, f"exchange-{i} main", "cex_main"))
        self._pool_contracts = []
        for pool_id, _, _, _ in DEFAULT_POOL_SPECS:
            addr = self.new_addr()
            self._pool_contracts.append(addr)
            self.known.append(KnownAddress(addr, f"mixer pool {pool_id}", "tornado_contract"))
        addr = self.new_addr()
        self.known.append(KnownAddress(addr, "relayer-0", "relayer"))

    def _plant_entity(self, index: int) -> None:
        """One entity: EOAs feeding a shared exchange deposit address."""
        lo, hi = self.config.addrs_per_entity
        eoas = [self.new_addr() for _ in range(self.rng.randint(lo, hi))]
        deposit = self.new_addr()
        cex = self.rng.choice(self.cex_mains)
        for eoa in eoas:
            value = self.rng.randint(WEI_PER_ETH // 10, 10 * WEI_PER_ETH)
            fee = self.rng.randint(0, self._alpha_wei // 2)
            received = self.emit_tx(eoa, deposit, value)
            gap = self.rng.randint(1, self._tau // 2)
            forward_block = received.block_number + gap
            self.emit_tx(deposit, cex, value - fee, block=forward_block)
            self._block = max(self._block, forward_block)
        for a, b in zip(eoas, eoas[1:]):
            self.emit_tx(a, b, self.rng.randint(10**15, 10**17))
        self.truth.entities[f"entity-{index:06d}"] = tuple(sorted(eoas + [deposit]))

        if self.rng.random() < self.config.tornado_usage_rate:
            self._benign_pool_usage(self.rng.choice(eoas))

    def _benign_pool_usage(self, actor: str) -> None:
        # Single pool, at most two deposits, round prices, relayed withdrawals
        # to fresh addresses: invisible to every heuristic by construction.
        pool = self.rng.choice(self.pool_ids)
        for _ in range(self.rng.randint(1, 2)):
            self.emit_event("deposit", pool, actor)
            self.emit_event("withdraw", pool, self.new_addr(), via_relayer=True)

    def _plant_decoys(self) -> None:
        """Registry-labeled forwarders that look like deposit addresses."""
        if self.config.n_entities == 0 or not self.cex_mains:
            return
        categories = ["dex", "miner", "defi"]
        for i in range(self.config.registry_decoys):
            decoy = self.new_addr()
            self.known.append(
                KnownAddress(decoy, f"decoy-{i}", categories[i % len(categories)])
            )
            sender = self.new_addr()
            value = self.rng.randint(WEI_PER_ETH // 10, 10 * WEI_PER_ETH)
            received = self.emit_tx(sender, decoy, value)
            forward_block = received.block_number + self.rng.randint(1, self._tau // 2)
            self.emit_tx(decoy, self.rng.choice(self.cex_mains),
                         value - self.rng.randint(0, self._alpha_wei // 2),
                         block=forward_block)
            self._block = max(self._block, forward_block)

    def _plant_address_match(self) -> None:
        for _ in range(self.config.address_match_count):
            actor = self.new_addr()
            pool = self.rng.choice(self.pool_ids)
            d = self.emit_event("deposit", pool, actor)
            w = self.emit_event("withdraw", pool, actor)
            self.truth.planted_reveals.append(PlantedReveal(
                ADDRESS_MATCH, frozenset({d.tx_hash}), frozenset({w.tx_hash})))

    def _plant_gas_price(self) -> None:
        for _ in range(self.config.gas_price_count):
            pool = self.rng.choice(self.pool_ids)
            price = self.unique_odd_price(pool)
            d = self.emit_event("deposit", pool, self.new_addr(), gas_price=price)
            w = self.emit_event("withdraw", pool, self.new_addr(), gas_price=price,
                                via_relayer=False)
            self.truth.planted_reveals.append(PlantedReveal(
                GAS_PRICE, frozenset({d.tx_hash}), frozenset({w.tx_hash})))

    def _plant_linked_eth(self) -> None:
        for _ in range(self.config.linked_eth_count):
            depositor, withdrawer = self.new_addr(), self.new_addr()
            pool = self.rng.choice(self.pool_ids)
            for _ in range(self.rng.randint(3, 5)):
                if self.rng.random() < 0.5:
                    self.emit_tx(depositor, withdrawer, self.rng.randint(10**15, 10**17))
                else:
                    self.emit_tx(withdrawer, depositor, self.rng.randint(10**15, 10**17))
            d = self.emit_event("deposit", pool, depositor)
            w = self.emit_event("withdraw", pool, withdrawer, via_relayer=True)
            self.truth.planted_reveals.append(PlantedReveal(
                LINKED_ETH, frozenset({d.tx_hash}), frozenset({w.tx_hash})))

    def _sample_portfolio(self) -> tuple[tuple[str, int], ...]:
        while True:
            pools = self.rng.sample(self.pool_ids, self.rng.randint(2, 3))
            counts = [self.rng.randint(1, 3) for _ in pools]
            if sum(counts) < 3:
                continue
            portfolio = tuple(sorted(zip(pools, counts)))
            if portfolio not in self._used_portfolios:
                self._used_portfolios.add(portfolio)
                return portfolio

    def _plant_multi_denom(self) -> None:
        for _ in range(self.config.multi_denom_count):
            portfolio = self._sample_portfolio()
            depositor, withdrawer = self.new_addr(), self.new_addr()
            deposit_txs = []
            for pool, count in portfolio:
                for _ in range(count):
                    deposit_txs.append(self.emit_event("deposit", pool, depositor).tx_hash)
            withdraw_txs = []
            for pool, count in portfolio:
                for _ in range(count):
                    withdraw_txs.append(self.emit_event(
                        "withdraw", pool, withdrawer, via_relayer=True).tx_hash)
            self.truth.planted_reveals.append(PlantedReveal(
                MULTI_DENOM, frozenset(deposit_txs), frozenset(withdraw_txs)))

    def _plant_torn_mining(self) -> None:
        for _ in range(self.config.torn_mining_count):
            pool = self.rng.choice(self.pool_ids)
            rate = self._pool_rates[pool]
            d = self.emit_event("deposit", pool, self.new_addr())
            delta = self.rng.randint(100, 4000)
            claim = int(Fraction(delta) * rate)
            w = self.emit_event(
                "withdraw", pool, self.new_addr(),
                block=d.block_number + delta, ap_claimed=claim,
            )
            self.truth.planted_reveals.append(PlantedReveal(
                TORN_MINING, frozenset({d.tx_hash}), frozenset({w.tx_hash})))

    def _noise_transactions(self) -> None:
        count = self.config.noise_tx_count
        if count == 0:
            return
        # A reusable address pool gives the interaction graph real structure;
        # none of these addresses ever touches a mixer pool.
        addrs = [self.new_addr() for _ in range(max(2, count // 20))]
        for _ in range(count):
            a = self.rng.choice(addrs)
            b = self.rng.choice(addrs)
            while b == a:
                b = self.rng.choice(addrs)
            fees: tuple[Optional[int], Optional[int], Optional[int]] = (None, None, None)
            if self.rng.random() < 0.3:
                base = self.rng.randint(20, 150) * GWEI
                priority = self.rng.randint(1, 5) * GWEI
                if self.rng.random() < 0.5:
                    fees = (base + 2 * priority, priority, base)
                else:
                    fees = (base + 3 * priority, priority, base)
            self.emit_tx(a, b, self.rng.randint(10**15, 10 * WEI_PER_ETH), fees=fees)

    def _noise_events(self) -> None:
        for _ in range(self.config.noise_event_count):
            pool = self.rng.choice(self.pool_ids)
            for _ in range(self.rng.randint(1, 2)):
                self.emit_event("deposit", pool, self.new_addr())
                self.emit_event("withdraw", pool, self.new_addr(), via_relayer=True)


def generate(config: SynthConfig) -> SynthDataset:
    """Build a dataset deterministically from the config seed."""
    return _Generator(config).run()


def write_dataset(dataset: SynthDataset, out_dir: Union[str, Path]) -> None:
    """Write the four ledger-format files plus truth.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "transactions.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRANSACTIONS_HEADER)
        for tx in dataset.transactions:
            writer.writerow([
                tx.tx_hash, tx.block_number, tx.timestamp, tx.from_addr,
                tx.to_addr, tx.value, tx.token, tx.gas_price,
                "" if tx.max_fee is None else tx.max_fee,
                "" if tx.max_priority_fee is None else tx.max_priority_fee,
                "" if tx.base_fee is None else tx.base_fee,
            ])

    with open(out / "tornado_events.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVENTS_HEADER)
        for ev in dataset.events:
            writer.writerow([
                ev.tx_hash, ev.block_number, ev.timestamp, ev.pool_id, ev.kind,
                ev.actor, ev.gas_price, "true" if ev.via_relayer else "false",
                "" if ev.ap_claimed is None else ev.ap_claimed,
            ])

    with open(out / "known_addresses.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(KNOWN_HEADER)
        for entry in dataset.known:
            writer.writerow([entry.addr, entry.label, entry.category])

    with open(out / "pools.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POOLS_HEADER)
        for row in dataset.pools:
            writer.writerow(list(row))

    save_truth(dataset.truth, out / "truth.json")


def save_truth(truth: GroundTruth, path: Union[str, Path]) -> None:
    payload = {
        "entities": {k: sorted(v) for k, v in truth.entities.items()},
        "planted_reveals": [
            {
                "type": p.kind,
                "deposit_txs": sorted(p.deposit_txs),
                "withdraw_txs": sorted(p.withdraw_txs),
            }
            for p in truth.planted_reveals
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_truth(path: Union[str, Path]) -> GroundTruth:
    with open(path) as fh:
        payload = json.load(fh)
    return GroundTruth(
        entities={k: tuple(v) for k, v in payload["entities"].items()},
        planted_reveals=[
            PlantedReveal(
                kind=item["type"],
                deposit_txs=frozenset(item["deposit_txs"]),
                withdraw_txs=frozenset(item["withdraw_txs"]),
            )
            for item in payload["planted_reveals"]
        ],
    )


def cluster_pair_recall(clusters: Iterable[Cluster], truth: GroundTruth) -> float:
    """Fraction of true co-owned address pairs found inside some cluster."""
    true_pairs: set[tuple[str, str]] = set()
    for addrs in truth.entities.values():
        ordered = sorted(addrs)
        for i, a in enumerate(ordered):
            for b in ordered[i + 1:]:
                true_pairs.add((a, b))
    if not true_pairs:
        raise ValueError("truth contains no co-owned pairs")

    membership: dict[str, set[int]] = {}
    for idx, cluster in enumerate(clusters):
        for addr in cluster.addresses():
            membership.setdefault(addr, set()).add(idx)
    recovered = sum(
        1 for a, b in true_pairs
        if membership.get(a, set()) & membership.get(b, set())
    )
    return recovered / len(true_pairs)


def reveal_recall(predicted: Iterable[Reveal], truth: GroundTruth,
                  kind: Optional[str] = None) -> float:
    """Fraction of planted reveals matched by a predicted reveal.

    A planted reveal is matched when some predicted reveal overlaps it on
    both the deposit side and the withdraw side, regardless of which
    heuristic produced the prediction.
    """
    planted = [
        p for p in truth.planted_reveals if kind is None or p.kind == kind
    ]
    if not planted:
        raise ValueError(f"truth contains no planted reveals for {kind or 'any kind'}")
    predicted = list(predicted)
    matched = 0
    for p in planted:
        for r in predicted:
            if r.deposit_txs & p.deposit_txs and r.withdraw_txs & p.withdraw_txs:
                matched += 1
                break
    return matched / len(planted)


def recall(predicted: Sequence, truth: GroundTruth,
           kind: Optional[str] = None) -> float:
    """Dispatch to pair recall for clusters or overlap recall for reveals."""
    items = list(predicted)
    if items and isinstance(items[0], Reveal):
        return reveal_recall(items, truth, kind)
    if items and isinstance(items[0], Cluster):
        return cluster_pair_recall(items, truth)
    if not items:
        if truth.planted_reveals and not truth.entities:
            return reveal_recall(items, truth, kind)
        if truth.entities and not truth.planted_reveals:
            return cluster_pair_recall(items, truth)
        raise ValueError("cannot infer recall category from empty predictions")
    raise TypeError(f"unsupported prediction type: {type(items[0])!r}")
