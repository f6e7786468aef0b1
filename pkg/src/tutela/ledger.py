"""Canonical data model and indexed store.

Holds normalized value transfers, mixer pool events, the known-address
registry, and the pool registry. Everything downstream (clustering,
embeddings, mixer heuristics, the query service) reads from a sealed
LedgerStore; nothing mutates one after seal().
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Optional, TextIO, Union

from .errors import ConfigurationError, IngestError, NotFoundError, StoreError

WEI_PER_ETH = 10**18
GWEI = 10**9

ADDRESS_RE = re.compile(r"0x[0-9a-f]{40}")
TX_HASH_RE = re.compile(r"0x[0-9a-f]{64}")

KNOWN_CATEGORIES = frozenset(
    {"cex_main", "dex", "relayer", "miner", "tornado_contract", "defi", "other"}
)

TRANSACTIONS_HEADER = [
    "tx_hash", "block_number", "timestamp", "from_addr", "to_addr",
    "value_wei", "token", "gas_price_wei", "max_fee_wei",
    "max_priority_fee_wei", "base_fee_wei",
]
EVENTS_HEADER = [
    "tx_hash", "block_number", "timestamp", "pool_id", "kind", "actor",
    "gas_price_wei", "via_relayer", "ap_claimed",
]
KNOWN_HEADER = ["addr", "label", "category"]
POOLS_HEADER = ["pool_id", "contract_addr", "currency", "denomination", "ap_rate"]


def is_address(value: str) -> bool:
    return bool(ADDRESS_RE.fullmatch(value))


def is_tx_hash(value: str) -> bool:
    return bool(TX_HASH_RE.fullmatch(value))


@dataclass(frozen=True)
class TxRecord:
    """One value transfer. Amounts are integer wei; fee fields optional."""

    tx_hash: str
    block_number: int
    timestamp: int
    from_addr: str
    to_addr: str
    value: int
    token: str = "ETH"
    gas_price: int = 0
    max_fee: Optional[int] = None
    max_priority_fee: Optional[int] = None
    base_fee: Optional[int] = None

    @property
    def is_self_transfer(self) -> bool:
        return self.from_addr == self.to_addr


@dataclass(frozen=True)
class KnownAddress:
    addr: str
    label: str
    category: str


@dataclass(frozen=True)
class TornadoPool:
    """A fixed-denomination mixer pool; ap_rate is points accrued per block."""

    pool_id: str
    contract_addr: str
    currency: str
    denomination: Decimal
    ap_rate: Optional[Fraction] = None


@dataclass(frozen=True)
class TornadoEvent:
    """A deposit or withdraw against a pool.

    For withdraws the actor is always the decoded recipient, never the
    relayer that submitted the transaction; via_relayer records whether a
    relayer was involved.
    """

    kind: str
    pool_id: str
    actor: str
    tx_hash: str
    block_number: int
    timestamp: int
    gas_price: int
    via_relayer: bool = False
    ap_claimed: Optional[int] = None


@dataclass
class IngestReport:
    """Row-level outcome of one ingestion pass."""

    accepted: int = 0
    rejected: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)

    def reject(self, line_no: int, reason: str) -> None:
        self.rejected += 1
        self.errors.append((line_no, reason))


class _RowError(Exception):
    """Internal: first validation failure for a row."""


def _parse_int(raw: str, name: str, minimum: Optional[int] = None) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise _RowError(f"non-numeric {name}: {raw!r}")
    if minimum is not None and value < minimum:
        raise _RowError(f"{name} below {minimum}: {value}")
    return value


def _parse_opt_int(raw: str, name: str) -> Optional[int]:
    if raw == "":
        return None
    return _parse_int(raw, name, minimum=0)


def _parse_address(raw: str, name: str) -> str:
    addr = raw.strip().lower()
    if not is_address(addr):
        raise _RowError(f"malformed {name}: {raw!r}")
    return addr


def _parse_tx_hash(raw: str) -> str:
    h = raw.strip().lower()
    if not is_tx_hash(h):
        raise _RowError(f"malformed tx_hash: {raw!r}")
    return h


def _parse_bool(raw: str, name: str) -> bool:
    flag = raw.strip().lower()
    if flag in ("true", "1"):
        return True
    if flag in ("false", "0", ""):
        return False
    raise _RowError(f"bad boolean {name}: {raw!r}")


def _reader(source: TextIO, expected_header: list[str]) -> Iterator[tuple[int, list[str]]]:
    """Yield (line_no, row) pairs; raises IngestError if the stream is unreadable."""
    try:
        rows = csv.reader(source)
        header = next(rows, None)
        if header is None:
            return
        if [h.strip() for h in header] != expected_header:
            raise IngestError(
                f"unexpected header {header!r}, want {expected_header!r}"
            )
        for line_no, row in enumerate(rows, start=2):
            yield line_no, row
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise IngestError(f"unreadable stream: {exc}") from exc


class LedgerStore:
    """Ordered transactions and events plus registries and secondary indexes.

    Single writer during ingestion; seal() freezes the store, after which
    any number of readers may query it concurrently.
    """

    def __init__(self) -> None:
        self.transactions: list[TxRecord] = []
        self.events: list[TornadoEvent] = []
        self.known: dict[str, KnownAddress] = {}
        self.pools: dict[str, TornadoPool] = {}
        self._pool_contracts: set[str] = set()
        self._tx_by_hash: dict[str, int] = {}
        self._event_by_hash: dict[str, int] = {}
        self._by_from: dict[str, list[int]] = {}
        self._by_to: dict[str, list[int]] = {}
        self._events_by_pool_kind: dict[tuple[str, str], list[int]] = {}
        self._pair_counts: dict[tuple[str, str], int] = {}
        self._sealed = False

    # -- registries --

    def load_known_addresses(self, source: TextIO) -> IngestReport:
        self._check_mutable()
        report = IngestReport()
        for line_no, row in _reader(source, KNOWN_HEADER):
            try:
                if len(row) != len(KNOWN_HEADER):
                    raise _RowError(f"expected {len(KNOWN_HEADER)} fields, got {len(row)}")
                addr = _parse_address(row[0], "addr")
                label = row[1].strip()
                category = row[2].strip()
                if category not in KNOWN_CATEGORIES:
                    raise _RowError(f"unknown category: {category!r}")
                if addr in self.known:
                    raise _RowError(f"duplicate known address: {addr}")
            except _RowError as exc:
                report.reject(line_no, str(exc))
                continue
            self.known[addr] = KnownAddress(addr=addr, label=label, category=category)
            report.accepted += 1
        return report

    def load_pools(self, source: TextIO) -> IngestReport:
        self._check_mutable()
        report = IngestReport()
        for line_no, row in _reader(source, POOLS_HEADER):
            try:
                if len(row) != len(POOLS_HEADER):
                    raise _RowError(f"expected {len(POOLS_HEADER)} fields, got {len(row)}")
                pool_id = row[0].strip()
                if not pool_id:
                    raise _RowError("empty pool_id")
                if pool_id in self.pools:
                    raise _RowError(f"duplicate pool_id: {pool_id}")
                contract = _parse_address(row[1], "contract_addr")
                if contract in self._pool_contracts:
                    raise _RowError(f"duplicate contract_addr: {contract}")
                currency = row[2].strip()
                try:
                    denomination = Decimal(row[3])
                except InvalidOperation:
                    raise _RowError(f"bad denomination: {row[3]!r}")
                if denomination <= 0:
                    raise _RowError(f"non-positive denomination: {row[3]!r}")
                ap_rate: Optional[Fraction] = None
                if row[4].strip():
                    try:
                        ap_rate = Fraction(Decimal(row[4]))
                    except (InvalidOperation, ValueError):
                        raise _RowError(f"bad ap_rate: {row[4]!r}")
                    if ap_rate <= 0:
                        raise _RowError(f"non-positive ap_rate: {row[4]!r}")
            except _RowError as exc:
                report.reject(line_no, str(exc))
                continue
            self.pools[pool_id] = TornadoPool(
                pool_id=pool_id, contract_addr=contract, currency=currency,
                denomination=denomination, ap_rate=ap_rate,
            )
            self._pool_contracts.add(contract)
            report.accepted += 1
        return report

    # -- ingestion --

    def ingest_transactions(self, source: TextIO) -> IngestReport:
        """Ingest transfer rows; duplicates by tx_hash are rejected."""
        self._check_mutable()
        report = IngestReport()
        for line_no, row in _reader(source, TRANSACTIONS_HEADER):
            try:
                record = self._parse_transaction(row)
                if record.tx_hash in self._tx_by_hash:
                    raise _RowError(f"duplicate tx_hash: {record.tx_hash}")
            except _RowError as exc:
                report.reject(line_no, str(exc))
                continue
            self._append_transaction(record)
            report.accepted += 1
        return report

    def ingest_tornado_events(self, source: TextIO) -> IngestReport:
        """Ingest pool events; rows naming unregistered pools are rejected."""
        self._check_mutable()
        if not self.pools:
            raise ConfigurationError("pool registry must be loaded before events")
        report = IngestReport()
        for line_no, row in _reader(source, EVENTS_HEADER):
            try:
                event = self._parse_event(row)
                if event.tx_hash in self._event_by_hash:
                    raise _RowError(f"duplicate tx_hash: {event.tx_hash}")
            except _RowError as exc:
                report.reject(line_no, str(exc))
                continue
            self._append_event(event)
            report.accepted += 1
        return report

    def add_transaction(self, record: TxRecord) -> None:
        """Direct insert used by tests and the synthetic generator."""
        self._check_mutable()
        if record.tx_hash in self._tx_by_hash:
            raise StoreError(f"duplicate tx_hash: {record.tx_hash}")
        self._append_transaction(record)

    def add_event(self, event: TornadoEvent) -> None:
        self._check_mutable()
        if event.pool_id not in self.pools:
            raise StoreError(f"unknown pool: {event.pool_id}")
        if event.tx_hash in self._event_by_hash:
            raise StoreError(f"duplicate tx_hash: {event.tx_hash}")
        self._append_event(event)

    def _parse_transaction(self, row: list[str]) -> TxRecord:
        if len(row) != len(TRANSACTIONS_HEADER):
            raise _RowError(f"expected {len(TRANSACTIONS_HEADER)} fields, got {len(row)}")
        return TxRecord(
            tx_hash=_parse_tx_hash(row[0]),
            block_number=_parse_int(row[1], "block_number", minimum=0),
            timestamp=_parse_int(row[2], "timestamp", minimum=0),
            from_addr=_parse_address(row[3], "from_addr"),
            to_addr=_parse_address(row[4], "to_addr"),
            value=_parse_int(row[5], "value_wei", minimum=0),
            token=row[6].strip() or "ETH",
            gas_price=_parse_int(row[7], "gas_price_wei", minimum=0),
            max_fee=_parse_opt_int(row[8], "max_fee_wei"),
            max_priority_fee=_parse_opt_int(row[9], "max_priority_fee_wei"),
            base_fee=_parse_opt_int(row[10], "base_fee_wei"),
        )

    def _parse_event(self, row: list[str]) -> TornadoEvent:
        if len(row) != len(EVENTS_HEADER):
            raise _RowError(f"expected {len(EVENTS_HEADER)} fields, got {len(row)}")
        pool_id = row[3].strip()
        if pool_id not in self.pools:
            raise _RowError(f"unknown pool: {pool_id!r}")
        kind = row[4].strip()
        if kind not in ("deposit", "withdraw"):
            raise _RowError(f"bad kind: {kind!r}")
        return TornadoEvent(
            tx_hash=_parse_tx_hash(row[0]),
            block_number=_parse_int(row[1], "block_number", minimum=0),
            timestamp=_parse_int(row[2], "timestamp", minimum=0),
            pool_id=pool_id,
            kind=kind,
            actor=_parse_address(row[5], "actor"),
            gas_price=_parse_int(row[6], "gas_price_wei", minimum=0),
            via_relayer=_parse_bool(row[7], "via_relayer"),
            ap_claimed=_parse_opt_int(row[8], "ap_claimed"),
        )

    def _append_transaction(self, record: TxRecord) -> None:
        idx = len(self.transactions)
        self.transactions.append(record)
        self._tx_by_hash[record.tx_hash] = idx
        self._by_from.setdefault(record.from_addr, []).append(idx)
        self._by_to.setdefault(record.to_addr, []).append(idx)

    def _append_event(self, event: TornadoEvent) -> None:
        idx = len(self.events)
        self.events.append(event)
        self._event_by_hash[event.tx_hash] = idx
        self._events_by_pool_kind.setdefault((event.pool_id, event.kind), []).append(idx)

    # -- seal --

    def _check_mutable(self) -> None:
        if self._sealed:
            raise StoreError("store is sealed")

    @property
    def sealed(self) -> bool:
        return self._sealed

    def seal(self) -> None:
        """Freeze the store: validate global ordering, build the pair index."""
        if self._sealed:
            return
        self._validate_block_time_order(self.transactions)
        self._validate_block_time_order(self.events)
        pair_counts: dict[tuple[str, str], int] = {}
        for tx in self.transactions:
            if tx.is_self_transfer:
                continue
            pair = (min(tx.from_addr, tx.to_addr), max(tx.from_addr, tx.to_addr))
            pair_counts[pair] = pair_counts.get(pair, 0) + 1
        self._pair_counts = pair_counts
        self._sealed = True

    @staticmethod
    def _validate_block_time_order(records: Iterable) -> None:
        # For any two blocks b1 < b2, every timestamp in b1 must be <= every
        # timestamp in b2.
        span: dict[int, tuple[int, int]] = {}
        for r in records:
            lo, hi = span.get(r.block_number, (r.timestamp, r.timestamp))
            span[r.block_number] = (min(lo, r.timestamp), max(hi, r.timestamp))
        prev_hi = None
        for block in sorted(span):
            lo, hi = span[block]
            if prev_hi is not None and lo < prev_hi:
                raise StoreError(
                    f"timestamp order violates block order at block {block}"
                )
            prev_hi = max(hi, prev_hi) if prev_hi is not None else hi

    # -- queries --

    def transaction(self, tx_hash: str) -> TxRecord:
        try:
            return self.transactions[self._tx_by_hash[tx_hash]]
        except KeyError:
            raise NotFoundError(f"unknown transaction: {tx_hash}") from None

    def event(self, tx_hash: str) -> TornadoEvent:
        try:
            return self.events[self._event_by_hash[tx_hash]]
        except KeyError:
            raise NotFoundError(f"unknown event: {tx_hash}") from None

    def has_event(self, tx_hash: str) -> bool:
        return tx_hash in self._event_by_hash

    def transactions_from(self, addr: str) -> list[TxRecord]:
        return [self.transactions[i] for i in self._by_from.get(addr, [])]

    def transactions_to(self, addr: str) -> list[TxRecord]:
        return [self.transactions[i] for i in self._by_to.get(addr, [])]

    def interactions_between(self, a: str, b: str) -> int:
        """Count transfers with endpoints {a, b} in either direction.

        Self transfers carry no linking signal and are excluded, so the
        count for a == b is always 0. Symmetric in its arguments.
        """
        if a == b:
            return 0
        pair = (min(a, b), max(a, b))
        if self._sealed:
            return self._pair_counts.get(pair, 0)
        count = 0
        for idx in self._by_from.get(a, []):
            if self.transactions[idx].to_addr == b:
                count += 1
        for idx in self._by_from.get(b, []):
            if self.transactions[idx].to_addr == a:
                count += 1
        return count

    def interaction_pairs(self) -> Iterator[tuple[tuple[str, str], int]]:
        """All (pair, count) entries; requires a sealed store."""
        if not self._sealed:
            raise StoreError("interaction_pairs requires a sealed store")
        return iter(self._pair_counts.items())

    def pool_events(self, pool_id: str, kind: Optional[str] = None) -> list[TornadoEvent]:
        if pool_id not in self.pools:
            raise NotFoundError(f"unknown pool: {pool_id}")
        if kind is None:
            return self.pool_events(pool_id, "deposit") + self.pool_events(pool_id, "withdraw")
        return [self.events[i] for i in self._events_by_pool_kind.get((pool_id, kind), [])]

    def is_known(self, addr: str) -> bool:
        return addr in self.known

    def known_category(self, addr: str) -> Optional[str]:
        entry = self.known.get(addr)
        return entry.category if entry else None

    def cex_main_addresses(self) -> set[str]:
        return {a for a, k in self.known.items() if k.category == "cex_main"}

    # -- export --

    def tornado_active_addresses(self) -> set[str]:
        return {ev.actor for ev in self.events}

    def export_transactions(self, sink: TextIO) -> None:
        """Write all transactions back out, ordered by (block_number, tx_hash)."""
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(TRANSACTIONS_HEADER)
        for tx in sorted(self.transactions, key=lambda t: (t.block_number, t.tx_hash)):
            writer.writerow([
                tx.tx_hash, tx.block_number, tx.timestamp, tx.from_addr,
                tx.to_addr, tx.value, tx.token, tx.gas_price,
                "" if tx.max_fee is None else tx.max_fee,
                "" if tx.max_priority_fee is None else tx.max_priority_fee,
                "" if tx.base_fee is None else tx.base_fee,
            ])


DATA_FILES = {
    "known_addresses": "known_addresses.csv",
    "pools": "pools.csv",
    "transactions": "transactions.csv",
    "tornado_events": "tornado_events.csv",
}


def load_directory(data_dir: Union[str, Path],
                   seal: bool = True) -> tuple[LedgerStore, dict[str, IngestReport]]:
    """Load whichever canonical data files exist in data_dir.

    Registries load before events so pool validation works. Returns the
    (optionally sealed) store and per-file ingest reports.
    """
    data_dir = Path(data_dir)
    store = LedgerStore()
    reports: dict[str, IngestReport] = {}
    loaders = {
        "known_addresses": store.load_known_addresses,
        "pools": store.load_pools,
        "transactions": store.ingest_transactions,
        "tornado_events": store.ingest_tornado_events,
    }
    for name in ("known_addresses", "pools", "transactions", "tornado_events"):
        path = data_dir / DATA_FILES[name]
        if not path.exists():
            continue
        with open(path, newline="") as fh:
            reports[name] = loaders[name](fh)
    if seal:
        store.seal()
    return store, reports
