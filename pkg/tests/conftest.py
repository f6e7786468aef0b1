"""Shared fixtures and store-building helpers."""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from typing import Optional

import pytest

from tutela.ledger import KnownAddress, LedgerStore, TornadoEvent, TornadoPool, TxRecord

GENESIS = 1_600_000_000
BLOCK_SECONDS = 12


def addr(n: int) -> str:
    return f"0x{n:040x}"


def txh(n: int) -> str:
    return f"0x{n:064x}"


def ts_of(block: int) -> int:
    return GENESIS + block * BLOCK_SECONDS


class StoreBuilder:
    """Assembles a consistent LedgerStore without CSV plumbing."""

    def __init__(self) -> None:
        self.store = LedgerStore()
        self._tx_n = 0

    def pool(self, pool_id: str, contract: str, currency: str = "ETH",
             denomination: str = "1", ap_rate: Optional[str] = None) -> "StoreBuilder":
        self.store.pools[pool_id] = TornadoPool(
            pool_id=pool_id, contract_addr=contract, currency=currency,
            denomination=Decimal(denomination),
            ap_rate=None if ap_rate is None else Fraction(ap_rate),
        )
        return self

    def known(self, address: str, category: str, label: str = "") -> "StoreBuilder":
        self.store.known[address] = KnownAddress(address, label, category)
        return self

    def tx(self, from_addr: str, to_addr: str, value: int, block: int,
           token: str = "ETH", gas_price: int = 0,
           max_fee: Optional[int] = None, max_priority_fee: Optional[int] = None,
           base_fee: Optional[int] = None) -> TxRecord:
        self._tx_n += 1
        record = TxRecord(
            tx_hash=txh(self._tx_n), block_number=block, timestamp=ts_of(block),
            from_addr=from_addr, to_addr=to_addr, value=value, token=token,
            gas_price=gas_price, max_fee=max_fee,
            max_priority_fee=max_priority_fee, base_fee=base_fee,
        )
        self.store.add_transaction(record)
        return record

    def event(self, kind: str, pool_id: str, actor: str, block: int,
              gas_price: int = 50 * 10**9, via_relayer: bool = False,
              ap_claimed: Optional[int] = None) -> TornadoEvent:
        self._tx_n += 1
        ev = TornadoEvent(
            kind=kind, pool_id=pool_id, actor=actor, tx_hash=txh(self._tx_n),
            block_number=block, timestamp=ts_of(block), gas_price=gas_price,
            via_relayer=via_relayer, ap_claimed=ap_claimed,
        )
        self.store.add_event(ev)
        return ev

    def sealed(self) -> LedgerStore:
        self.store.seal()
        return self.store


@pytest.fixture
def builder() -> StoreBuilder:
    return StoreBuilder()
