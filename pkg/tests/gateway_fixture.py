"""Hand-built dataset behind the gateway tests and golden files.

Contents (all values chosen so the expected numbers are hand-computable):

- One deposit-reuse pattern with zero amount and block deltas, so the
  cluster {EOA, deposit} plus the adjacent exchange scores kappa 1.0 and
  a three-member display score of 71.
- An address-match pair in "1 ETH" alongside three clean deposits: the
  pool audits to (total 4, compromised 1, true set 3).
- A unique-gas-price pair and a linked-transfer pair in "10 ETH", so that
  pool audits to (2, 2, 0) and the linked pair lifts to an address
  cluster with confidence 0.5.
- Reveal timestamps placed 3 and ~10 days before AS_OF, landing in weekly
  buckets 0 and 1.
"""

from __future__ import annotations

from pathlib import Path

from tutela.ledger import GWEI

from conftest import addr, ts_of

CEX = addr(0x500)
RELAYER = addr(0x501)
POOL_1ETH_CONTRACT = addr(0x900)
POOL_10ETH_CONTRACT = addr(0x901)

DAR_EOA = addr(0x10)
DAR_DEPOSIT = addr(0x11)

LINKED_DEPOSITOR = addr(0x20)
LINKED_WITHDRAWER = addr(0x21)

MATCH_ACTOR = addr(0x30)
CLEAN_DEPOSITORS = [addr(0x31), addr(0x32), addr(0x33)]

GAS_DEPOSITOR = addr(0x40)
GAS_WITHDRAWER = addr(0x41)

ODD_PRICE = 27 * GWEI + 400_000_123
ROUND_PRICE = 50 * GWEI

# The address-match withdraw sits at block 150_000; AS_OF is three days
# later, which puts it in week bucket 0 and the matching deposit (about
# ten days old) in bucket 1.
AS_OF = ts_of(150_000) + 3 * 86_400

ETH = 10**18


def _tx(n, block, src, dst, value, gas=ROUND_PRICE):
    return f"{n:#066x},{block},{ts_of(block)},{src},{dst},{value},ETH,{gas},,,"


def _event(n, block, pool, kind, actor, gas=ROUND_PRICE, relayer="false", ap=""):
    return (
        f"{n:#066x},{block},{ts_of(block)},{pool},{kind},{actor},{gas},{relayer},{ap}"
    )


def write_fixture(data_dir: Path) -> None:
    data_dir.mkdir(parents=True, exist_ok=True)

    (data_dir / "pools.csv").write_text("\n".join([
        "pool_id,contract_addr,currency,denomination,ap_rate",
        f"1 ETH,{POOL_1ETH_CONTRACT},ETH,1,20",
        f"10 ETH,{POOL_10ETH_CONTRACT},ETH,10,50",
    ]) + "\n")

    (data_dir / "known_addresses.csv").write_text("\n".join([
        "addr,label,category",
        f"{CEX},exchange main,cex_main",
        f"{RELAYER},relayer,relayer",
        f"{POOL_1ETH_CONTRACT},pool 1 ETH,tornado_contract",
        f"{POOL_10ETH_CONTRACT},pool 10 ETH,tornado_contract",
    ]) + "\n")

    transactions = [
        "tx_hash,block_number,timestamp,from_addr,to_addr,value_wei,token,"
        "gas_price_wei,max_fee_wei,max_priority_fee_wei,base_fee_wei",
        # Deposit reuse with zero deltas: kappa is exactly 1.
        _tx(1, 100, DAR_EOA, DAR_DEPOSIT, ETH),
        _tx(2, 100, DAR_DEPOSIT, CEX, ETH),
        # Three transfers between the linked pair.
        _tx(3, 200, LINKED_DEPOSITOR, LINKED_WITHDRAWER, ETH),
        _tx(4, 201, LINKED_WITHDRAWER, LINKED_DEPOSITOR, ETH),
        _tx(5, 202, LINKED_DEPOSITOR, LINKED_WITHDRAWER, ETH),
    ]
    (data_dir / "transactions.csv").write_text("\n".join(transactions) + "\n")

    events = [
        "tx_hash,block_number,timestamp,pool_id,kind,actor,gas_price_wei,"
        "via_relayer,ap_claimed",
        # "1 ETH": four deposits, one compromised by the address match.
        _event(101, 100_000, "1 ETH", "deposit", MATCH_ACTOR),
        _event(102, 100_010, "1 ETH", "deposit", CLEAN_DEPOSITORS[0]),
        _event(103, 100_020, "1 ETH", "deposit", CLEAN_DEPOSITORS[1]),
        _event(104, 100_030, "1 ETH", "deposit", CLEAN_DEPOSITORS[2]),
        _event(105, 150_000, "1 ETH", "withdraw", MATCH_ACTOR),
        # "10 ETH": unique gas price pair plus the linked pair.
        _event(106, 130_000, "10 ETH", "deposit", GAS_DEPOSITOR, gas=ODD_PRICE),
        _event(107, 131_000, "10 ETH", "withdraw", GAS_WITHDRAWER, gas=ODD_PRICE),
        _event(108, 140_000, "10 ETH", "deposit", LINKED_DEPOSITOR),
        _event(109, 141_000, "10 ETH", "withdraw", LINKED_WITHDRAWER,
               relayer="true"),
    ]
    (data_dir / "tornado_events.csv").write_text("\n".join(events) + "\n")
