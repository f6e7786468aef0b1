"""Read-only serving indexes built once and shared by every query surface.

Everything served is computed from a sealed store: deposit-reuse clusters,
embedding neighbors, mixer reveals, pool audits, and the hash digests
behind the private compromise check. All numbers the HTTP service or the
`score` command emit come from here, so the engine and the API cannot
disagree.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Optional, Union

from .. import darcluster, diffembed, tornado
from ..anonscore import ScoreConfig, combined_report
from ..darcluster import Cluster, ClusterMember, ROLE_DEPOSIT, ROLE_EOA, ROLE_EXCHANGE
from ..errors import NotFoundError
from ..ledger import LedgerStore, load_directory

WEEK_SECONDS = 7 * 86400

DAR_CLUSTERS_FILE = "dar_clusters.csv"
REVEALS_JSON_FILE = "reveals.json"
REVEALS_CSV_FILE = "reveals.csv"
AUDITS_FILE = "pool_audits.csv"
EMBEDDINGS_FILE = "embeddings.bin"

_ROLE_TO_TYPE = {ROLE_EOA: "eoa", ROLE_DEPOSIT: "deposit", ROLE_EXCHANGE: "exchange"}


def address_digest(addr: str) -> str:
    """SHA-256 hex digest of the lowercase 0x-address string."""
    return hashlib.sha256(addr.lower().encode("ascii")).hexdigest()


class ServingIndexes:
    def __init__(self, store: LedgerStore,
                 dar_clusters: list[Cluster],
                 reveals: list[tornado.Reveal],
                 embeddings: Optional[diffembed.EmbeddingTable] = None,
                 as_of: Optional[int] = None,
                 score_config: Optional[ScoreConfig] = None,
                 k_neighbors: int = 9):
        self.store = store
        self.dar_clusters = dar_clusters
        self.reveals = reveals
        self.embeddings = embeddings
        self.score_config = score_config or ScoreConfig()
        self.k_neighbors = k_neighbors
        self.audits = tornado.audit_all(reveals, store)
        self.lifted = tornado.lift_to_addresses(reveals, store)
        self.request_log: list[str] = []

        self.as_of = as_of if as_of is not None else self._newest_timestamp()

        self._dar_by_addr: dict[str, Cluster] = {}
        for cluster in dar_clusters:
            for addr in cluster.core_addresses():
                self._dar_by_addr[addr] = cluster

        self._lifted_by_addr: dict[str, list[Cluster]] = {}
        for cluster in self.lifted:
            for addr in cluster.addresses():
                self._lifted_by_addr.setdefault(addr, []).append(cluster)

        self._events_by_actor: dict[str, list] = {}
        for ev in store.events:
            self._events_by_actor.setdefault(ev.actor, []).append(ev)

        self._revealed_withdraws: set[str] = set()
        for reveal in reveals:
            self._revealed_withdraws.update(reveal.withdraw_txs)

        self._reveal_records: dict[str, list[dict]] = {}
        compromised_actors: set[str] = set()
        for reveal in sorted(reveals, key=tornado.Reveal.sort_key):
            for tx in sorted(reveal.deposit_txs | reveal.withdraw_txs):
                ev = store.event(tx)
                compromised_actors.add(ev.actor)
                self._reveal_records.setdefault(ev.actor, []).append({
                    "tx_hash": ev.tx_hash,
                    "kind": ev.kind,
                    "pool_id": ev.pool_id,
                    "heuristic": reveal.heuristic,
                    "confidence": reveal.confidence,
                    "timestamp": ev.timestamp,
                })
        for records in self._reveal_records.values():
            records.sort(key=lambda r: (r["timestamp"], r["tx_hash"], r["heuristic"]))

        self.digests: list[str] = sorted(address_digest(a) for a in compromised_actors)

        active = store.tornado_active_addresses()
        if active:
            total_records = sum(len(self._reveal_records.get(a, ())) for a in active)
            self._population_mean = total_records / len(active)
        else:
            self._population_mean = 0.0

    def _newest_timestamp(self) -> int:
        newest = 0
        for tx in self.store.transactions:
            newest = max(newest, tx.timestamp)
        for ev in self.store.events:
            newest = max(newest, ev.timestamp)
        return newest

    @classmethod
    def load(cls, data_dir: Union[str, Path],
             as_of: Optional[int] = None,
             k_neighbors: int = 9) -> "ServingIndexes":
        """Build indexes from a data directory.

        Persisted artifacts (cluster export, reveals JSON, embedding file)
        are preferred when present; otherwise the ledger files are loaded
        and the derived structures are computed on the spot.
        """
        data_dir = Path(data_dir)
        store, _ = load_directory(data_dir)

        clusters_path = data_dir / DAR_CLUSTERS_FILE
        if clusters_path.exists():
            with open(clusters_path, newline="") as fh:
                clusters = darcluster.load_clusters(fh)
        elif store.known:
            clusters = darcluster.build_clusters(darcluster.detect_tuples(store))
        else:
            clusters = []

        reveals_path = data_dir / REVEALS_JSON_FILE
        if reveals_path.exists():
            with open(reveals_path) as fh:
                reveals = tornado.load_reveals_json(fh)
        else:
            reveals = tornado.run_all(store)

        embeddings = None
        embeddings_path = data_dir / EMBEDDINGS_FILE
        if embeddings_path.exists():
            with open(embeddings_path, "rb") as fh:
                embeddings = diffembed.load_embeddings(fh)

        return cls(store, clusters, reveals, embeddings,
                   as_of=as_of, k_neighbors=k_neighbors)

    # -- query surfaces --

    def _node_cluster(self, addr: str) -> Optional[Cluster]:
        if self.embeddings is None or addr not in self.embeddings:
            return None
        members = [ClusterMember(addr, ROLE_EOA, 1.0, "node")]
        for nbr, _dist, kappa in diffembed.neighbors(self.embeddings, addr,
                                                     self.k_neighbors):
            members.append(ClusterMember(nbr, ROLE_EOA, kappa, "node"))
        clamped = [min(m.kappa, 1.0) for m in members]
        return Cluster(
            cluster_id=-1,
            members=tuple(sorted(members, key=lambda m: m.addr)),
            kappa=sum(clamped) / len(clamped),
        )

    def address_summary(self, addr: str) -> dict:
        """Anonymity summary: score, linked addresses, mixer statistics."""
        dar = self._dar_by_addr.get(addr)
        node = self._node_cluster(addr)
        lifted = self._lifted_by_addr.get(addr, [])
        report = combined_report(addr, dar, node, lifted, self.score_config)

        linked: dict[tuple[str, str], dict] = {}

        def add(member: ClusterMember, type_name: str, heuristic: str) -> None:
            if member.addr == addr:
                return
            key = (member.addr, heuristic)
            entry = linked.get(key)
            if entry is None or member.kappa > entry["kappa"]:
                linked[key] = {
                    "addr": member.addr,
                    "type": type_name,
                    "kappa": member.kappa,
                    "heuristic": heuristic,
                }

        if dar is not None:
            for m in dar.members:
                add(m, _ROLE_TO_TYPE[m.role], m.heuristic)
        if node is not None:
            for m in node.members:
                add(m, "eoa", "node")
        for cluster in lifted:
            for m in cluster.members:
                add(m, "eoa", m.heuristic)

        events = self._events_by_actor.get(addr, [])
        deposit_count = sum(1 for ev in events if ev.kind == "deposit")
        withdraw_count = sum(1 for ev in events if ev.kind == "withdraw")
        linked_withdraws = sum(
            1 for ev in events
            if ev.kind == "withdraw" and ev.tx_hash in self._revealed_withdraws
        )
        return {
            "addr": addr,
            "score_display": report.score_display,
            "linked_addresses": [linked[k] for k in sorted(linked)],
            "tornado_stats": {
                "deposit_count": deposit_count,
                "withdraw_count": withdraw_count,
                "linked_withdraw_count": linked_withdraws,
            },
        }

    def reveal_timeline(self, addr: str, as_of: Optional[int] = None) -> dict:
        """The address's revealing transactions in 7-day buckets before as_of."""
        as_of = self.as_of if as_of is None else as_of
        records = self._reveal_records.get(addr, [])
        buckets: dict[int, list[dict]] = {}
        for record in records:
            age = as_of - record["timestamp"]
            if age < 0:
                continue
            buckets.setdefault(age // WEEK_SECONDS, []).append(record)
        return {
            "addr": addr,
            "weekly_buckets": [
                {"week_index": index, "reveals": buckets[index]}
                for index in sorted(buckets)
            ],
            "stats": {
                "reveal_count": len(records),
                "population_mean": self._population_mean,
            },
        }

    def pool_audit(self, pool_id: str) -> dict:
        for audit in self.audits:
            if audit.pool_id == pool_id:
                return {
                    "pool_id": audit.pool_id,
                    "total_deposits": audit.total_deposits,
                    "compromised_deposits": audit.compromised_deposits,
                    "true_anonymity_set": audit.true_anonymity_set,
                }
        raise NotFoundError(f"unknown pool: {pool_id}")

    def pools_list(self) -> dict:
        pools = []
        for pool_id in sorted(self.store.pools):
            pool = self.store.pools[pool_id]
            pools.append({
                "pool_id": pool.pool_id,
                "currency": pool.currency,
                "denomination": str(pool.denomination),
                "ap_rate": None if pool.ap_rate is None else str(pool.ap_rate),
                "total_deposits": len(self.store.pool_events(pool_id, "deposit")),
            })
        return {"pools": pools}

    def check(self, prefix: str) -> list[str]:
        """All compromised-address digests starting with the 4-hex prefix."""
        return [d for d in self.digests if d.startswith(prefix)]
