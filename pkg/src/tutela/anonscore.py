"""Anonymity scoring and anonymity-set information measures.

The headline score maps cluster evidence to [0, 1]: an address tied to a
large, confidently linked cluster scores near 0, an address with no
evidence scores 1. Entropy and information gain quantify how much a
heuristic shrinks a pool's anonymity set, in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .darcluster import Cluster


@dataclass(frozen=True)
class ScoreConfig:
    """beta controls how aggressively cluster size is penalized."""

    beta: float = 0.1
    display_scale: int = 100

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class ReportCluster:
    source: str
    size: int
    kappa: float


@dataclass(frozen=True)
class AnonymityReport:
    addr: str
    score_unit: float
    score_display: int
    clusters: tuple[ReportCluster, ...]


def anonymity_score(kappa: float, cluster_size: int,
                    config: Optional[ScoreConfig] = None) -> float:
    """1 - tanh(beta * kappa * |C|), non-increasing in both arguments.

    Inverse-distance confidences can exceed 1; they are clamped to 1 here
    so the score stays calibrated.
    """
    config = config or ScoreConfig()
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    if cluster_size < 0:
        raise ValueError("cluster_size must be non-negative")
    return 1.0 - math.tanh(config.beta * min(kappa, 1.0) * cluster_size)


def display_score(score_unit: float, config: Optional[ScoreConfig] = None) -> int:
    """Round half up onto the 0..display_scale integer scale."""
    config = config or ScoreConfig()
    return int(math.floor(score_unit * config.display_scale + 0.5))


def combined_report(addr: str,
                    dar_cluster: Optional[Cluster] = None,
                    node_cluster: Optional[Cluster] = None,
                    tornado_clusters: Iterable[Cluster] = (),
                    config: Optional[ScoreConfig] = None) -> AnonymityReport:
    """Score an address against evidence from all sources at once.

    The effective cluster is the union of the member sets; a member seen by
    several sources keeps its maximum confidence. The score is computed on
    (mean member confidence, union size), and each source cluster is listed
    separately in the report.
    """
    config = config or ScoreConfig()
    sources: list[tuple[str, Cluster]] = []
    if dar_cluster is not None:
        sources.append(("dar", dar_cluster))
    if node_cluster is not None:
        sources.append(("node", node_cluster))
    for cluster in tornado_clusters:
        sources.append((cluster.members[0].heuristic if cluster.members else "tornado",
                        cluster))

    member_kappa: dict[str, float] = {}
    report_clusters = []
    for source, cluster in sources:
        for m in cluster.members:
            kappa = min(m.kappa, 1.0)
            prev = member_kappa.get(m.addr)
            member_kappa[m.addr] = kappa if prev is None else max(prev, kappa)
        report_clusters.append(
            ReportCluster(source=source, size=len(cluster.members), kappa=cluster.kappa)
        )

    if member_kappa:
        mean_kappa = sum(member_kappa.values()) / len(member_kappa)
        score = anonymity_score(mean_kappa, len(member_kappa), config)
    else:
        score = 1.0
    return AnonymityReport(
        addr=addr,
        score_unit=score,
        score_display=display_score(score, config),
        clusters=tuple(report_clusters),
    )


def entropy(set_size: int) -> float:
    """Shannon entropy of a uniform anonymity set: ln of its cardinality."""
    if set_size < 1:
        raise ValueError("set size must be at least 1")
    return math.log(set_size)


def information_gain(prior_size: int, refined_size: int) -> float:
    """Entropy lost when a heuristic refines a set of prior_size down to
    refined_size; always non-negative."""
    if refined_size < 1:
        raise ValueError("refined set must be non-empty")
    if refined_size > prior_size:
        raise ValueError("refined set cannot exceed the prior set")
    return math.log(prior_size) - math.log(refined_size)
