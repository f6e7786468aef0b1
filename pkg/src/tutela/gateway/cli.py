"""Command-line interface.

Subcommands cover the whole pipeline: ingest and validate data files,
compute deposit-reuse clusters, train embeddings, run the mixer
heuristics, audit pools, score an address, generate synthetic datasets,
and serve the HTTP API.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from pathlib import Path
from typing import Optional, Sequence

from .. import darcluster, diffembed, synthchain, tornado
from ..errors import TutelaError
from ..ledger import DATA_FILES, load_directory
from .indexes import (
    AUDITS_FILE, DAR_CLUSTERS_FILE, EMBEDDINGS_FILE, REVEALS_CSV_FILE,
    REVEALS_JSON_FILE, ServingIndexes,
)
from .service import create_app

DEFAULT_BIND = "127.0.0.1:8480"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_help(sys.stderr)
        sys.stderr.write(f"\nerror: {message}\n")
        raise SystemExit(1)


def _data_dir(args: argparse.Namespace) -> Path:
    if args.data_dir is None:
        raise UsageError("--data-dir is required (or set TUTELA_DATA_DIR)")
    return Path(args.data_dir)


def _add_data_dir(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--data-dir", default=os.environ.get("TUTELA_DATA_DIR"),
        help="directory with the canonical data files "
             "(default: $TUTELA_DATA_DIR)",
    )


def cmd_ingest(args: argparse.Namespace) -> int:
    data_dir = _data_dir(args)
    data_dir.mkdir(parents=True, exist_ok=True)
    for flag, name in (
        (args.transactions, "transactions"),
        (args.events, "tornado_events"),
        (args.known, "known_addresses"),
        (args.pools, "pools"),
    ):
        if flag:
            shutil.copyfile(flag, data_dir / DATA_FILES[name])
    _, reports = load_directory(data_dir)
    if not reports:
        print("no data files found", file=sys.stderr)
        return 2
    for name, report in reports.items():
        print(f"{name}: accepted={report.accepted} rejected={report.rejected}")
        for line_no, reason in report.errors[:10]:
            print(f"  row {line_no}: {reason}")
    return 0


def cmd_cluster_dar(args: argparse.Namespace) -> int:
    data_dir = _data_dir(args)
    store, _ = load_directory(data_dir)
    config = darcluster.DarConfig(alpha=args.alpha, tau=args.tau)
    tuples = darcluster.detect_tuples(store, config)
    clusters = darcluster.build_clusters(tuples)
    with open(data_dir / DAR_CLUSTERS_FILE, "w", newline="") as fh:
        darcluster.export_clusters(clusters, fh)
    print(f"tuples={len(tuples)} clusters={len(clusters)}")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    data_dir = _data_dir(args)
    store, _ = load_directory(data_dir)
    config = diffembed.EmbedConfig(
        d=args.dim, l=args.subgraph_size, h=args.window,
        walks_per_node=args.walks, epochs=args.epochs,
        learning_rate=args.learning_rate, negative_samples=args.negatives,
        seed=args.seed,
    )
    graph = diffembed.build_graph(store)
    if len(graph) == 0:
        print("interaction graph is empty; nothing to embed", file=sys.stderr)
        return 2
    corpus = diffembed.build_corpus(graph, config)
    if args.corpus_out:
        with open(args.corpus_out, "w") as fh:
            diffembed.save_corpus(corpus, fh)
    table = diffembed.train(corpus, config)
    with open(data_dir / EMBEDDINGS_FILE, "wb") as fh:
        diffembed.save_embeddings(table, fh)
    print(f"embedded {len(table)} addresses at d={table.d}")
    return 0


def cmd_tornado_reveal(args: argparse.Namespace) -> int:
    data_dir = _data_dir(args)
    store, _ = load_directory(data_dir)
    config = tornado.TornadoConfig(multi_denom_relaxed=args.relaxed_multi_denom)
    reveals = tornado.run_all(store, config)
    with open(data_dir / REVEALS_CSV_FILE, "w", newline="") as fh:
        tornado.export_reveals(reveals, store, fh)
    with open(data_dir / REVEALS_JSON_FILE, "w") as fh:
        tornado.save_reveals_json(reveals, fh)
    counts: dict[str, int] = {}
    for reveal in reveals:
        counts[reveal.heuristic] = counts.get(reveal.heuristic, 0) + 1
    for heuristic in tornado.HEURISTICS:
        print(f"{heuristic}: {counts.get(heuristic, 0)}")
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    data_dir = _data_dir(args)
    store, _ = load_directory(data_dir)
    reveals_path = data_dir / REVEALS_JSON_FILE
    if reveals_path.exists():
        with open(reveals_path) as fh:
            reveals = tornado.load_reveals_json(fh)
    else:
        reveals = tornado.run_all(store)
    audits = tornado.audit_all(reveals, store)
    with open(data_dir / AUDITS_FILE, "w", newline="") as fh:
        tornado.export_audits(audits, fh)
    tornado.export_audits(audits, sys.stdout)
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    data_dir = _data_dir(args)
    indexes = ServingIndexes.load(data_dir, as_of=args.as_of)
    summary = indexes.address_summary(args.addr.strip().lower())
    print(json.dumps(summary, indent=2))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.config:
        config = synthchain.SynthConfig.from_toml(args.config)
    else:
        config = synthchain.SynthConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.entities is not None:
        overrides["n_entities"] = args.entities
    if args.noise_txs is not None:
        overrides["noise_tx_count"] = args.noise_txs
    if args.compromises is not None:
        for kind in tornado.HEURISTICS:
            overrides[f"{kind}_count"] = args.compromises
    if overrides:
        config = synthchain.SynthConfig(**{**config.__dict__, **overrides})
    dataset = synthchain.generate(config)
    synthchain.write_dataset(dataset, args.out)
    print(
        f"wrote {len(dataset.transactions)} transactions, "
        f"{len(dataset.events)} events, "
        f"{len(dataset.truth.entities)} entities, "
        f"{len(dataset.truth.planted_reveals)} planted reveals to {args.out}"
    )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    data_dir = _data_dir(args)
    indexes = ServingIndexes.load(data_dir, as_of=args.as_of)
    static_dir = args.static or os.environ.get("TUTELA_STATIC")
    if static_dir is None and (data_dir / "static").is_dir():
        static_dir = data_dir / "static"
    app = create_app(indexes, static_dir=static_dir)
    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"--bind must look like host:port, got {args.bind!r}")
    uvicorn.run(app, host=host, port=int(port), log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tutela", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and report on the data files")
    _add_data_dir(p)
    p.add_argument("--transactions", help="copy this transactions file into the data dir")
    p.add_argument("--events", help="copy this events file into the data dir")
    p.add_argument("--known", help="copy this known-addresses file into the data dir")
    p.add_argument("--pools", help="copy this pools file into the data dir")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("cluster-dar", help="compute deposit-reuse clusters")
    _add_data_dir(p)
    p.add_argument("--alpha", type=float, default=0.01,
                   help="max amount difference in ETH (default 0.01)")
    p.add_argument("--tau", type=int, default=3200,
                   help="max block distance (default 3200)")
    p.set_defaults(func=cmd_cluster_dar)

    p = sub.add_parser("embed", help="train interaction-graph embeddings")
    _add_data_dir(p)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--subgraph-size", type=int, default=40)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--walks", type=int, default=10)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=0.025)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corpus-out", help="also write the walk corpus to this path")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("tornado-reveal", help="run the five mixer heuristics")
    _add_data_dir(p)
    p.add_argument("--relaxed-multi-denom", action="store_true",
                   help="accept deposit portfolios that cover the withdrawal portfolio")
    p.set_defaults(func=cmd_tornado_reveal)

    p = sub.add_parser("audit", help="per-pool anonymity-set audit")
    _add_data_dir(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("score", help="anonymity report for one address")
    p.add_argument("addr")
    _add_data_dir(p)
    p.add_argument("--as-of", type=int, default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="synth.toml config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--entities", type=int, default=None)
    p.add_argument("--noise-txs", type=int, default=None)
    p.add_argument("--compromises", type=int, default=None,
                   help="plant this many instances of every compromise type")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="serve the HTTP JSON API")
    _add_data_dir(p)
    p.add_argument("--bind", default=os.environ.get("TUTELA_BIND", DEFAULT_BIND))
    p.add_argument("--as-of", type=int, default=None,
                   help="fixed 'now' timestamp for the reveal timeline")
    p.add_argument("--static", help="directory of static UI assets to serve at /")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TutelaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
