"""``ordertransit`` command line.

Each stage of the pipeline is a subcommand reading and writing flat files,
and ``replicate`` runs them all in one go. Exit status is 0 on success, 1
for bad configuration or arguments and 2 when the data cannot be processed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import cluster as clu
from . import divergence, dtmc, embed, gtest, ingest, synth
from .domain import STATE_NAMES, CapCategory, ticker_index
from .errors import ConfigError, DataError
from .pipeline import PipelineConfig, heatmap_rows, replicate_config, run_pipeline, write_csv, write_json

log = logging.getLogger("ordertransit")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> tuple[str, ...]:
    items = tuple(x.strip() for x in text.split(",") if x.strip())
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    return items


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="master seed for synthetic data")
    p.add_argument("--tickers", type=_csv_list, help="comma-separated tickers to keep")
    p.add_argument("--exchange", type=_csv_list, help="comma-separated exchanges to keep")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="ordertransit", description="Intraday order-transition analysis.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="parse feed files into per-zone sequences")
    p.add_argument("inputs", nargs="+", type=Path)

    p = sub.add_parser("gtest", parents=[common], help="G-test of independence on each sequence")
    p.add_argument("inputs", nargs="+", type=Path, help="feed files or sequence directories")
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--max-lag", type=int, default=0, help="also write Cramér's V for lags 1..N")

    p = sub.add_parser("estimate", parents=[common], help="maximum-likelihood matrix per sequence")
    p.add_argument("inputs", nargs="+", type=Path, help="feed files or sequence directories")

    p = sub.add_parser("average", parents=[common], help="average matrices per (category, zone)")
    p.add_argument("inputs", nargs="+", type=Path, help="matrix JSON files or directories")

    p = sub.add_parser("stationary", parents=[common], help="stationary distribution of each matrix")
    p.add_argument("inputs", nargs="+", type=Path, help="matrix JSON files or directories")

    p = sub.add_parser("jsd", parents=[common], help="pairwise Jensen-Shannon tables per category")
    p.add_argument("input", type=Path, help="stationary.json from the stationary command")
    p.add_argument("--metric", choices=("distance", "divergence"), default="distance")

    p = sub.add_parser("embed", parents=[common], help="PCA of flattened matrices")
    p.add_argument("inputs", nargs="+", type=Path, help="matrix JSON files or directories")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--gate", type=float, default=embed.DEFAULT_GATE)

    p = sub.add_parser("cluster", parents=[common], help="DBSCAN over PCA scores")
    p.add_argument("input", type=Path, help="pca_scores.csv")
    p.add_argument("--eps", type=float, default=clu.DEFAULT_EPS)
    p.add_argument("--min-pts", type=int, default=clu.DEFAULT_MIN_PTS)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic feed and its manifest")
    p.add_argument("--manifest", type=Path, help="manifest JSON (default: built-in pattern)")
    p.add_argument("--events-per-zone", type=int)

    p = sub.add_parser("replicate", parents=[common], help="run the full pipeline")
    p.add_argument("--events-per-zone", type=int, default=1000,
                   help="synthetic events per ticker-day-zone when no config is given")
    return parser


# configuration -------------------------------------------------------------

def _load_config(args, require_source: bool) -> PipelineConfig:
    raw: dict[str, Any] = {}
    base = None
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("--config", "top level must be an object")
        base = args.config.parent
    if args.seed is not None:
        raw["seed"] = args.seed
        if isinstance(raw.get("synth"), dict):
            raw["synth"] = {**raw["synth"], "seed": args.seed}
    if args.exchange is not None:
        raw["exchanges"] = list(args.exchange)
    cfg = PipelineConfig.from_dict(raw, base, require_source=require_source)
    if args.tickers is not None:
        cfg.categories = _restrict(cfg.categories, args.tickers)
    return cfg


def _restrict(categories: Sequence[CapCategory], keep: Sequence[str]) -> tuple[CapCategory, ...]:
    owner = ticker_index(categories)
    unknown = [t for t in keep if t not in owner]
    if unknown:
        raise ConfigError("--tickers", f"not in any category: {', '.join(unknown)}")
    out = tuple(CapCategory(c.label, tuple(t for t in c.tickers if t in keep)) for c in categories)
    return tuple(c for c in out if c.tickers)


# loading helpers -----------------------------------------------------------

def _sequences(paths: Sequence[Path], cfg: PipelineConfig) -> dict[ingest.Key, ingest.SymbolSequence]:
    seqs: dict[ingest.Key, ingest.SymbolSequence] = {}
    owner = ticker_index(cfg.categories)
    for path in paths:
        if path.is_dir():
            part = ingest.read_sequence_dir(path)
            part = {k: s for k, s in part.items() if k[0] in owner}
        else:
            events = ingest.parse_stream(path, tickers=owner.keys(), exchanges=cfg.exchanges,
                                         max_errors=cfg.max_errors)
            part = ingest.segment(events, cfg.zones)
        seqs.update(part)
    days = set(cfg.days)
    return {k: seqs[k] for k in sorted(seqs) if k[1] in days}


def _json_files(paths: Sequence[Path]) -> list[Path]:
    files = []
    for p in paths:
        files += sorted(p.glob("*.json")) if p.is_dir() else [p]
    return files


def _matrices(paths: Sequence[Path]) -> list[tuple[dict, dtmc.TransitionMatrix]]:
    out = []
    for f in _json_files(paths):
        try:
            d = json.loads(f.read_text())
            out.append((d, dtmc.TransitionMatrix.from_dict(d)))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"{f}: not a transition matrix file ({exc})") from None
    if not out:
        raise DataError("no matrix files found")
    return out


def _label(meta: dict, fallback: str) -> str:
    if "category" in meta and "zone" in meta:
        return f"{meta['category']}-{meta['zone']}"
    if "ticker" in meta and "zone" in meta:
        return f"{meta['ticker']}-{meta.get('date', '')}-{meta['zone']}".replace("--", "-")
    return fallback


# subcommands ---------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = _load_config(args, require_source=False)
    owner = ticker_index(cfg.categories)
    preport = ingest.ParseReport()
    sreport = ingest.SegmentReport()
    seqs: dict[ingest.Key, ingest.SymbolSequence] = {}
    for path in args.inputs:
        events = ingest.parse_stream(path, tickers=owner.keys(), exchanges=cfg.exchanges,
                                     report=preport, max_errors=cfg.max_errors)
        seqs.update(ingest.segment(events, cfg.zones, sreport))
    ingest.write_sequences(seqs, args.out / "sequences")
    totals = ingest.count_orders(seqs.values(), cfg.categories)
    units = {c.label: len({(k[0], k[1]) for k in seqs if owner[k[0]] == c.label}) for c in cfg.categories}
    write_csv(args.out / "order_counts.csv", ["category", "kind", "count", "mean_per_ticker_day"],
              ([r["category"], r["kind"], r["count"], r["mean"]] for r in ingest.order_count_rows(totals, units)))
    write_json(args.out / "parse_report.json", {
        **preport.to_dict(), "segmented": sreport.segmented, "dropped": sreport.dropped,
        "sequences": len(seqs)})
    log.info("%d rows, %d sequences", preport.rows, len(seqs))
    return EXIT_OK


def cmd_gtest(args) -> int:
    if args.lag < 1 or args.max_lag < 0:
        raise ConfigError("--lag", "lags must be positive")
    cfg = _load_config(args, require_source=False)
    rows, assoc = [], []
    for (ticker, date, zone), seq in _sequences(args.inputs, cfg).items():
        row = {"ticker": ticker, "date": date.isoformat(), "zone": zone, "N": max(len(seq) - args.lag, 0),
               "G": None, "df": None, "p": None}
        try:
            res = gtest.g_test(seq.as_array(), args.lag)
            row.update(G=res.g, df=res.df, p=res.p_value)
        except DataError as exc:
            log.warning("%s %s %s: %s", ticker, date, zone, exc)
        rows.append(row)
        if args.max_lag:
            try:
                for a in gtest.lagged_association(seq.as_array(), args.max_lag):
                    assoc.append([ticker, date.isoformat(), zone, a.lag, a.cramers_v, a.threshold])
            except DataError as exc:
                log.warning("%s %s %s: %s", ticker, date, zone, exc)
    cols = ["ticker", "date", "zone", "N", "G", "df", "p"]
    write_csv(args.out / "gtest.csv", cols, ([r[c] if r[c] is not None else "" for c in cols] for r in rows))
    write_json(args.out / "gtest.json", rows)
    if args.max_lag:
        write_csv(args.out / "lag_association.csv", ["ticker", "date", "zone", "lag", "cramers_v", "threshold"], assoc)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _load_config(args, require_source=False)
    seqs = _sequences(args.inputs, cfg)
    if not seqs:
        raise DataError("no sequences on the configured days")
    for (ticker, date, zone), seq in seqs.items():
        counts = dtmc.accumulate(seq.as_array())
        try:
            p = dtmc.estimate(counts)
        except DataError as exc:
            log.warning("%s %s %s: %s", ticker, date, zone, exc)
            continue
        write_json(args.out / "tpm" / f"{ticker}_{date.isoformat()}_{zone}.json",
                   {"ticker": ticker, "date": date.isoformat(), "zone": zone,
                    "transitions": counts.total_transitions, **p.to_dict()})
    return EXIT_OK


def cmd_average(args) -> int:
    cfg = _load_config(args, require_source=False)
    owner = ticker_index(cfg.categories)
    groups: dict[tuple[str, str], list[dtmc.TransitionMatrix]] = {}
    for meta, p in _matrices(args.inputs):
        if "ticker" in meta and "zone" in meta:
            cat = owner.get(meta["ticker"])
            if cat is None:
                continue
            groups.setdefault((cat, meta["zone"]), []).append(p)
        else:
            groups.setdefault(("ALL", "ALL"), []).append(p)
    if not groups:
        raise DataError("no matrices belong to the configured categories")
    for (cat, zone), mats in sorted(groups.items()):
        avg = dtmc.average(mats)
        write_json(args.out / "tpm" / f"{cat}_{zone}.json",
                   {"category": cat, "zone": zone, "n_matrices": len(mats), **avg.to_dict()})
        write_csv(args.out / "tpm" / f"{cat}_{zone}_heatmap.csv", ["from_state", "to_state", "prob"],
                  heatmap_rows(avg))
    return EXIT_OK


def cmd_stationary(args) -> int:
    _load_config(args, require_source=False)
    entries, rows = [], []
    for i, (meta, p) in enumerate(_matrices(args.inputs)):
        label = _label(meta, f"m{i}")
        cls = dtmc.classify(p)
        pi = dtmc.stationary(p).pi if cls.ergodic else None
        entries.append({"label": label, "category": meta.get("category"), "zone": meta.get("zone"),
                        "chain": cls.kind.value, "pi": None if pi is None else [float(x) for x in pi]})
        rows.append([label, cls.kind.value, *(map(float, pi) if pi is not None else [""] * len(STATE_NAMES))])
    write_csv(args.out / "stationary.csv", ["label", "chain", *(f"pi_{s}" for s in STATE_NAMES)], rows)
    write_json(args.out / "stationary.json", entries)
    return EXIT_OK


def cmd_jsd(args) -> int:
    _load_config(args, require_source=False)
    try:
        entries = json.loads(args.input.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.input}: {exc}") from None
    groups: dict[str, list[dict]] = {}
    for e in entries:
        if e.get("pi") is not None:
            groups.setdefault(e.get("category") or "ALL", []).append(e)
    wrote = 0
    for cat, es in groups.items():
        if len(es) < 2:
            continue
        mat = divergence.jsd_matrix([e["pi"] for e in es], args.metric)
        labels = [e.get("zone") or e["label"] for e in es]
        path = args.out / f"jsd_{cat}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(divergence.lower_triangle_rows(mat, labels))
        wrote += 1
    if not wrote:
        raise DataError("need at least two stationary distributions in one group")
    return EXIT_OK


def cmd_embed(args) -> int:
    _load_config(args, require_source=False)
    mats = _matrices(args.inputs)
    labels = [_label(m, f"m{i}") for i, (m, _) in enumerate(mats)]
    obs = embed.normalize(embed.observations([p for _, p in mats], labels))
    if not 1 <= args.k <= len(mats) - 1:
        raise ConfigError("--k", f"must be in 1..{len(mats) - 1}")
    res = embed.pca(obs, args.k)
    gate = embed.cumulative_gate(res, args.gate)
    cols = [f"pc{i + 1}" for i in range(res.k)]
    write_csv(args.out / "pca_scores.csv", ["label", *cols],
              ([lab, *map(float, sc)] for lab, sc in zip(res.row_labels, res.scores)))
    write_json(args.out / "pca.json", {
        "k": res.k, "contribution": [float(x) for x in res.contribution],
        "cumulative": [float(x) for x in res.cumulative],
        "gate": {"threshold": gate.threshold, "passed": gate.passed, "cumulative": gate.cumulative}})
    if not gate.passed:
        log.warning("first %d components carry %.3f of the variance, below %.2f", res.k, gate.cumulative, args.gate)
    return EXIT_OK


def cmd_cluster(args) -> int:
    _load_config(args, require_source=False)
    try:
        params = clu.DbscanParams(args.eps, args.min_pts)
    except ValueError as exc:
        raise ConfigError("--eps/--min-pts", str(exc)) from None
    with open(args.input, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{args.input}: no score rows")
    header, body = rows[0], rows[1:]
    try:
        pts = np.array([[float(x) for x in r[1:]] for r in body])
        lab = clu.dbscan(pts, params)
    except ValueError as exc:
        raise DataError(f"{args.input}: {exc}") from None
    write_csv(args.out / "dbscan.csv", [*header, "cluster", "role"],
              ([*r, int(lab.labels[i]), lab.roles[i].value] for i, r in enumerate(body)))
    if len(pts) > args.min_pts:
        kd = clu.k_distance(pts, args.min_pts)
        write_csv(args.out / "k_distance.csv", ["rank", "distance"], ([i, float(d)] for i, d in enumerate(kd)))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args, require_source=False)
    if args.manifest is not None:
        try:
            d = json.loads(args.manifest.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("--manifest", str(exc)) from None
    elif cfg.synth is not None:
        d = cfg.synth.to_dict()
    else:
        d = {"categories": [{"label": c.label, "tickers": list(c.tickers)} for c in cfg.categories],
             "zones": [z.to_dict() for z in cfg.zones],
             "days": [x.isoformat() for x in cfg.days]}
    if args.seed is not None or "seed" not in d:
        d["seed"] = cfg.seed
    if args.events_per_zone is not None:
        d["events_per_zone"] = args.events_per_zone
    try:
        manifest = synth.SynthManifest.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("manifest", str(exc)) from None
    if args.tickers is not None:
        manifest.categories = _restrict(manifest.categories, args.tickers)
    synth.write_corpus(manifest, args.out)
    return EXIT_OK


def cmd_replicate(args) -> int:
    if args.config is None:
        seed = args.seed if args.seed is not None else synth.DEFAULT_SEED
        cfg = replicate_config(seed, args.events_per_zone)
        if args.exchange is not None:
            cfg.exchanges = tuple(args.exchange)
        if args.tickers is not None:
            cfg.categories = _restrict(cfg.categories, args.tickers)
            cfg.synth.categories = cfg.categories
    else:
        cfg = _load_config(args, require_source=True)
    bundle = run_pipeline(cfg, args.out)
    log.info("wrote %d files to %s", len(bundle.files), bundle.out_dir)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest, "gtest": cmd_gtest, "estimate": cmd_estimate, "average": cmd_average,
    "stationary": cmd_stationary, "jsd": cmd_jsd, "embed": cmd_embed, "cluster": cmd_cluster,
    "simulate": cmd_simulate, "replicate": cmd_replicate,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
