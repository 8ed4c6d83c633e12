"""End-to-end run: feed files (or a synthetic manifest) in, a directory of
plot-ready CSV/JSON tables out.

Outputs depend only on the config and the input bytes; rerunning a config
reproduces every file byte for byte.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import cluster as clu
from . import divergence, dtmc, embed, gtest, ingest, synth
from .domain import (
    DEFAULT_CATEGORIES,
    DEFAULT_ZONES,
    N_STATES,
    STATE_NAMES,
    TRADING_DAYS,
    CapCategory,
    OrderKind,
    TimeZoneSpec,
    check_zones,
    ticker_index,
)
from .errors import ConfigError, DataError
from .synth import DEFAULT_SEED

log = logging.getLogger(__name__)

PCA_MODES = ("pooled", "per-category")

AD_PAIRS = (("DB", "AB"), ("DA", "AA"), ("AB", "DB"), ("AA", "DA"))
FA_PAIRS = (("FB", "AA"), ("FA", "AB"))


class PipelineDataError(DataError):
    """A data error annotated with the (ticker, date, zone) it came from."""


@dataclass
class PipelineConfig:
    inputs: tuple[str, ...] = ()
    synth: synth.SynthManifest | None = None
    categories: tuple[CapCategory, ...] = DEFAULT_CATEGORIES
    zones: tuple[TimeZoneSpec, ...] = DEFAULT_ZONES
    days: tuple[dt.date, ...] = TRADING_DAYS
    exchanges: tuple[str, ...] | None = None
    seed: int = DEFAULT_SEED
    eps: float = clu.DEFAULT_EPS
    min_pts: int = clu.DEFAULT_MIN_PTS
    pca_mode: str = "pooled"
    k: int = 2
    gate: float = embed.DEFAULT_GATE
    max_lag: int = 5
    max_errors: int | None = 1000
    require_source: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if not self.days:
            raise ConfigError("days", "day list is empty")
        if self.require_source and not self.inputs and self.synth is None:
            raise ConfigError("inputs", "no input files and no synthetic manifest")
        if self.pca_mode not in PCA_MODES:
            raise ConfigError("pca_mode", f"must be one of {PCA_MODES}")
        if not self.eps > 0:
            raise ConfigError("eps", "must be positive")
        if self.min_pts < 1:
            raise ConfigError("min_pts", "must be at least 1")
        if self.k < 1:
            raise ConfigError("k", "must be at least 1")
        if not 0 < self.gate <= 1:
            raise ConfigError("gate", "must lie in (0, 1]")
        if self.max_lag < 1:
            raise ConfigError("max_lag", "must be at least 1")
        if not self.zones:
            raise ConfigError("zones", "zone list is empty")
        if not self.categories:
            raise ConfigError("categories", "category list is empty")
        check_zones(self.zones)
        ticker_index(self.categories)

    @classmethod
    def from_dict(cls, d: dict[str, Any], base_dir: Path | None = None,
                  require_source: bool = True) -> "PipelineConfig":
        known = {"inputs", "synth", "categories", "zones", "days", "exchanges", "seed", "eps",
                 "min_pts", "pca_mode", "k", "gate", "max_lag", "max_errors"}
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown field")
        kw: dict[str, Any] = {}
        if "inputs" in d:
            files = _expect(d, "inputs", list)
            paths = []
            for i, f in enumerate(files):
                if not isinstance(f, str):
                    raise ConfigError(f"inputs[{i}]", "must be a path string")
                p = Path(f)
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                paths.append(str(p))
            kw["inputs"] = tuple(paths)
        if "categories" in d:
            cats = []
            for i, c in enumerate(_expect(d, "categories", list)):
                if not isinstance(c, dict) or "label" not in c or "tickers" not in c:
                    raise ConfigError(f"categories[{i}]", "needs 'label' and 'tickers'")
                if not isinstance(c["tickers"], list) or not all(isinstance(t, str) for t in c["tickers"]):
                    raise ConfigError(f"categories[{i}].tickers", "must be a list of strings")
                cats.append(CapCategory(str(c["label"]), tuple(c["tickers"])))
            kw["categories"] = tuple(cats)
        if "zones" in d:
            zones = []
            for i, z in enumerate(_expect(d, "zones", list)):
                try:
                    zones.append(TimeZoneSpec.from_strings(z["label"], z["start"], z["end"]))
                except (KeyError, TypeError):
                    raise ConfigError(f"zones[{i}]", "needs 'label', 'start' and 'end'") from None
                except ValueError as exc:
                    raise ConfigError(f"zones[{i}]", str(exc)) from None
            kw["zones"] = tuple(zones)
        if "days" in d:
            days = []
            for i, s in enumerate(_expect(d, "days", list)):
                try:
                    days.append(dt.date.fromisoformat(s))
                except (TypeError, ValueError):
                    raise ConfigError(f"days[{i}]", f"not an ISO date: {s!r}") from None
            kw["days"] = tuple(days)
        if d.get("exchanges") is not None:
            kw["exchanges"] = tuple(_expect(d, "exchanges", list))
        for name, typ in (("seed", int), ("min_pts", int), ("k", int), ("max_lag", int), ("pca_mode", str)):
            if name in d:
                kw[name] = _expect(d, name, typ)
        for name in ("eps", "gate"):
            if name in d:
                kw[name] = float(_expect(d, name, (int, float)))
        if "max_errors" in d:
            kw["max_errors"] = None if d["max_errors"] is None else _expect(d, "max_errors", int)
        if "synth" in d and d["synth"] is not None:
            s = d["synth"]
            if isinstance(s, str):
                p = Path(s)
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                s = json.loads(p.read_text())
            if not isinstance(s, dict):
                raise ConfigError("synth", "must be an object or a manifest path")
            s = dict(s)
            s.setdefault("seed", kw.get("seed", cls.seed))
            if "categories" in kw and "categories" not in s:
                s["categories"] = [{"label": c.label, "tickers": list(c.tickers)} for c in kw["categories"]]
            if "zones" in kw and "zones" not in s:
                s["zones"] = [z.to_dict() for z in kw["zones"]]
            if "days" in kw and "days" not in s:
                s["days"] = [x.isoformat() for x in kw["days"]]
            try:
                kw["synth"] = synth.SynthManifest.from_dict(s)
            except ConfigError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError("synth", str(exc)) from None
        return cls(**kw, require_source=require_source)

    def to_dict(self) -> dict:
        return {
            "inputs": list(self.inputs),
            "synth": self.synth.to_dict() if self.synth else None,
            "categories": [{"label": c.label, "tickers": list(c.tickers)} for c in self.categories],
            "zones": [z.to_dict() for z in self.zones],
            "days": [x.isoformat() for x in self.days],
            "exchanges": list(self.exchanges) if self.exchanges is not None else None,
            "seed": self.seed,
            "eps": self.eps,
            "min_pts": self.min_pts,
            "pca_mode": self.pca_mode,
            "k": self.k,
            "gate": self.gate,
            "max_lag": self.max_lag,
            "max_errors": self.max_errors,
        }


def _expect(d: dict, key: str, typ):
    v = d[key]
    if isinstance(v, bool) and typ is not bool:
        raise ConfigError(key, f"expected {getattr(typ, '__name__', typ)}, got bool")
    if not isinstance(v, typ):
        raise ConfigError(key, f"expected {getattr(typ, '__name__', typ)}, got {type(v).__name__}")
    return v


def replicate_config(seed: int = DEFAULT_SEED, events_per_zone: int = 1000, **overrides) -> PipelineConfig:
    """Defaults mirroring the published setup, on the built-in synthetic corpus."""
    manifest = synth.SynthManifest(seed=seed, events_per_zone=events_per_zone)
    return PipelineConfig(synth=manifest, seed=seed, **overrides)


@dataclass
class ReportBundle:
    out_dir: Path
    files: list[Path] = field(default_factory=list)
    tpms: dict[tuple[str, str], dtmc.TransitionMatrix] = field(default_factory=dict)
    stationary: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)
    jsd: dict[str, np.ndarray] = field(default_factory=dict)
    pca: list[embed.PcaResult] = field(default_factory=list)
    scores: dict[str, np.ndarray] = field(default_factory=dict)
    clusters: clu.ClusterLabels | None = None
    gtests: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _fmt(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, float) else v for v in r])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def write_json(path: Path, obj: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


def heatmap_rows(p: dtmc.TransitionMatrix) -> list[tuple[str, str, float]]:
    """Long-format (from_state, to_state, prob), row-major in state order."""
    return [(STATE_NAMES[i], STATE_NAMES[j], float(p.probs[i, j]))
            for i in range(p.n) for j in range(p.n)]


def run_pipeline(cfg: PipelineConfig, out_dir: str | Path) -> ReportBundle:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(out)
    files = bundle.files

    inputs = list(cfg.inputs)
    if cfg.synth is not None:
        csv_path, man_path = synth.write_corpus(cfg.synth, out / "input")
        inputs.append(str(csv_path))
        files += [csv_path, man_path]

    owner = ticker_index(cfg.categories)
    days = set(cfg.days)
    zone_labels = [z.label for z in cfg.zones]

    # ingest: stream every file into per-key count tallies
    preport = ingest.ParseReport()
    sreport = ingest.SegmentReport()
    tallies: dict[ingest.Key, ingest.SequenceTally] = {}
    for path in inputs:
        events = ingest.parse_stream(path, tickers=owner.keys(), exchanges=cfg.exchanges,
                                     report=preport, max_errors=cfg.max_errors)
        part = ingest.tally(events, cfg.zones, sreport)
        overlap = tallies.keys() & part.keys()
        if overlap:
            raise PipelineDataError(f"{path}: keys already seen in an earlier file, e.g. {sorted(overlap)[0]}")
        tallies.update(part)
    keys = sorted(k for k in tallies if k[1] in days)
    if not keys:
        raise PipelineDataError("no events fall on the configured days and zones")

    # per ticker-day-zone: G-test and MLE matrix
    per_cell: dict[tuple[str, str], list[dtmc.TransitionMatrix]] = {}
    g_rows = []
    for key in keys:
        ticker, date, zone = key
        t = tallies[key]
        counts = dtmc.CountMatrix(t.pair_counts())
        row = {"category": owner[ticker], "ticker": ticker, "date": date.isoformat(), "zone": zone,
               "N": counts.total_transitions, "G": float("nan"), "df": 0, "p": float("nan")}
        if counts.total_transitions >= 1:
            try:
                res = gtest.g_statistic(counts.counts)
                row.update(G=res.g, df=res.df, p=res.p_value)
            except DataError as exc:
                log.warning("%s %s %s: %s", ticker, date, zone, exc)
            per_cell.setdefault((owner[ticker], zone), []).append(dtmc.estimate(counts))
        g_rows.append(row)
    bundle.gtests = g_rows
    files.append(write_csv(out / "gtest.csv", ["category", "ticker", "date", "zone", "N", "G", "df", "p"],
                           ([r["category"], r["ticker"], r["date"], r["zone"], r["N"], r["G"], r["df"], r["p"]]
                            for r in g_rows)))
    files.append(write_csv(out / "gtest_summary.csv", ["category", "ticker", "zone", "days", "N", "G", "df", "p_max"],
                           _gtest_summary(g_rows, cfg)))

    counts_by_cat = ingest.count_orders((tallies[k] for k in keys), cfg.categories)
    units = {c.label: len({(k[0], k[1]) for k in keys if owner[k[0]] == c.label}) for c in cfg.categories}
    files.append(write_csv(out / "order_counts.csv", ["category", "kind", "count", "mean_per_ticker_day"],
                           ([r["category"], r["kind"], r["count"], r["mean"]]
                            for r in ingest.order_count_rows(counts_by_cat, units))))

    # averaged matrices per (category, zone)
    cells = [(c.label, z) for c in cfg.categories for z in zone_labels if (c.label, z) in per_cell]
    for cell in cells:
        try:
            bundle.tpms[cell] = dtmc.average(per_cell[cell])
        except DataError as exc:
            raise PipelineDataError(f"{cell}: {exc}") from exc
    for (cat, zone), p in bundle.tpms.items():
        files.append(write_json(out / "tpm" / f"{cat}_{zone}.json", {"category": cat, "zone": zone,
                                                                     "n_matrices": len(per_cell[(cat, zone)]),
                                                                     **p.to_dict()}))
        files.append(write_csv(out / "tpm" / f"{cat}_{zone}_heatmap.csv", ["from_state", "to_state", "prob"],
                               heatmap_rows(p)))

    files.append(write_csv(out / "doi.csv", ["category", "zone", *STATE_NAMES],
                           ([c, z, *map(float, dtmc.degree_of_inertia(p))] for (c, z), p in bundle.tpms.items())))
    files.append(_pair_series(out / "transitions_add_delete.csv", bundle.tpms, AD_PAIRS))
    files.append(_pair_series(out / "transitions_fill_add.csv", bundle.tpms, FA_PAIRS))

    # stationary distributions and per-category JSD
    st_rows = []
    for (cat, zone), p in bundle.tpms.items():
        cls = dtmc.classify(p)
        if cls.ergodic:
            pi = dtmc.stationary(p).pi
            bundle.stationary[(cat, zone)] = pi
            st_rows.append([zone, cat, cls.kind.value, *map(float, pi)])
        else:
            st_rows.append([zone, cat, cls.kind.value, *([float("nan")] * N_STATES)])
    st_rows.sort(key=lambda r: (zone_labels.index(r[0]), [c.label for c in cfg.categories].index(r[1])))
    files.append(write_csv(out / "stationary.csv", ["zone", "category", "chain", *(f"pi_{s}" for s in STATE_NAMES)],
                           st_rows))
    for c in cfg.categories:
        zs = [z for z in zone_labels if (c.label, z) in bundle.stationary]
        if len(zs) < 2:
            continue
        mat = divergence.jsd_matrix([bundle.stationary[(c.label, z)] for z in zs])
        bundle.jsd[c.label] = mat
        path = out / f"jsd_{c.label}.csv"
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(divergence.lower_triangle_rows(mat, zs))
        path.write_text(buf.getvalue())
        files.append(path)

    # PCA + DBSCAN
    labels = [f"{c}-{z}" for c, z in bundle.tpms]
    mats = list(bundle.tpms.values())
    pca_info = []
    if cfg.pca_mode == "pooled":
        groups = [(None, list(range(len(mats))))]
    else:
        groups = [(c.label, [i for i, (cc, _) in enumerate(bundle.tpms) if cc == c.label]) for c in cfg.categories]
    score_rows: list[tuple[str, np.ndarray]] = []
    for name, idx in groups:
        if len(idx) < 2:
            continue
        obs = embed.normalize(embed.observations([mats[i] for i in idx], [labels[i] for i in idx]))
        k = min(cfg.k, len(idx) - 1)
        res = embed.pca(obs, k)
        gate = embed.cumulative_gate(res, cfg.gate)
        bundle.pca.append(res)
        pca_info.append({"group": name or "pooled", "k": res.k,
                         "contribution": [float(x) for x in res.contribution[: res.k]],
                         "cumulative": float(res.cumulative[res.k - 1]),
                         "gate_threshold": cfg.gate, "gate_passed": gate.passed})
        for lab, sc in zip(res.row_labels, res.scores):
            score_rows.append((lab, sc))
    kmax = max((len(s) for _, s in score_rows), default=0)
    pc_cols = [f"pc{i + 1}" for i in range(kmax)]
    files.append(write_csv(out / "pca_scores.csv", ["label", *pc_cols],
                           ([lab, *map(float, sc)] for lab, sc in score_rows)))
    bundle.scores = {lab: sc for lab, sc in score_rows}
    cluster_info: dict[str, Any] = {}
    if score_rows and all(len(s) == kmax for _, s in score_rows):
        pts = np.array([sc for _, sc in score_rows])
        lab = clu.dbscan(pts, clu.DbscanParams(cfg.eps, cfg.min_pts))
        bundle.clusters = lab
        files.append(write_csv(out / "dbscan.csv", ["label", *pc_cols, "cluster", "role"],
                               ([score_rows[i][0], *map(float, pts[i]), int(lab.labels[i]), lab.roles[i].value]
                                for i in range(len(pts)))))
        cluster_info = {
            "eps": cfg.eps, "min_pts": cfg.min_pts,
            "clusters": {str(c): [score_rows[i][0] for i in lab.members(c)] for c in range(lab.n_clusters)},
            "noise": [score_rows[i][0] for i in lab.noise],
        }
        if len(pts) > cfg.min_pts:
            kd = clu.k_distance(pts, cfg.min_pts)
            files.append(write_csv(out / "k_distance.csv", ["rank", "distance"],
                                   ([i, float(d)] for i, d in enumerate(kd))))

    summary = {
        "parse": {k: v for k, v in preport.to_dict().items() if k != "errors"},
        "malformed_sample": preport.to_dict()["errors"][:20],
        "segment": {"segmented": sreport.segmented, "dropped": sreport.dropped},
        "conservation": preport.rows == sreport.segmented + sreport.dropped + preport.malformed + preport.filtered,
        "keys": len(keys),
        "matrices": {f"{c}-{z}": len(v) for (c, z), v in per_cell.items()},
        "pca": pca_info,
        "dbscan": cluster_info,
    }
    if cfg.synth is not None:
        summary["truth_error"] = truth_errors(bundle.tpms, cfg.synth)
    summary["config"] = cfg.to_dict()
    bundle.summary = summary
    files.append(write_json(out / "run_manifest.json", summary))
    return bundle


def truth_errors(tpms: dict[tuple[str, str], dtmc.TransitionMatrix], manifest: synth.SynthManifest,
                 min_mass: float = 0.01) -> dict[str, float]:
    """Max cell error per matrix against ground truth, on rows with stationary mass >= ``min_mass``."""
    out = {}
    for cell, p in tpms.items():
        truth = manifest.tpms[cell]
        pi = dtmc.stationary(truth).pi
        rows = pi >= min_mass
        out[f"{cell[0]}-{cell[1]}"] = float(np.max(np.abs(p.probs[rows] - truth.probs[rows])))
    return out


def _pair_series(path: Path, tpms, pairs) -> Path:
    header = ["category", "zone", *(f"{a}->{b}" for a, b in pairs)]
    return write_csv(path, header, (
        [c, z, *(float(p.probs[OrderKind[a], OrderKind[b]]) for a, b in pairs)]
        for (c, z), p in tpms.items()))


def _gtest_summary(rows: list[dict], cfg: PipelineConfig):
    zone_order = {z.label: i for i, z in enumerate(cfg.zones)}
    groups: dict[tuple[str, str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["category"], r["ticker"], r["zone"]), []).append(r)
    cat_order = {c.label: i for i, c in enumerate(cfg.categories)}
    for (cat, ticker, zone) in sorted(groups, key=lambda k: (cat_order[k[0]], k[1], zone_order[k[2]])):
        g = groups[(cat, ticker, zone)]
        ok = [r for r in g if not math.isnan(r["G"])]
        yield [cat, ticker, zone, len(g),
               float(np.mean([r["N"] for r in g])),
               float(np.mean([r["G"] for r in ok])) if ok else float("nan"),
               max((r["df"] for r in ok), default=0),
               max((r["p"] for r in ok), default=float("nan"))]
