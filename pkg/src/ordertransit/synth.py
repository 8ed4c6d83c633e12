"""Seeded synthetic order flow from known transition matrices.

All randomness goes through ``numpy.random.Generator`` with the PCG64 bit
generator. Per-sequence seeds are derived from a master seed and the
sequence's position via ``numpy.random.SeedSequence``, so any single
sequence can be regenerated on its own and results do not depend on
generation order.
"""

from __future__ import annotations

import datetime as dt
import io
import json
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from .domain import (
    DEFAULT_CATEGORIES,
    DEFAULT_ZONES,
    N_STATES,
    TRADING_DAYS,
    CapCategory,
    OrderKind,
    TimeZoneSpec,
    format_time,
)
from .dtmc import TransitionMatrix, classify, stationary
from .errors import ConfigError, NotErgodic, ZoneTooShort
from .ingest import SymbolSequence

DEFAULT_SEED = 20181107
HEADER = "Date,Timestamp,OrderId,EventType,Ticker,Price,Quantity,Exchange\n"
_WIRE = [k.wire_name for k in OrderKind]
_ZERO_PRICE = {int(OrderKind.DB), int(OrderKind.DA)}


def rng_for(seed: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *path])))


class ChainSampler:
    """Precomputed cumulative rows and stationary law for one ergodic chain."""

    def __init__(self, p: TransitionMatrix):
        cls = classify(p)
        if not cls.ergodic:
            raise NotErgodic(cls)
        cum = np.cumsum(p.probs, axis=1)
        for i in p.support:
            cum[i, -1] = 1.0
        self.rows = [list(r) for r in cum]
        pi_cum = np.cumsum(stationary(p).pi)
        pi_cum[-1] = 1.0
        self.pi_cum = pi_cum

    def draw(self, n: int, rng: np.random.Generator, start: int | None = None) -> bytearray:
        if n < 1:
            raise ValueError("n must be positive")
        s = int(np.searchsorted(self.pi_cum, rng.random(), side="right")) if start is None else int(start)
        out = bytearray(n)
        out[0] = s
        rows = self.rows
        for i, x in enumerate(rng.random(n - 1).tolist(), start=1):
            s = bisect_right(rows[s], x)
            out[i] = s
        return out


def simulate(
    p: TransitionMatrix | ChainSampler,
    n: int,
    seed: int,
    start: int | None = None,
    *,
    ticker: str = "SYN",
    date: dt.date = TRADING_DAYS[0],
    zone: str = "T1",
) -> SymbolSequence:
    """Draw ``n`` states from the chain; the first from its stationary law unless ``start``."""
    sampler = p if isinstance(p, ChainSampler) else ChainSampler(p)
    return SymbolSequence(ticker, date, zone, sampler.draw(n, rng_for(seed), start))


def render_csv(
    seq: SymbolSequence,
    ticker: str,
    date: dt.date,
    zone: TimeZoneSpec,
    seed: int,
    *,
    exchange: str = "NASDAQ",
    first_order_id: int = 10_000,
) -> bytes:
    """Feed rows (no header) for ``seq``, timestamps evenly spread over ``zone``.

    Timestamp i is ``start + floor(i * capacity / n)``, strictly increasing
    while ``n`` fits in the zone's millisecond capacity.
    """
    n = len(seq)
    cap = zone.capacity_ms
    if n > cap:
        raise ZoneTooShort(f"{n} events do not fit in {cap} ms of zone {zone.label}")
    if n == 0:
        return b""
    rng = rng_for(seed)
    states = np.frombuffer(bytes(seq.symbols), dtype=np.uint8)
    stamps = zone.start + (np.arange(n, dtype=np.int64) * cap) // n
    secs, ms = np.divmod(stamps, 1000)
    mins, sec = np.divmod(secs, 60)
    hour, minute = np.divmod(mins, 60)
    mid = np.maximum(10_000 + np.cumsum(rng.integers(-1, 2, n)), 100)
    offset = rng.integers(0, 20, n)
    cents = np.where(states % 2 == 0, mid - offset, mid + offset)
    cents[np.isin(states, list(_ZERO_PRICE))] = 0
    qty = rng.integers(1, 11, n) * 100
    oids = first_order_id + np.cumsum(rng.integers(1, 50, n))
    prefix = f"{date.isoformat()},"
    mid_part = [f",{w},{ticker}," for w in _WIRE]
    suffix = f",{exchange}\n"
    lines = [
        f"{prefix}{h:02d}:{m:02d}:{s:02d}.{x:03d},{o}{mid_part[k]}{c // 100}.{c % 100:02d},{q}{suffix}"
        if c else
        f"{prefix}{h:02d}:{m:02d}:{s:02d}.{x:03d},{o}{mid_part[k]}0,{q}{suffix}"
        for h, m, s, x, o, k, c, q in zip(hour.tolist(), minute.tolist(), sec.tolist(), ms.tolist(),
                                          oids.tolist(), states.tolist(), cents.tolist(), qty.tolist())
    ]
    return "".join(lines).encode()


# Marginal event mix loosely shaped like a busy NASDAQ book: adds and
# deletes dominate, partial executions and cancels are rare.
BASE_MIX = np.array([0.250, 0.245, 0.235, 0.230, 0.011, 0.010, 0.0045, 0.004, 0.0012, 0.0011])

_PARTNER = {
    OrderKind.AB: OrderKind.DB,
    OrderKind.AA: OrderKind.DA,
    OrderKind.DB: OrderKind.AB,
    OrderKind.DA: OrderKind.AA,
    OrderKind.FB: OrderKind.AA,
    OrderKind.FA: OrderKind.AB,
}


def pattern_tpm(inertia: Sequence[float], partner: Sequence[float], mix: np.ndarray = BASE_MIX) -> TransitionMatrix:
    """Row i = (1 - d_i - a_i) * mix + d_i * e_i + a_i * e_partner(i).

    Every entry of ``mix`` is positive, so the chain is strictly positive
    and hence ergodic.
    """
    mix = np.asarray(mix, dtype=np.float64)
    mix = mix / mix.sum()
    p = np.zeros((N_STATES, N_STATES))
    for i in range(N_STATES):
        d, a = float(inertia[i]), float(partner[i])
        if d < 0 or a < 0 or d + a >= 1:
            raise ValueError(f"row {i}: bad inertia/partner weights {d}, {a}")
        p[i] = (1.0 - d - a) * mix
        p[i, i] += d
        if i in _PARTNER:
            p[i, _PARTNER[OrderKind(i)]] += a
        else:
            p[i, i] += a
    return TransitionMatrix(p)


# (limit-add DoI, delete DoI, fill DoI, add->delete, delete->add, fill->opposite add)
_CATEGORY_BASE = {
    "HMC": (0.30, 0.20, 0.20, 0.04, 0.08, 0.06),
    "MMC": (0.28, 0.19, 0.22, 0.05, 0.10, 0.07),
    "LMC": (0.24, 0.16, 0.18, 0.07, 0.13, 0.09),
}
# additive adjustments per zone, same tuple layout
_ZONE_SHIFT = {
    "T1": (0.25, -0.05, -0.08, -0.03, -0.06, 0.05),
    "T2": (0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    "T3": (0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    "T4": (0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    "T5": (0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    "T6": (0.05, 0.08, 0.40, 0.02, 0.02, -0.05),
}
# per-category twist on the opening/closing shifts so that the three T1
# (and three T6) matrices differ from one another as well as from midday
_CATEGORY_EDGE = {
    "HMC": {"T1": (0.10, 0.0, 0.0, 0.0, 0.0, 0.0), "T6": (0.0, 0.0, 0.15, 0.0, 0.0, 0.0)},
    "MMC": {"T1": (-0.05, 0.15, 0.0, 0.0, 0.0, 0.0), "T6": (0.0, -0.08, -0.10, 0.06, 0.06, 0.0)},
    "LMC": {"T1": (-0.10, -0.05, 0.12, 0.05, 0.0, 0.0), "T6": (0.15, 0.10, -0.05, 0.0, 0.0, 0.0)},
}


def pattern_tpms(categories: Sequence[str] = ("HMC", "MMC", "LMC"),
                 zones: Sequence[str] = ("T1", "T2", "T3", "T4", "T5", "T6")) -> dict[tuple[str, str], TransitionMatrix]:
    """Ground-truth matrices with identical midday (T2-T5) dynamics per category
    and distinct opening (T1) and closing (T6) dynamics."""
    out = {}
    for ci, cat in enumerate(categories):
        base = np.array(_CATEGORY_BASE.get(cat, _CATEGORY_BASE["HMC"]))
        for zone in zones:
            v = base + np.array(_ZONE_SHIFT.get(zone, (0.0,) * 6))
            v = v + np.array(_CATEGORY_EDGE.get(cat, {}).get(zone, (0.0,) * 6))
            v = np.clip(v, 0.01, 0.9)
            add_d, del_d, fill_d, a2d, d2a, f2a = v
            inertia = [add_d, add_d, del_d, del_d, fill_d, fill_d, 0.05, 0.05, 0.02, 0.02]
            partner = [a2d, a2d, d2a, d2a, f2a, f2a, 0.0, 0.0, 0.0, 0.0]
            out[(cat, zone)] = pattern_tpm(inertia, partner)
    return out


@dataclass
class SynthManifest:
    """Everything needed to regenerate a synthetic corpus and check estimates against it."""

    seed: int = DEFAULT_SEED
    days: tuple[dt.date, ...] = TRADING_DAYS
    categories: tuple[CapCategory, ...] = DEFAULT_CATEGORIES
    zones: tuple[TimeZoneSpec, ...] = DEFAULT_ZONES
    events_per_zone: int = 1000
    tpms: dict[tuple[str, str], TransitionMatrix] = field(default_factory=dict)
    exchange: str = "NASDAQ"

    def __post_init__(self):
        if not self.tpms:
            self.tpms = pattern_tpms([c.label for c in self.categories], [z.label for z in self.zones])
        for c in self.categories:
            for z in self.zones:
                if (c.label, z.label) not in self.tpms:
                    raise ConfigError(f"manifest.tpms.{c.label}.{z.label}", "missing ground-truth matrix")
        if self.events_per_zone < 1:
            raise ConfigError("manifest.events_per_zone", "must be positive")

    def tasks(self) -> Iterator[tuple[tuple[int, int, int, int], CapCategory, str, dt.date, TimeZoneSpec]]:
        """(seed path, category, ticker, day, zone) in feed order: ticker, day, zone."""
        for ci, cat in enumerate(self.categories):
            for ti, ticker in enumerate(cat.tickers):
                for di, day in enumerate(self.days):
                    for zi, zone in enumerate(self.zones):
                        yield (ci, ti, di, zi), cat, ticker, day, zone

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "days": [d.isoformat() for d in self.days],
            "categories": [{"label": c.label, "tickers": list(c.tickers)} for c in self.categories],
            "zones": [z.to_dict() for z in self.zones],
            "events_per_zone": self.events_per_zone,
            "exchange": self.exchange,
            "tpms": [
                {"category": c, "zone": z, **m.to_dict()} for (c, z), m in sorted(self.tpms.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthManifest":
        tpms = {(t["category"], t["zone"]): TransitionMatrix.from_dict(t) for t in d.get("tpms", [])}
        kwargs = {}
        if "days" in d:
            kwargs["days"] = tuple(dt.date.fromisoformat(x) for x in d["days"])
        if "categories" in d:
            kwargs["categories"] = tuple(CapCategory(c["label"], tuple(c["tickers"])) for c in d["categories"])
        if "zones" in d:
            kwargs["zones"] = tuple(TimeZoneSpec.from_strings(z["label"], z["start"], z["end"]) for z in d["zones"])
        return cls(
            seed=int(d.get("seed", cls.seed)),
            events_per_zone=int(d.get("events_per_zone", cls.events_per_zone)),
            tpms=tpms,
            exchange=d.get("exchange", "NASDAQ"),
            **kwargs,
        )


def generate(manifest: SynthManifest, out: IO[bytes], *, header: bool = True) -> dict[tuple[str, dt.date, str], SymbolSequence]:
    """Write the whole corpus as one feed file; return the drawn sequences.

    Rows are ordered by ticker, then day, then zone, so timestamps never go
    backwards within a ticker and day.
    """
    if header:
        out.write(HEADER.encode())
    drawn = {}
    oid = 10_000
    samplers = {cell: ChainSampler(p) for cell, p in manifest.tpms.items()}
    for (ci, ti, di, zi), cat, ticker, day, zone in manifest.tasks():
        seq = simulate(samplers[(cat.label, zone.label)], manifest.events_per_zone,
                       seed=_task_seed(manifest.seed, ci, ti, di, zi, 0),
                       ticker=ticker, date=day, zone=zone.label)
        out.write(render_csv(seq, ticker, day, zone, _task_seed(manifest.seed, ci, ti, di, zi, 1),
                             exchange=manifest.exchange, first_order_id=oid))
        oid += 50 * manifest.events_per_zone
        drawn[seq.key] = seq
    return drawn


def _task_seed(master: int, *path: int) -> int:
    return int(np.random.SeedSequence([master, *path]).generate_state(1, dtype=np.uint64)[0])


def write_corpus(manifest: SynthManifest, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``orders.csv`` and ``manifest.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "orders.csv"
    with open(csv_path, "wb") as fh:
        generate(manifest, fh)
    man_path = out_dir / "manifest.json"
    man_path.write_text(json.dumps(manifest.to_dict(), indent=1, sort_keys=True) + "\n")
    return csv_path, man_path


def corpus_bytes(manifest: SynthManifest) -> bytes:
    buf = io.BytesIO()
    generate(manifest, buf)
    return buf.getvalue()
