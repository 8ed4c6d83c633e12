"""Streaming reader for the eight-column tick feed and per-zone segmentation.

Rows flow through as :class:`~ordertransit.domain.OrderEvent` values; the
file is never held in memory. :func:`segment` materializes compact symbol
sequences (one byte per event), :func:`tally` keeps only transition counts
per ``(ticker, date, zone)`` key for files too large for that.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

from .domain import (
    DEFAULT_ZONES,
    N_STATES,
    STATE_NAMES,
    WIRE_TO_KIND,
    CapCategory,
    OrderEvent,
    TimeZoneSpec,
    ZoneLocator,
    ticker_index,
)
from .errors import MalformedRow, OutOfOrderTimestamp, TooManyErrors

log = logging.getLogger(__name__)

Key = tuple[str, dt.date, str]
Source = Union[IO[bytes], IO[str], Iterable[str], str, Path]

# Only the first few malformed rows are kept verbatim; the count is exact.
MAX_KEPT_ERRORS = 1000


@dataclass
class ParseReport:
    rows: int = 0
    parsed: int = 0
    malformed: int = 0
    filtered: int = 0
    header: bool = False
    errors: list[MalformedRow] = field(default_factory=list)

    def add_error(self, err: MalformedRow) -> None:
        self.malformed += 1
        if len(self.errors) < MAX_KEPT_ERRORS:
            self.errors.append(err)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "parsed": self.parsed,
            "malformed": self.malformed,
            "filtered": self.filtered,
            "header": self.header,
            "errors": [{"line": e.line, "reason": e.reason} for e in self.errors],
        }


@dataclass
class SegmentReport:
    segmented: int = 0
    dropped: int = 0


@dataclass
class SymbolSequence:
    """Feed-ordered state indices for one ticker, day and zone."""

    ticker: str
    date: dt.date
    zone: str
    symbols: bytearray = field(default_factory=bytearray)

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def key(self) -> Key:
        return (self.ticker, self.date, self.zone)

    def as_array(self) -> np.ndarray:
        return np.frombuffer(bytes(self.symbols), dtype=np.uint8).astype(np.intp)

    def kind_counts(self) -> np.ndarray:
        return np.bincount(self.as_array(), minlength=N_STATES).astype(np.int64)

    @classmethod
    def from_states(cls, states: Iterable[int], ticker: str = "SYN",
                    date: dt.date = dt.date(2018, 11, 7), zone: str = "T1") -> "SymbolSequence":
        data = bytearray(int(s) for s in states)
        if any(b >= N_STATES for b in data):
            raise ValueError("state index out of range")
        return cls(ticker, date, zone, data)


@dataclass
class SequenceTally:
    """Running transition counts for one key; memory independent of length."""

    ticker: str
    date: dt.date
    zone: str
    length: int = 0
    last: int = -1
    pairs: list[int] = field(default_factory=lambda: [0] * (N_STATES * N_STATES))
    kinds: list[int] = field(default_factory=lambda: [0] * N_STATES)

    def push(self, s: int) -> None:
        if self.last >= 0:
            self.pairs[self.last * N_STATES + s] += 1
        self.kinds[s] += 1
        self.last = s
        self.length += 1

    def __len__(self) -> int:
        return self.length

    @property
    def key(self) -> Key:
        return (self.ticker, self.date, self.zone)

    def pair_counts(self) -> np.ndarray:
        return np.asarray(self.pairs, dtype=np.int64).reshape(N_STATES, N_STATES)

    def kind_counts(self) -> np.ndarray:
        return np.asarray(self.kinds, dtype=np.int64)


def _text_lines(source: Source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", newline="", encoding="utf-8") as fh:
            yield from fh
        return
    if hasattr(source, "read"):
        probe = source.read(0)
        if isinstance(probe, bytes):
            yield from io.TextIOWrapper(source, encoding="utf-8", newline="")
            return
        yield from source
        return
    for line in source:
        yield line.decode("utf-8") if isinstance(line, bytes) else line


def parse_stream(
    source: Source,
    tickers: Iterable[str] | None = None,
    exchanges: Iterable[str] | None = None,
    report: ParseReport | None = None,
    max_errors: int | None = None,
) -> Iterator[OrderEvent]:
    """Yield feed rows in file order.

    ``source`` may be a path, a binary or text file object, or any iterable
    of lines. A leading row whose first field has no digits is taken as a
    header. Rows that fail to parse are recorded in ``report`` and skipped;
    once more than ``max_errors`` have been seen, :class:`TooManyErrors`
    is raised. Rows excluded by the ticker or exchange filter are counted
    as ``filtered`` without being validated.
    """
    report = report if report is not None else ParseReport()
    ticker_set = frozenset(tickers) if tickers is not None else None
    exchange_set = frozenset(exchanges) if exchanges is not None else None
    date_cache: dict[str, dt.date] = {}
    hms_cache: dict[str, int] = {}
    kinds = WIRE_TO_KIND
    make = tuple.__new__
    first = True

    for lineno, row in enumerate(csv.reader(_text_lines(source), skipinitialspace=True), start=1):
        if len(row) != 8:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
        if first:
            first = False
            if not any(c.isdigit() for c in row[0]):
                report.header = True
                continue
        report.rows += 1
        if len(row) != 8:
            _fail(report, lineno, f"expected 8 fields, got {len(row)}", max_errors)
            continue
        date_s, time_s, oid_s, wire, ticker, price_s, qty_s, exchange = row
        if ticker_set is not None and ticker not in ticker_set:
            report.filtered += 1
            continue
        if exchange_set is not None and exchange not in exchange_set:
            report.filtered += 1
            continue
        date = date_cache.get(date_s)
        if date is None:
            date = _parse_date(date_s, date_cache)
            if date is None:
                _fail(report, lineno, f"bad date {date_s!r}", max_errors)
                continue
        hms, dot, frac = time_s.partition(".")
        base = hms_cache.get(hms)
        if base is not None and len(frac) == 3 and frac.isdigit():
            ts = base + int(frac)
        else:
            ts = _parse_ms(time_s, hms_cache)
            if ts is None:
                _fail(report, lineno, f"bad timestamp {time_s!r}", max_errors)
                continue
        kind = kinds.get(wire)
        if kind is None:
            _fail(report, lineno, f"unknown event type {wire!r}", max_errors)
            continue
        if not ticker:
            _fail(report, lineno, "empty ticker", max_errors)
            continue
        try:
            order_id = int(oid_s)
            qty = int(qty_s)
        except ValueError:
            _fail(report, lineno, f"bad integer field in order id {oid_s!r} / quantity {qty_s!r}", max_errors)
            continue
        if qty < 1:
            _fail(report, lineno, f"quantity must be positive, got {qty}", max_errors)
            continue
        try:
            price = Decimal(price_s)
        except InvalidOperation:
            price = None
        if price is None or not price.is_finite() or (price.is_signed() and price):
            _fail(report, lineno, f"bad price {price_s!r}", max_errors)
            continue
        report.parsed += 1
        yield make(OrderEvent, (date, ts, order_id, kind, ticker, price, qty, exchange, lineno))


def _fail(report: ParseReport, line: int, reason: str, max_errors: int | None) -> None:
    report.add_error(MalformedRow(line, reason))
    if max_errors is not None and report.malformed > max_errors:
        raise TooManyErrors(report.errors)


def _parse_date(text: str, cache: dict[str, dt.date]) -> dt.date | None:
    d = cache.get(text)
    if d is None:
        if len(text) != 10:
            return None
        try:
            d = dt.date.fromisoformat(text)
        except ValueError:
            return None
        if len(cache) > 4096:
            cache.clear()
        cache[text] = d
    return d


def _parse_ms(text: str, cache: dict[str, int]) -> int | None:
    hms, dot, frac = text.partition(".")
    base = cache.get(hms)
    if base is None:
        parts = hms.split(":")
        if (len(parts) != 3 or not 1 <= len(parts[0]) <= 2 or len(parts[1]) != 2
                or len(parts[2]) != 2 or not all(p.isdigit() for p in parts)):
            return None
        h, m, s = int(parts[0]), int(parts[1]), int(parts[2])
        if h > 23 or m > 59 or s > 59:
            return None
        base = ((h * 60 + m) * 60 + s) * 1000
        cache[hms] = base  # at most 86400 entries
    if not dot:
        return base
    if not frac or not frac.isdigit():
        return None
    # sub-millisecond digits are truncated
    return base + int(frac[:3].ljust(3, "0"))


def _route(events: Iterable[OrderEvent], zones: Sequence[TimeZoneSpec], report: SegmentReport, make_bucket):
    """Shared loop for :func:`segment` and :func:`tally`.

    Calls ``make_bucket(key)`` for each new key and yields ``(bucket, kind)``
    per retained event. Raises :class:`OutOfOrderTimestamp` when a ticker's
    timestamp goes backwards within a day. Zone and key lookups are cached
    for runs of events from the same ticker, day and zone.
    """
    locate = ZoneLocator(zones)
    last_ts: dict[tuple[str, dt.date], int] = {}
    buckets: dict[Key, object] = {}
    cur_ticker = cur_date = None
    prev_ts = -1
    z_lo, z_hi = 1, 0
    bucket = None
    for ev in events:
        date, ts, _oid, kind, ticker, _px, _qty, _ex, line = ev
        if ticker != cur_ticker or date != cur_date:
            if cur_ticker is not None:
                last_ts[(cur_ticker, cur_date)] = prev_ts
            cur_ticker, cur_date = ticker, date
            prev_ts = last_ts.get((ticker, date), -1)
            z_lo, z_hi = 1, 0
        if ts < prev_ts:
            raise OutOfOrderTimestamp(ticker, date, line)
        prev_ts = ts
        if not z_lo <= ts <= z_hi:
            z = locate(ts)
            if z is None:
                report.dropped += 1
                z_lo, z_hi = 1, 0
                continue
            z_lo, z_hi = z.start, z.end
            key = (ticker, date, z.label)
            bucket = buckets.get(key)
            if bucket is None:
                bucket = buckets[key] = make_bucket(key)
        report.segmented += 1
        yield bucket, kind


def segment(
    events: Iterable[OrderEvent],
    zones: Sequence[TimeZoneSpec] = DEFAULT_ZONES,
    report: SegmentReport | None = None,
) -> dict[Key, SymbolSequence]:
    """Bucket events into per-(ticker, date, zone) sequences, keeping feed order.

    Events outside every zone are dropped and counted in ``report``.
    """
    report = report if report is not None else SegmentReport()
    out: dict[Key, SymbolSequence] = {}

    def make(key):
        seq = out[key] = SymbolSequence(*key)
        return seq.symbols

    for symbols, kind in _route(events, zones, report, make):
        symbols.append(kind)
    return out


def tally(
    events: Iterable[OrderEvent],
    zones: Sequence[TimeZoneSpec] = DEFAULT_ZONES,
    report: SegmentReport | None = None,
) -> dict[Key, SequenceTally]:
    """Like :func:`segment` but keeps only pair and kind counts per key."""
    report = report if report is not None else SegmentReport()
    out: dict[Key, SequenceTally] = {}

    def make(key):
        t = out[key] = SequenceTally(*key)
        return t

    for t, kind in _route(events, zones, report, make):
        last = t.last
        if last >= 0:
            t.pairs[last * N_STATES + kind] += 1
        t.kinds[kind] += 1
        t.last = kind
        t.length += 1
    return out


def count_orders(
    sequences: Iterable[SymbolSequence | SequenceTally],
    categories: Sequence[CapCategory],
) -> dict[str, np.ndarray]:
    """Total events per state for each category. Unlisted tickers are ignored."""
    owner = ticker_index(categories)
    totals = {c.label: np.zeros(N_STATES, dtype=np.int64) for c in categories}
    for seq in sequences:
        cat = owner.get(seq.ticker)
        if cat is not None:
            totals[cat] += seq.kind_counts()
    return totals


def write_sequences(sequences: Mapping[Key, SymbolSequence], out_dir: str | Path) -> list[Path]:
    """Persist each sequence as ``<ticker>_<date>_<zone>.seq`` plus a JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for key in sorted(sequences):
        seq = sequences[key]
        stem = f"{seq.ticker}_{seq.date.isoformat()}_{seq.zone}"
        path = out_dir / f"{stem}.seq"
        path.write_text("".join(f"{s}\n" for s in seq.symbols))
        meta = {"ticker": seq.ticker, "date": seq.date.isoformat(), "zone": seq.zone, "length": len(seq)}
        (out_dir / f"{stem}.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
        written.append(path)
    return written


def read_sequence(path: str | Path) -> SymbolSequence:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    states = [int(x) for x in path.read_text().split()]
    seq = SymbolSequence.from_states(states, meta["ticker"], dt.date.fromisoformat(meta["date"]), meta["zone"])
    if len(seq) != meta["length"]:
        raise MalformedRow(0, f"{path}: sidecar length {meta['length']} != {len(seq)}")
    return seq


def read_sequence_dir(path: str | Path) -> dict[Key, SymbolSequence]:
    return {s.key: s for s in (read_sequence(p) for p in sorted(Path(path).glob("*.seq")))}


def order_count_rows(totals: Mapping[str, np.ndarray], n_units: Mapping[str, int] | None = None) -> list[dict]:
    """Long-format rows (category, kind, count, mean) for the order-count table.

    ``mean`` divides by ``n_units[category]`` (ticker-days) when given.
    """
    rows = []
    for cat, counts in totals.items():
        denom = (n_units or {}).get(cat, 0)
        for name, c in zip(STATE_NAMES, counts):
            rows.append({"category": cat, "kind": name, "count": int(c),
                         "mean": (float(c) / denom) if denom else float("nan")})
    return rows
