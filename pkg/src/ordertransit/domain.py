"""Shared vocabulary: the ten order states, parsed feed rows, intraday
time-zones and market-cap groups.

Times of day are carried as integer milliseconds since midnight. Every
matrix in the package is indexed by :class:`OrderKind` value.
"""

from __future__ import annotations

import datetime as dt
from bisect import bisect_right
from dataclasses import dataclass, field
from decimal import Decimal
from enum import IntEnum
from typing import Iterable, NamedTuple, Sequence

from .errors import ConfigError, UnknownEventType

N_STATES = 10
MS_PER_SECOND = 1000
MS_PER_MINUTE = 60 * MS_PER_SECOND
MS_PER_HOUR = 60 * MS_PER_MINUTE


class OrderKind(IntEnum):
    AB = 0
    AA = 1
    DB = 2
    DA = 3
    FB = 4
    FA = 5
    EB = 6
    EA = 7
    CB = 8
    CA = 9

    @property
    def wire_name(self) -> str:
        return _CODE_TO_WIRE[self]

    @classmethod
    def from_wire(cls, wire: str) -> "OrderKind":
        return parse_order_kind(wire)


_CODE_TO_WIRE = {
    OrderKind.AB: "ADD-BID",
    OrderKind.AA: "ADD-ASK",
    OrderKind.DB: "DELETE-BID",
    OrderKind.DA: "DELETE-ASK",
    OrderKind.FB: "FILL-BID",
    OrderKind.FA: "FILL-ASK",
    OrderKind.EB: "EXECUTE-BID",
    OrderKind.EA: "EXECUTE-ASK",
    OrderKind.CB: "CANCEL-BID",
    OrderKind.CA: "CANCEL-ASK",
}
WIRE_TO_KIND: dict[str, OrderKind] = {w: k for k, w in _CODE_TO_WIRE.items()}
STATE_NAMES: tuple[str, ...] = tuple(k.name for k in OrderKind)


def parse_order_kind(wire: str) -> OrderKind:
    """Map an exact, case-sensitive feed event name to its state."""
    try:
        return WIRE_TO_KIND[wire]
    except (KeyError, TypeError):
        raise UnknownEventType(wire) from None


def parse_time(text: str) -> int:
    """Parse ``H:MM:SS.mmm`` or ``HH:MM:SS.mmm`` into milliseconds of day.

    Digits beyond the third fractional place are truncated.
    """
    hms, dot, frac = text.partition(".")
    parts = hms.split(":")
    if len(parts) != 3 or not (1 <= len(parts[0]) <= 2) or len(parts[1]) != 2 or len(parts[2]) != 2:
        raise ValueError(f"bad time {text!r}")
    if dot and not (frac and frac.isdigit()):
        raise ValueError(f"bad fractional seconds in {text!r}")
    if not all(p.isdigit() for p in parts):
        raise ValueError(f"bad time {text!r}")
    h, m, s = int(parts[0]), int(parts[1]), int(parts[2])
    if h > 23 or m > 59 or s > 59:
        raise ValueError(f"time out of range {text!r}")
    ms = int(frac[:3].ljust(3, "0")) if dot else 0
    return ((h * 60 + m) * 60 + s) * 1000 + ms


def format_time(ms: int) -> str:
    """Inverse of :func:`parse_time`, always zero-padded to ``HH:MM:SS.mmm``."""
    s, milli = divmod(ms, 1000)
    m, sec = divmod(s, 60)
    h, minute = divmod(m, 60)
    return f"{h:02d}:{minute:02d}:{sec:02d}.{milli:03d}"


class OrderEvent(NamedTuple):
    """One feed row. ``timestamp`` is milliseconds since midnight.

    ``line`` is the 1-based source line, kept for error reporting.
    """

    date: dt.date
    timestamp: int
    order_id: int
    kind: OrderKind
    ticker: str
    price: Decimal
    quantity: int
    exchange: str
    line: int | None = None


@dataclass(frozen=True)
class TimeZoneSpec:
    """Closed interval ``[start, end]`` of milliseconds of day."""

    label: str
    start: int
    end: int

    def __post_init__(self):
        if self.end < self.start:
            raise ConfigError(f"zone {self.label}", "end precedes start")

    def contains(self, ts: int) -> bool:
        return self.start <= ts <= self.end

    @property
    def capacity_ms(self) -> int:
        return self.end - self.start + 1

    @classmethod
    def from_strings(cls, label: str, start: str, end: str) -> "TimeZoneSpec":
        return cls(label, parse_time(start), parse_time(end))

    def to_dict(self) -> dict:
        return {"label": self.label, "start": format_time(self.start), "end": format_time(self.end)}


DEFAULT_ZONES: tuple[TimeZoneSpec, ...] = (
    TimeZoneSpec.from_strings("T1", "09:30:00.000", "10:29:59.999"),
    TimeZoneSpec.from_strings("T2", "10:30:00.000", "11:29:59.999"),
    TimeZoneSpec.from_strings("T3", "11:30:00.000", "12:44:59.999"),
    TimeZoneSpec.from_strings("T4", "12:45:00.000", "13:59:59.999"),
    TimeZoneSpec.from_strings("T5", "14:00:00.000", "14:59:59.999"),
    TimeZoneSpec.from_strings("T6", "15:00:00.000", "16:00:00.000"),
)
SESSION_OPEN = DEFAULT_ZONES[0].start
SESSION_CLOSE = DEFAULT_ZONES[-1].end


def check_zones(zones: Sequence[TimeZoneSpec]) -> None:
    """Raise :class:`ConfigError` if labels repeat or intervals overlap."""
    labels = [z.label for z in zones]
    if len(set(labels)) != len(labels):
        raise ConfigError("zones", "duplicate zone labels")
    ordered = sorted(zones, key=lambda z: z.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start <= a.end:
            raise ConfigError("zones", f"{a.label} overlaps {b.label}")


def zone_of(ts: int, zones: Sequence[TimeZoneSpec] = DEFAULT_ZONES) -> TimeZoneSpec | None:
    for z in zones:
        if z.start <= ts <= z.end:
            return z
    return None


class ZoneLocator:
    """Fast repeated :func:`zone_of` lookups over a fixed zone table."""

    def __init__(self, zones: Sequence[TimeZoneSpec] = DEFAULT_ZONES):
        check_zones(zones)
        self.zones = tuple(sorted(zones, key=lambda z: z.start))
        self._starts = [z.start for z in self.zones]
        self.lo = self.zones[0].start if self.zones else 0
        self.hi = self.zones[-1].end if self.zones else -1

    def __call__(self, ts: int) -> TimeZoneSpec | None:
        if ts < self.lo or ts > self.hi:
            return None
        i = bisect_right(self._starts, ts) - 1
        z = self.zones[i]
        return z if ts <= z.end else None


@dataclass(frozen=True)
class CapCategory:
    label: str
    tickers: tuple[str, ...] = field(default_factory=tuple)


DEFAULT_CATEGORIES: tuple[CapCategory, ...] = (
    CapCategory("HMC", ("AMZN", "JNJ", "JPM", "MSFT", "XOM")),
    CapCategory("MMC", ("ABBV", "HSBC", "NFLX", "ORCL", "PEP")),
    CapCategory("LMC", ("AVGO", "BKNG", "BMY", "NKE", "UNP")),
)

TRADING_DAYS: tuple[dt.date, ...] = tuple(
    dt.date(2018, m, d)
    for m, d in [(11, 7), (11, 15), (11, 28), (12, 6), (12, 10), (12, 26),
                 (11, 9), (11, 12), (11, 14), (12, 4), (12, 7), (12, 21)]
)


def ticker_index(categories: Iterable[CapCategory]) -> dict[str, str]:
    """Map ticker -> category label, rejecting tickers listed twice."""
    out: dict[str, str] = {}
    for cat in categories:
        for t in cat.tickers:
            if t in out:
                raise ConfigError("categories", f"ticker {t} is in both {out[t]} and {cat.label}")
            out[t] = cat.label
    return out
