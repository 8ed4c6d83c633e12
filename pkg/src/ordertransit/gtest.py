"""Dependence tests on state sequences.

Builds lag-k contingency tables of (current, later) state pairs, evaluates
the likelihood-ratio G statistic against its chi-square limit, and offers
Cramér's V per lag as a categorical stand-in for autocorrelation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import special

from .domain import N_STATES
from .errors import DegenerateTable, SequenceTooShort
from .ingest import SymbolSequence

SIGNIFICANCE = 0.05

SequenceLike = Union[SymbolSequence, Sequence[int], np.ndarray]


@dataclass(frozen=True)
class ContingencyTable:
    observed: np.ndarray
    lag: int = 1

    @property
    def total(self) -> int:
        return int(self.observed.sum())


@dataclass(frozen=True)
class GTestResult:
    g: float
    df: int
    p_value: float

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE


@dataclass(frozen=True)
class LagAssociation:
    lag: int
    cramers_v: float
    threshold: float

    @property
    def exceeds(self) -> bool:
        return self.cramers_v > self.threshold


def as_states(seq: SequenceLike) -> np.ndarray:
    if isinstance(seq, SymbolSequence):
        return seq.as_array()
    return np.asarray(seq, dtype=np.intp)


def build_table(seq: SequenceLike, lag: int = 1, n_states: int = N_STATES) -> ContingencyTable:
    """Count pairs ``(seq[t], seq[t + lag])`` into an ``n_states`` square table."""
    if lag < 1:
        raise ValueError("lag must be positive")
    a = as_states(seq)
    if len(a) <= lag:
        raise SequenceTooShort(f"need more than {lag} symbols, got {len(a)}")
    flat = np.bincount(a[:-lag] * n_states + a[lag:], minlength=n_states * n_states)
    return ContingencyTable(flat.reshape(n_states, n_states).astype(np.int64), lag)


def _reduced(observed: np.ndarray) -> np.ndarray:
    o = np.asarray(observed, dtype=np.float64)
    if o.ndim != 2:
        raise ValueError("contingency table must be 2-D")
    if (o < 0).any():
        raise ValueError("negative count in contingency table")
    o = o[o.sum(axis=1) > 0][:, o.sum(axis=0) > 0]
    if o.shape[0] < 2 or o.shape[1] < 2:
        raise DegenerateTable(f"only {o.shape[0]} row(s) and {o.shape[1]} column(s) with positive totals")
    return o


def _expected(o: np.ndarray) -> np.ndarray:
    return np.outer(o.sum(axis=1), o.sum(axis=0)) / o.sum()


def g_statistic(table: ContingencyTable | np.ndarray) -> GTestResult:
    """G = 2 sum O ln(O/E) over cells with O > 0; zero-total rows/columns are dropped."""
    observed = table.observed if isinstance(table, ContingencyTable) else table
    o = _reduced(observed)
    e = _expected(o)
    mask = o > 0
    g = 2.0 * float(np.sum(o[mask] * np.log(o[mask] / e[mask])))
    g = max(g, 0.0)
    df = (o.shape[0] - 1) * (o.shape[1] - 1)
    return GTestResult(g, df, chi_square_sf(g, df))


def pearson_chi2(table: ContingencyTable | np.ndarray) -> float:
    observed = table.observed if isinstance(table, ContingencyTable) else table
    o = _reduced(observed)
    e = _expected(o)
    return float(np.sum((o - e) ** 2 / e))


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution, Q(df/2, x/2)."""
    if x < 0:
        raise ValueError("x must be non-negative")
    if df < 1:
        raise ValueError("df must be positive")
    if x == 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def cramers_v(table: ContingencyTable | np.ndarray, corrected: bool = True) -> float:
    """Cramér's V; by default with the small-sample bias correction of Bergsma.

    The plain statistic has expectation near sqrt((r-1)(c-1) / (N min(r-1, c-1)))
    under independence, which for a full 10 x 10 table is 3/sqrt(N); the
    corrected one is centred on zero.
    """
    observed = table.observed if isinstance(table, ContingencyTable) else table
    o = _reduced(observed)
    n = o.sum()
    r, c = o.shape
    phi2 = pearson_chi2(o) / n
    if not corrected:
        return float(np.sqrt(phi2 / (min(r, c) - 1)))
    if n <= 1:
        return 0.0
    phi2 = max(0.0, phi2 - (r - 1) * (c - 1) / (n - 1))
    r_adj = r - (r - 1) ** 2 / (n - 1)
    c_adj = c - (c - 1) ** 2 / (n - 1)
    denom = min(r_adj, c_adj) - 1
    return float(np.sqrt(phi2 / denom)) if denom > 0 else 0.0


def lagged_association(seq: SequenceLike, max_lag: int) -> list[LagAssociation]:
    """Bias-corrected Cramér's V of the lag-k table for k = 1..max_lag, each with threshold 1/sqrt(N)."""
    a = as_states(seq)
    if len(a) <= max_lag:
        raise SequenceTooShort(f"need more than {max_lag} symbols, got {len(a)}")
    out = []
    for k in range(1, max_lag + 1):
        t = build_table(a, k)
        out.append(LagAssociation(k, cramers_v(t), 1.0 / np.sqrt(t.total)))
    return out


def g_test(seq: SequenceLike, lag: int = 1) -> GTestResult:
    return g_statistic(build_table(seq, lag))
