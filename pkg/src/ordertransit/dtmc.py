"""First-order discrete-time Markov chains over the ten order states.

Rows index the current state and columns the next one throughout. Rows for
states never left in the data stay all-zero ("unsupported"); nothing is
smoothed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .domain import N_STATES, STATE_NAMES
from .errors import ConvergenceFailure, EmptyCounts, EmptyInput, NotErgodic, SequenceTooShort
from .gtest import SequenceLike, as_states

ROW_SUM_TOL = 1e-12
BALANCE_TOL = 1e-10
SOLVER_AGREEMENT_TOL = 1e-8


@dataclass(frozen=True)
class CountMatrix:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("count matrix must be square")
        if (c < 0).any():
            raise ValueError("negative transition count")
        object.__setattr__(self, "counts", c)

    @property
    def total_transitions(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "CountMatrix") -> "CountMatrix":
        return CountMatrix(self.counts + other.counts)

    @classmethod
    def zeros(cls, n: int = N_STATES) -> "CountMatrix":
        return cls(np.zeros((n, n), dtype=np.int64))


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic on ``support``; other rows are all zero."""

    probs: np.ndarray
    support: frozenset[int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("transition matrix must be square")
        if (p < 0).any() or (p > 1 + ROW_SUM_TOL).any():
            raise ValueError("probabilities must lie in [0, 1]")
        sums = p.sum(axis=1)
        support = self.support
        if support is None:
            support = frozenset(int(i) for i in np.flatnonzero(sums > 0))
        support = frozenset(support)
        for i in range(p.shape[0]):
            if i in support:
                if abs(sums[i] - 1.0) > 1e-9:
                    raise ValueError(f"row {i} sums to {sums[i]!r}, not 1")
            elif sums[i] != 0:
                raise ValueError(f"unsupported row {i} is not all zero")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "support", support)

    def __eq__(self, other):
        if not isinstance(other, TransitionMatrix):
            return NotImplemented
        return self.support == other.support and np.array_equal(self.probs, other.probs)

    __hash__ = None  # type: ignore[assignment]

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def unsupported(self) -> frozenset[int]:
        return frozenset(range(self.n)) - self.support

    def to_dict(self, states: Sequence[str] = STATE_NAMES) -> dict:
        return {
            "states": list(states[: self.n]),
            "probs": self.probs.tolist(),
            "support": sorted(self.support),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionMatrix":
        return cls(np.asarray(d["probs"], dtype=np.float64), frozenset(d["support"]))


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray

    def to_dict(self, states: Sequence[str] = STATE_NAMES) -> dict:
        return {"states": list(states[: len(self.pi)]), "pi": self.pi.tolist()}


class ChainKind(enum.Enum):
    ERGODIC = "ergodic"
    REDUCIBLE = "reducible"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Classification:
    kind: ChainKind
    period: int | None
    n_classes: int
    states: tuple[int, ...]

    @property
    def ergodic(self) -> bool:
        return self.kind is ChainKind.ERGODIC

    def __str__(self) -> str:
        extra = f", period {self.period}" if self.kind is ChainKind.PERIODIC else ""
        return f"{self.kind.value} ({self.n_classes} class(es){extra})"


def accumulate(seq: SequenceLike, n_states: int = N_STATES) -> CountMatrix:
    a = as_states(seq)
    if len(a) < 2:
        raise SequenceTooShort(f"need at least 2 symbols, got {len(a)}")
    flat = np.bincount(a[:-1] * n_states + a[1:], minlength=n_states * n_states)
    return CountMatrix(flat.reshape(n_states, n_states))


def merge(counts: Iterable[CountMatrix]) -> CountMatrix:
    return reduce(lambda a, b: a + b, counts)


def estimate(counts: CountMatrix | np.ndarray) -> TransitionMatrix:
    """Maximum-likelihood TPM: each supported row normalized by its total."""
    c = counts.counts if isinstance(counts, CountMatrix) else np.asarray(counts)
    if c.sum() < 1:
        raise EmptyCounts("no transitions to estimate from")
    totals = c.sum(axis=1)
    support = totals > 0
    probs = np.zeros(c.shape, dtype=np.float64)
    probs[support] = c[support] / totals[support, None]
    return TransitionMatrix(probs, frozenset(int(i) for i in np.flatnonzero(support)))


def average(mats: Sequence[TransitionMatrix]) -> TransitionMatrix:
    """Row-wise mean over the inputs in which each row is supported.

    Every input has equal weight regardless of how many transitions it was
    estimated from.
    """
    if not mats:
        raise EmptyInput("nothing to average")
    n = mats[0].n
    if any(m.n != n for m in mats):
        raise ValueError("matrices differ in size")
    total = np.zeros((n, n))
    seen = np.zeros(n, dtype=np.int64)
    for m in mats:
        rows = sorted(m.support)
        total[rows] += m.probs[rows]
        seen[rows] += 1
    support = seen > 0
    out = np.zeros((n, n))
    out[support] = total[support] / seen[support, None]
    out[support] /= out[support].sum(axis=1, keepdims=True)
    return TransitionMatrix(out, frozenset(int(i) for i in np.flatnonzero(support)))


def _active_states(p: TransitionMatrix) -> list[int]:
    reached = set(int(j) for j in np.flatnonzero(p.probs.sum(axis=0) > 0))
    return sorted(p.support | reached)


def classify(p: TransitionMatrix) -> Classification:
    """Irreducibility and aperiodicity of the chain on its active states.

    Active states are those with a supported row or positive inflow. A
    reached state that is never left is a dead end and makes the chain
    reducible.
    """
    if not p.support:
        raise EmptyCounts("matrix has no supported rows")
    states = _active_states(p)
    sub = p.probs[np.ix_(states, states)]
    adj = sub > 0
    n_cls, _ = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    if n_cls != 1:
        return Classification(ChainKind.REDUCIBLE, None, int(n_cls), tuple(states))
    period = _period(adj)
    kind = ChainKind.ERGODIC if period == 1 else ChainKind.PERIODIC
    return Classification(kind, period, 1, tuple(states))


def _period(adj: np.ndarray) -> int:
    # BFS levels from node 0; gcd of level differences along every edge.
    n = adj.shape[0]
    level = [-1] * n
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adj[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g)


def _solve_linear(q: np.ndarray) -> np.ndarray:
    n = q.shape[0]
    a = np.vstack([q.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return pi


def _solve_power(q: np.ndarray, max_squarings: int = 64) -> np.ndarray:
    # Repeated squaring of the transition matrix: Q^(2^k) rows all converge to pi.
    m = q.copy()
    for _ in range(max_squarings):
        m = m @ m
        m /= m.sum(axis=1, keepdims=True)
        if np.ptp(m, axis=0).max() < 1e-14:
            break
    else:
        raise ConvergenceFailure("power iteration did not converge")
    pi = m.mean(axis=0)
    # Polish with plain power steps.
    for _ in range(10):
        pi = pi @ q
        pi /= pi.sum()
    return pi


def stationary(p: TransitionMatrix, *, check: bool = True) -> StationaryDistribution:
    """Unique pi with pi P = pi and sum(pi) = 1 for an ergodic chain.

    Solved as a least-squares system on the active states, then checked
    against an independent matrix-power iteration.
    """
    cls = classify(p)
    if not cls.ergodic:
        raise NotErgodic(cls)
    states = list(cls.states)
    q = p.probs[np.ix_(states, states)]
    sub = _solve_linear(q)
    sub = np.clip(sub, 0.0, None)
    sub /= sub.sum()
    if check:
        alt = _solve_power(q)
        gap = float(np.max(np.abs(alt - sub)))
        if gap > SOLVER_AGREEMENT_TOL:
            raise ConvergenceFailure(f"linear and power solutions differ by {gap:.3e}")
    pi = np.zeros(p.n)
    pi[states] = sub
    return StationaryDistribution(pi)


def stationary_power(p: TransitionMatrix) -> StationaryDistribution:
    """The power-iteration route alone, for cross-checking."""
    cls = classify(p)
    if not cls.ergodic:
        raise NotErgodic(cls)
    states = list(cls.states)
    pi = np.zeros(p.n)
    pi[states] = _solve_power(p.probs[np.ix_(states, states)])
    return StationaryDistribution(pi)


def degree_of_inertia(p: TransitionMatrix) -> np.ndarray:
    """Diagonal p_ii: probability that the next event repeats the current one."""
    return np.diag(p.probs).copy()


def reversible_chain(pi: Sequence[float]) -> TransitionMatrix:
    """Metropolis chain with uniform proposals whose stationary law is ``pi``.

    Detailed balance holds by construction; every state keeps a self-loop
    of at least 1/n, so the chain is aperiodic.
    """
    pi = np.asarray(pi, dtype=np.float64)
    if (pi <= 0).any():
        raise ValueError("target distribution must be strictly positive")
    pi = pi / pi.sum()
    n = len(pi)
    p = np.minimum(1.0, pi[None, :] / pi[:, None]) / n
    np.fill_diagonal(p, 0.0)
    np.fill_diagonal(p, 1.0 - p.sum(axis=1))
    return TransitionMatrix(p)
