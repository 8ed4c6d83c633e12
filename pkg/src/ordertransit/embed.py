"""Flatten transition matrices into observation rows and reduce them with PCA.

Columns are z-scored with the sample (n - 1) standard deviation before the
covariance eigendecomposition. With far fewer observations than variables
(18 x 100 here) the decomposition runs on the small Gram matrix instead of
the 100 x 100 covariance; both share the same non-zero spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dtmc import TransitionMatrix
from .errors import ConvergenceFailure, TooFewObservations

ZERO_STD = 1e-12
DEFAULT_GATE = 0.80


@dataclass(frozen=True)
class ObservationMatrix:
    data: np.ndarray
    row_labels: tuple[str, ...] = ()

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError("observation matrix must be 2-D")
        labels = tuple(self.row_labels) or tuple(str(i) for i in range(d.shape[0]))
        if len(labels) != d.shape[0]:
            raise ValueError("one label per row required")
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "row_labels", labels)


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray  # k x m, unit-norm rows
    scores: np.ndarray  # l x k
    eigenvalues: np.ndarray  # full spectrum, descending
    contribution: np.ndarray
    cumulative: np.ndarray
    row_labels: tuple[str, ...] = field(default=())

    @property
    def k(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True)
class GateReport:
    passed: bool
    k: int
    threshold: float
    cumulative: float
    contributions: tuple[float, ...]


def flatten(p: TransitionMatrix | np.ndarray) -> np.ndarray:
    probs = p.probs if isinstance(p, TransitionMatrix) else np.asarray(p, dtype=np.float64)
    return probs.reshape(-1).copy()


def unflatten(v: np.ndarray, n: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = n or int(round(np.sqrt(v.size)))
    return v.reshape(n, n)


def observations(mats: Sequence[TransitionMatrix], labels: Sequence[str] = ()) -> ObservationMatrix:
    return ObservationMatrix(np.vstack([flatten(m) for m in mats]), tuple(labels))


def normalize(obs: ObservationMatrix) -> ObservationMatrix:
    x = obs.data
    if x.shape[0] < 2:
        raise TooFewObservations(f"need at least 2 observations, got {x.shape[0]}")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    y = np.zeros_like(x)
    ok = std >= ZERO_STD
    y[:, ok] = (x[:, ok] - mean[ok]) / std[ok]
    return ObservationMatrix(y, obs.row_labels)


def contribution_rates(eigenvalues) -> tuple[np.ndarray, np.ndarray]:
    lam = np.asarray(eigenvalues, dtype=np.float64)
    total = lam.sum()
    contrib = lam / total if total > 0 else np.zeros_like(lam)
    return contrib, np.cumsum(contrib)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def _complete_basis(vectors: list[np.ndarray], m: int) -> np.ndarray:
    # Deterministic orthonormal completion from the coordinate axes.
    basis = list(vectors)
    for e in np.eye(m):
        v = e.copy()
        for b in basis:
            v -= (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            basis.append(v / nv)
    return np.array(basis)


def pca(obs: ObservationMatrix, k: int = 2) -> PcaResult:
    """Principal components of (already normalized) observation rows."""
    y = obs.data
    l, m = y.shape
    if l < 2:
        raise TooFewObservations(f"need at least 2 observations, got {l}")
    if not 1 <= k <= min(l - 1, m):
        raise ValueError(f"k must be in 1..{min(l - 1, m)}, got {k}")
    y = y - y.mean(axis=0)
    try:
        if l < m:
            gram = (y @ y.T) / (l - 1)
            lam, u = np.linalg.eigh(gram)
            order = np.argsort(lam)[::-1]
            lam, u = lam[order], u[:, order]
            lam = np.where(lam < 0, 0.0, lam)
            rank_tol = max(lam[0], 1.0) * 1e-12
            vecs = []
            for i in range(k):
                if lam[i] <= rank_tol:
                    break
                a = y.T @ u[:, i]
                vecs.append(a / np.linalg.norm(a))
            if len(vecs) < k:
                vecs = list(_complete_basis(vecs, m)[:k])
            components = np.array(vecs)
        else:
            cov = (y.T @ y) / (l - 1)
            lam, v = np.linalg.eigh(cov)
            order = np.argsort(lam)[::-1]
            lam, v = lam[order], v[:, order]
            lam = np.where(lam < 0, 0.0, lam)
            components = v[:, :k].T.copy()
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    components = _fix_signs(components)
    scores = y @ components.T
    contrib, cum = contribution_rates(lam)
    return PcaResult(components, scores, lam, contrib, cum, obs.row_labels)


def reconstruct(res: PcaResult) -> np.ndarray:
    return res.scores @ res.components


def cumulative_gate(res: PcaResult | Sequence[float], threshold: float = DEFAULT_GATE,
                    k: int | None = None) -> GateReport:
    """Whether the first ``k`` components carry at least ``threshold`` of the variance.

    Accepts a :class:`PcaResult` (``k`` defaults to its component count) or a
    bare eigenvalue spectrum.
    """
    if isinstance(res, PcaResult):
        contrib = res.contribution
        k = res.k if k is None else k
    else:
        contrib, _ = contribution_rates(sorted(res, reverse=True))
        k = 1 if k is None else k
    cum = float(np.sum(contrib[:k]))
    return GateReport(cum >= threshold, k, threshold, cum, tuple(float(c) for c in contrib[:k]))
