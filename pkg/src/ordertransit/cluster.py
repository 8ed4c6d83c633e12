"""DBSCAN over low-dimensional score points, plus the k-distance curve used
to pick its radius.

Neighborhoods are closed balls (distance <= eps) and include the point
itself, so ``min_pts`` counts the point. Clusters are grown in input order;
a border point within reach of several clusters joins the first one that
reaches it.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import KTooLarge

NOISE = -1
DEFAULT_EPS = 3.95
DEFAULT_MIN_PTS = 3


class Role(enum.Enum):
    CORE = "core"
    BORDER = "border"
    NOISE = "noise"


@dataclass(frozen=True)
class DbscanParams:
    eps: float = DEFAULT_EPS
    min_pts: int = DEFAULT_MIN_PTS

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be at least 1")


@dataclass(frozen=True)
class ClusterLabels:
    labels: np.ndarray
    roles: tuple[Role, ...]

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size and self.labels.max() >= 0 else 0

    @property
    def noise(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.labels == NOISE)]

    def members(self, cluster: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.labels == cluster)]


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or not np.isfinite(x).all():
        raise ValueError("points must be a finite 2-D array")
    return x


def dbscan(points, params: DbscanParams = DbscanParams()) -> ClusterLabels:
    x = _as_points(points)
    n = len(x)
    if n == 0:
        raise ValueError("need at least one point")
    within = cdist(x, x) <= params.eps
    neighbors = [np.flatnonzero(row) for row in within]
    core = np.array([len(nb) >= params.min_pts for nb in neighbors])

    labels = np.full(n, NOISE, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in neighbors[p]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                    queue.append(q)
        cluster += 1

    roles = tuple(
        Role.CORE if core[i] else (Role.BORDER if labels[i] != NOISE else Role.NOISE)
        for i in range(n)
    )
    return ClusterLabels(labels, roles)


def k_distance(points, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest other point, sorted descending."""
    x = _as_points(points)
    n = len(x)
    if not 1 <= k < n:
        raise KTooLarge(f"k must be in 1..{n - 1}, got {k}")
    d = cdist(x, x)
    np.fill_diagonal(d, np.inf)
    kth = np.partition(d, k - 1, axis=1)[:, k - 1]
    return np.sort(kth)[::-1]


def elbow(kdist: np.ndarray) -> float:
    """Value at the point of the descending k-distance curve farthest from its chord."""
    y = np.asarray(kdist, dtype=np.float64)
    if len(y) < 3:
        return float(y[0])
    x = np.arange(len(y), dtype=np.float64)
    dx, dy = x[-1] - x[0], y[-1] - y[0]
    dist = np.abs(dy * x - dx * y + x[-1] * y[0] - y[-1] * x[0]) / np.hypot(dx, dy)
    return float(y[int(np.argmax(dist))])
