"""Kullback-Leibler and Jensen-Shannon comparisons of discrete distributions.

All logarithms are base 2, so the Jensen-Shannon divergence lies in
[0, 1]. Published time-zone comparison tables report its square root
(the Jensen-Shannon distance), which is what :func:`jsd_matrix` returns
by default.
"""

from __future__ import annotations

from typing import Literal, Sequence

import numpy as np

from .errors import AbsoluteContinuityViolation, LengthMismatch

Metric = Literal["distance", "divergence"]


def as_distribution(p, normalize: bool = True) -> np.ndarray:
    """Validate a non-negative vector; rescale to unit mass when ``normalize``.

    Tabulated distributions rounded to a few decimals rarely sum to exactly 1.
    """
    a = np.asarray(p, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError("distribution must be one-dimensional")
    if (a < 0).any() or not np.isfinite(a).all():
        raise ValueError("distribution entries must be finite and non-negative")
    s = a.sum()
    if s <= 0:
        raise ValueError("distribution has zero mass")
    return a / s if normalize else a


def kld(u, v) -> float:
    """sum u_i log2(u_i / v_i) over u_i > 0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise LengthMismatch(f"lengths {u.shape} and {v.shape} differ")
    mask = u > 0
    bad = np.flatnonzero(mask & (v <= 0))
    if bad.size:
        raise AbsoluteContinuityViolation(int(bad[0]))
    # difference of logs, not log of the ratio, so subnormal v cannot overflow
    return max(float(np.sum(u[mask] * (np.log2(u[mask]) - np.log2(v[mask])))), 0.0)


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in bits; inputs are rescaled to unit mass."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise LengthMismatch(f"lengths {p.shape} and {q.shape} differ")
    p = as_distribution(p)
    q = as_distribution(q)
    # KL(p || m) with m = (p + q) / 2 written as p log2(2p / (p + q)), which
    # stays finite when the midpoint itself would underflow
    s = p + q
    a, b = p > 0, q > 0
    half = float(np.sum(p[a] * np.log2(2 * p[a] / s[a]))) + float(np.sum(q[b] * np.log2(2 * q[b] / s[b])))
    return min(max(0.5 * half, 0.0), 1.0)


def js_distance(p, q) -> float:
    return float(np.sqrt(jsd(p, q)))


def jsd_matrix(dists: Sequence, metric: Metric = "distance") -> np.ndarray:
    """Symmetric pairwise matrix with zero diagonal.

    ``metric="distance"`` gives sqrt(JSD), the convention of the published
    time-zone tables; ``"divergence"`` gives JSD itself.
    """
    if len(dists) < 2:
        raise ValueError("need at least two distributions")
    arrs = [np.asarray(d, dtype=np.float64) for d in dists]
    if len({a.shape for a in arrs}) != 1:
        raise LengthMismatch("distributions differ in length")
    if metric not in ("distance", "divergence"):
        raise ValueError(f"unknown metric {metric!r}")
    f = js_distance if metric == "distance" else jsd
    n = len(arrs)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i):
            out[i, j] = out[j, i] = f(arrs[i], arrs[j])
    return out


def lower_triangle_rows(mat: np.ndarray, labels: Sequence[str], digits: int = 6) -> list[list[str]]:
    """Rows ``[label, m[i,0], ..., m[i,i]]`` followed by a footer of labels."""
    rows = []
    for i, lab in enumerate(labels):
        rows.append([lab] + [f"{mat[i, j]:.{digits}f}" for j in range(i + 1)])
    rows.append([""] + list(labels))
    return rows
