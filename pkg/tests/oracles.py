"""Slow, independent reference implementations used only by the tests."""

import itertools

import mpmath
import numpy as np


def pca_scores_mp(y: np.ndarray, k: int, dps: int = 30):
    """Scores and eigenvalues of the sample covariance of ``y`` in extended precision.

    The covariance C = Yc' Yc / (l - 1) of the centred data has its range inside
    the row space of Yc, so with Q an orthonormal basis of that space the
    eigenpairs of Q' C Q give every non-zero eigenpair of C exactly. This keeps
    the symmetric eigensolve small while still working on the covariance.
    """
    l, m = y.shape
    mpf, fdot, fsum = mpmath.mpf, mpmath.fdot, mpmath.fsum
    with mpmath.workdps(dps):
        cols = [[mpf(float(y[i, j])) for i in range(l)] for j in range(m)]
        for col in cols:
            mu = fsum(col) / l
            col[:] = [x - mu for x in col]
        rows = [[cols[j][i] for j in range(m)] for i in range(l)]
        # modified Gram-Schmidt on the rows, twice for stability
        tiny = mpf(10) ** (-(dps // 2))
        basis: list[list] = []
        for v in rows:
            v = list(v)
            for _ in range(2):
                for b in basis:
                    c = fdot(b, v)
                    v = [vi - c * bi for vi, bi in zip(v, b)]
            nv = mpmath.sqrt(fdot(v, v))
            if nv > tiny:
                basis.append([vi / nv for vi in v])
        r = len(basis)
        yq = [[fdot(row, b) for b in basis] for row in rows]  # l x r
        cov = mpmath.matrix(r, r)
        for a in range(r):
            for b in range(a, r):
                cov[a, b] = cov[b, a] = fsum(yq[i][a] * yq[i][b] for i in range(l)) / (l - 1)
        lam, w = mpmath.eigsy(cov)
        order = sorted(range(r), key=lambda i: -lam[i])[:k]
        scores = [[fsum(yq[i][a] * w[a, c] for a in range(r)) for c in order] for i in range(l)]
        return (np.array([[float(x) for x in s] for s in scores]),
                np.array([float(lam[i]) for i in order]))


def same_up_to_sign(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    for j in range(a.shape[1]):
        if min(np.abs(a[:, j] - b[:, j]).max(), np.abs(a[:, j] + b[:, j]).max()) > tol:
            return False
    return True


def dbscan_closure(points: np.ndarray, eps: float, min_pts: int):
    """Brute-force DBSCAN: core set, transitive closure of core adjacency, border attachment.

    Returns ``(labels, ties)`` where labels are canonical (clusters numbered by
    their smallest core index) and ``ties`` lists border points within reach
    of more than one cluster.
    """
    n = len(points)
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    near = d <= eps
    core = near.sum(axis=1) >= min_pts
    reach = near & core[:, None] & core[None, :]
    np.fill_diagonal(reach, core)
    # Warshall closure
    for k in range(n):
        reach |= reach[:, [k]] & reach[[k], :]
    labels = np.full(n, -1)
    ties = []
    next_label = 0
    for i in range(n):
        if core[i] and labels[i] < 0:
            labels[reach[i]] = next_label
            next_label += 1
    for i in range(n):
        if not core[i]:
            cl = sorted({int(labels[j]) for j in np.flatnonzero(near[i] & core)})
            if cl:
                labels[i] = cl[0]
                if len(cl) > 1:
                    ties.append(i)
    return labels, ties


def canonical(labels) -> list:
    """Relabel clusters by first appearance, leaving noise as -1."""
    mapping, out = {}, []
    for x in labels:
        x = int(x)
        if x < 0:
            out.append(-1)
            continue
        mapping.setdefault(x, len(mapping))
        out.append(mapping[x])
    return out


def k_distance_exhaustive(points: np.ndarray, k: int) -> list:
    n = len(points)
    out = []
    for i in range(n):
        ds = sorted(float(np.linalg.norm(points[i] - points[j])) for j in range(n) if j != i)
        out.append(ds[k - 1])
    return sorted(out, reverse=True)
