"""Independent brute-force oracles used to verify the solvers and metrics.

Everything here is deliberately written from scratch against the problem
statements (enumeration, coordinate descent, quadratic-time sweeps) and
must stay independent of the package implementations it checks. The one
sanctioned exception: the paired-support oracle scores each enumerated
support with the package's restricted convex refit, because the refit
itself is verified separately against the least-squares enumeration here.
"""

from __future__ import annotations

import itertools

import numpy as np


def lasso_objective(a, y, x, lam):
    r = y - a @ x
    return float(r @ r + lam * np.sum(np.abs(x)))


def extended_objective(dp, v, y, alpha, beta, lam, mu, tau):
    r = y - dp @ alpha - (v @ beta if v.shape[1] else 0.0)
    pen = lam * np.sum(np.abs(alpha))
    if beta.size:
        pen += mu * (tau * np.sum(np.abs(beta)) + (1 - tau) * np.linalg.norm(beta))
    return float(r @ r + pen)


def ls_on_support(a, y, support):
    x = np.zeros(a.shape[1])
    if len(support):
        sub = a[:, list(support)]
        coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
        x[list(support)] = coef
    return x


def lasso_support_oracle(a, y, lam, max_support=3):
    """Best l1-penalized objective over least-squares fits on all small supports."""
    best = lasso_objective(a, y, np.zeros(a.shape[1]), lam)
    for size in range(1, max_support + 1):
        for support in itertools.combinations(range(a.shape[1]), size):
            x = ls_on_support(a, y, support)
            best = min(best, lasso_objective(a, y, x, lam))
    return best


def extended_support_oracle(dp, v, y, lam, mu, tau, max_support=3):
    """Enumerate least-squares fits over small supports of each part."""
    n_a, n_v = dp.shape[1], v.shape[1]
    stacked = np.concatenate([dp, v], axis=1) if n_v else dp
    best = extended_objective(dp, v, y, np.zeros(n_a), np.zeros(n_v), lam, mu, tau)
    a_supports = [()] + [
        s for size in range(1, max_support + 1)
        for s in itertools.combinations(range(n_a), size)
    ]
    v_supports = [()] + [
        s for size in range(1, max_support + 1)
        for s in itertools.combinations(range(n_v), size)
    ]
    for sa in a_supports:
        for sv in v_supports:
            support = list(sa) + [n_a + j for j in sv]
            if not support:
                continue
            x = ls_on_support(stacked, y, support)
            best = min(
                best,
                extended_objective(dp, v, y, x[:n_a], x[n_a:], lam, mu, tau),
            )
    return best


def cd_lasso(a, y, lam, n_iter=4000):
    """Coordinate descent for min ||y - Ax||^2 + lam ||x||_1 (independent route)."""
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    x = np.zeros(a.shape[1])
    col_sq = np.sum(a * a, axis=0)
    r = y.copy()
    for _ in range(n_iter):
        delta = 0.0
        for j in range(a.shape[1]):
            if col_sq[j] == 0:
                continue
            old = x[j]
            rho = a[:, j] @ r + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam / 2.0, 0.0) / col_sq[j]
            if new != old:
                r += a[:, j] * (old - new)
                x[j] = new
                delta = max(delta, abs(new - old))
        if delta < 1e-14:
            break
    return x


def cd_weighted_lasso(a, y, weights, n_iter=4000):
    """Coordinate descent with a per-coordinate l1 weight vector."""
    a = np.asarray(a, dtype=float)
    x = np.zeros(a.shape[1])
    col_sq = np.sum(a * a, axis=0)
    r = np.asarray(y, dtype=float).copy()
    for _ in range(n_iter):
        delta = 0.0
        for j in range(a.shape[1]):
            if col_sq[j] == 0:
                continue
            old = x[j]
            rho = a[:, j] @ r + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - weights[j] / 2.0, 0.0) / col_sq[j]
            if new != old:
                r += a[:, j] * (old - new)
                x[j] = new
                delta = max(delta, abs(new - old))
        if delta < 1e-14:
            break
    return x


def facility_subsets_oracle(d, eta, q_norm, max_size):
    """Exhaustive subset search scoring crisp nearest-exemplar assignments.

    Score of a subset S: sum_j min_{i in S} d_ij plus eta times the row-norm
    value of the induced hard assignment (sqrt of the member count per
    exemplar for the l2 row norm, |S| for the sup norm).
    """
    n = d.shape[0]
    best_score, best_subset = np.inf, None
    for size in range(1, max_size + 1):
        for subset in itertools.combinations(range(n), size):
            rows = d[list(subset)]
            nearest = np.argmin(rows, axis=0)
            cost = float(rows[nearest, np.arange(n)].sum())
            if q_norm == 2:
                counts = np.bincount(nearest, minlength=size)
                penalty = float(np.sqrt(counts[counts > 0]).sum())
            else:
                penalty = float(size)
            score = cost + eta * penalty
            if score < best_score - 1e-12:
                best_score, best_subset = score, subset
    return best_subset, best_score


def roc_brute_force(scores, labels):
    """Quadratic-time threshold enumeration of ROC points."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos = labels.sum()
    n_neg = (~labels).sum()
    points = {(0.0, 0.0), (1.0, 1.0)}
    for threshold in np.unique(scores):
        decided = scores >= threshold
        tpr = float((decided & labels).sum() / n_pos)
        fpr = float((decided & ~labels).sum() / n_neg)
        points.add((fpr, tpr))
    return sorted(points)


def pauc_dense_oracle(points, limit=0.2):
    """Midpoint integration on a dense grid joined with the curve nodes.

    Midpoints never coincide with curve nodes, so vertical segments
    (duplicate fpr values) contribute no spurious area, and the midpoint
    rule is exact on every linear piece because the grid contains all
    curve nodes below the limit.
    """
    fpr = np.array([p[0] for p in points])
    tpr = np.array([p[1] for p in points])
    grid = np.union1d(np.linspace(0.0, limit, 20001), fpr[fpr <= limit])
    grid = grid[grid <= limit + 1e-15]

    def interp(g):
        left = np.searchsorted(fpr, g, side="right") - 1
        right = np.searchsorted(fpr, g, side="left")
        f0, f1 = fpr[left], fpr[right]
        t0, t1 = tpr[left], tpr[right]
        if f1 == f0:
            return t0
        return t0 + (t1 - t0) * (g - f0) / (f1 - f0)

    area = 0.0
    for g0, g1 in zip(grid[:-1], grid[1:]):
        if g1 > g0:
            area += interp(0.5 * (g0 + g1)) * (g1 - g0)
    return float(area / limit)


def aupr_reference(points):
    """Plain trapezoid over the (recall, precision) polyline."""
    area = 0.0
    for (r0, p0), (r1, p1) in zip(points[:-1], points[1:]):
        area += 0.5 * (p0 + p1) * (r1 - r0)
    return float(area)
