"""Independent reference solvers used only by the tests.

None of these share code with the package: they trade speed for a
transparent construction so they can serve as ground truth.
"""

import itertools

import numpy as np


def project_simplex_rows(v):
    """Euclidean projection of each row onto the probability simplex (sort-based)."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, v.shape[1] + 1)
    rho = np.count_nonzero(u - css / idx > 0, axis=1)
    theta = css[np.arange(v.shape[0]), rho - 1] / rho
    return np.maximum(v - theta[:, None], 0.0)


def _best_anchor(means, sizes, eps):
    """Exact minimizer of sum_s n_s * dist(m_s, [a, a+eps])^2 by segment enumeration."""
    cuts = np.unique(np.concatenate([means, means - eps]))
    candidates = list(cuts)
    edges = np.concatenate([[-np.inf], cuts, [np.inf]])
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = (lo + hi) / 2 if np.isfinite(lo) and np.isfinite(hi) else (hi - 1 if np.isfinite(hi) else lo + 1)
        below = means < mid
        above = means > mid + eps
        w = sizes[below].sum() + sizes[above].sum()
        if w == 0:
            candidates.append(mid)
            continue
        a = (np.sum(sizes[below] * means[below]) + np.sum(sizes[above] * (means[above] - eps))) / w
        candidates.append(float(np.clip(a, lo, hi)))

    def cost(a):
        d = np.maximum(a - means, 0) + np.maximum(means - a - eps, 0)
        return np.sum(sizes * d * d)

    return min(candidates, key=cost)


def project_dp(v, groups, eps):
    """Euclidean projection of every column onto {group-mean range <= eps} (no box)."""
    v = np.array(v, dtype=float)
    groups = np.asarray(groups)
    labels = np.unique(groups)
    sizes = np.array([np.sum(groups == s) for s in labels], dtype=float)
    for k in range(v.shape[1]):
        means = np.array([v[groups == s, k].mean() for s in labels])
        a = _best_anchor(means, sizes, eps)
        target = np.clip(means, a, a + eps)
        for s, m, t in zip(labels, means, target):
            v[groups == s, k] += t - m
    return v


def dykstra(x0, proj_a, proj_b, iters=50000, tol=1e-13):
    x = np.array(x0, dtype=float)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(iters):
        y = proj_a(x + p)
        p = x + p - y
        x_new = proj_b(y + q)
        q = y + q - x_new
        # the iterate can stall while the corrections still move, so also
        # require the two projections to agree
        if np.max(np.abs(x_new - x)) < tol and np.max(np.abs(x_new - y)) < tol:
            x = x_new
            break
        x = x_new
    return x


def full_problem_oracle(labels, groups, eps, lam=1.0):
    """Minimizer of sum_i (lam/2)||yhat_i||^2 - yhat_i.y_i over fair row-stochastic matrices.

    A projected-gradient step of length 1/lam lands on the projection of
    ``labels / lam`` onto (simplex rows) ∩ (DP set), which is computed with
    Dykstra's alternating projections.
    """
    y = np.asarray(labels, dtype=float)
    x = dykstra(y / lam, project_simplex_rows, lambda v: project_dp(v, groups, eps), tol=1e-11)
    return x


def box_slab_projection(v, lo, hi, iters=200000, tol=1e-14):
    """Projection of a vector onto [0,1]^n ∩ {lo <= mean <= hi} via Dykstra."""

    def slab(z):
        m = z.mean()
        return z + (np.clip(m, lo, hi) - m)

    return dykstra(np.asarray(v, float), lambda z: np.clip(z, 0, 1), slab, iters, tol)


def _group_value_at_targets(f, w, targets, iters=80):
    """min (w/2)||y||^2 - y.f s.t. y in [0,1]^n, mean(y) = t, for every t in ``targets``.

    Brute force: the minimizer clips ``(f - mu)/w``; ``mu`` is located by a
    vectorized bisection on the (monotone) mean over all targets at once.
    """
    f = np.asarray(f, float)
    t = np.asarray(targets, float)
    lo = np.full_like(t, f.min() - w - 1.0)
    hi = np.full_like(t, f.max() + 1.0)
    for _ in range(iters):
        mid = (lo + hi) / 2
        m = np.clip((f[None, :] - mid[:, None]) / w, 0, 1).mean(axis=1)
        too_high = m > t
        lo = np.where(too_high, mid, lo)
        hi = np.where(too_high, hi, mid)
    y = np.clip((f[None, :] - ((lo + hi) / 2)[:, None]) / w, 0, 1)
    return 0.5 * w * np.sum(y * y, axis=1) - y @ f


def class_grid_oracle(f, groups, eps, w, levels=3, points=1001):
    """Objective of the class subproblem by nested grid search over the anchor."""
    f = np.asarray(f, float)
    groups = np.asarray(groups)
    parts = [f[groups == s] for s in np.unique(groups)]
    free = [np.clip(p / w, 0, 1).mean() for p in parts]

    def values(anchors):
        total = np.zeros_like(anchors)
        for p, m0 in zip(parts, free):
            # convex in the target, so the best target in [a, a+eps] is the clipped free mean
            tgt = np.clip(m0, anchors, np.minimum(anchors + eps, 1.0))
            total += _group_value_at_targets(p, w, tgt)
        return total

    lo, hi = 0.0, 1.0
    best_a, best_v = None, np.inf
    for _ in range(levels):
        grid = np.linspace(lo, hi, points)
        v = values(grid)
        i = int(np.argmin(v))
        if v[i] < best_v:
            best_a, best_v = grid[i], v[i]
        step = grid[1] - grid[0]
        lo, hi = max(0.0, grid[i] - step), min(1.0, grid[i] + step)
    return float(best_v), float(best_a)


def knn_oracle(train_x, train_y, query, k):
    """Nearest neighbours by explicit sort of (distance, index) pairs."""
    out = []
    for q in np.asarray(query, float):
        pairs = sorted((float(np.sum((x - q) ** 2)), i) for i, x in enumerate(np.asarray(train_x, float)))
        idx = [i for _, i in pairs[:k]]
        out.append(np.mean(np.asarray(train_y, float)[idx], axis=0))
    return np.array(out)


def count_accuracy(pred, truth):
    hits = 0
    for row, t in zip(pred, truth):
        best = 0
        for j in range(len(row)):
            if row[j] > row[best]:
                best = j
        hits += best == t
    return hits / len(truth)


def topk_membership(pred, truth, k):
    hits = 0
    for row, t in zip(pred, truth):
        order = sorted(range(len(row)), key=lambda j: (-row[j], j))
        hits += t in order[:k]
    return hits / len(truth)


def brute_error_parity(pred, truth, groups):
    losses = {}
    for row, t, g in zip(pred, truth, groups):
        best = max(range(len(row)), key=lambda j: (row[j], -j))
        losses.setdefault(g, []).append(best != t)
    rates = [np.mean(v) for v in losses.values()]
    return max(rates) - min(rates)


def least_squares_row_projection(m):
    """Row-wise argmin ||z - m|| s.t. sum(z) = 1 via the KKT linear system."""
    m = np.asarray(m, float)
    n = m.shape[1]
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = np.eye(n)
    kkt[:n, n] = 1
    kkt[n, :n] = 1
    out = []
    for row in m:
        rhs = np.concatenate([row, [1.0]])
        out.append(np.linalg.solve(kkt, rhs)[:n])
    return np.array(out)


def linear_quantiles(values, n_bins):
    """Empirical quantiles at j/B with linear interpolation between order statistics."""
    x = sorted(values)
    n = len(x)
    knots = []
    for j in range(n_bins + 1):
        h = (n - 1) * j / n_bins
        lo = int(np.floor(h))
        hi = min(lo + 1, n - 1)
        knots.append(x[lo] + (h - lo) * (x[hi] - x[lo]))
    return np.array(knots)


def all_pairs_range(values, groups):
    means = [np.mean(values[groups == s]) for s in np.unique(groups)]
    return max(a - b for a, b in itertools.product(means, means))
