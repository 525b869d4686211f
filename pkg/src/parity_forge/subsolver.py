"""Exact solver for the per-class debiasing subproblem.

For one class column ``f`` the task is::

    minimize   (w/2) ||y||^2 - y.f
    subject to 0 <= y <= 1
               max_s mean_s(y) - min_s mean_s(y) <= eps

Introducing a free anchor ``a`` turns the range constraint into
``a <= mean_s(y) <= a + eps`` for every group ``s``. For fixed ``a`` the
groups decouple, and within a group the KKT conditions give
``y_i = clip((f_i - mu) / w, 0, 1)`` for a scalar shift ``mu``. The group
mean is a nonincreasing piecewise-linear function of ``mu`` with breakpoints
at ``f_i`` and ``f_i - w``, so the shift matching a target mean is found by
bisecting over the sorted breakpoints and interpolating on the bracketing
segment. The optimal value ``V(a)`` is convex in ``a`` (partial minimization
of a jointly convex problem). Its slope is ``-sum_s n_s mu_s`` over the groups
pinned to an end of ``[a, a + eps]``, and since every ``mu_s`` is piecewise
linear in its target mean, ``V'`` is piecewise linear in ``a`` with known
breakpoints. The anchor is the zero of ``V'``, located by bisecting over
those breakpoints and interpolating on the final segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GroupVector, ParityForgeError, ValidationError, as_groups

class InfeasibleError(ParityForgeError, ValueError):
    """The requested mean interval does not meet ``[0, 1]``."""


class _GroupProfile:
    """Sorted scores of one group with prefix sums for O(log n) queries."""

    def __init__(self, f: np.ndarray, w: float):
        self.w = float(w)
        self.n = f.size
        self.f = np.sort(f)
        self.csum = np.concatenate(([0.0], np.cumsum(self.f)))
        self.csq = np.concatenate(([0.0], np.cumsum(self.f * self.f)))
        self.bp = np.unique(np.concatenate((self.f - self.w, self.f)))
        self.bp_mean = np.minimum.accumulate(self.mean(self.bp))
        self.free_mean = float(self.mean(0.0))

    def _split(self, mu):
        lo = np.searchsorted(self.f, mu, side="right")  # f <= mu  -> y = 0
        hi = np.searchsorted(self.f, mu + self.w, side="left")  # f >= mu + w -> y = 1
        return lo, hi

    def mean(self, mu):
        lo, hi = self._split(mu)
        partial = (self.csum[hi] - self.csum[lo] - mu * (hi - lo)) / self.w
        return ((self.n - hi) + partial) / self.n

    def value(self, mu: float) -> float:
        """Objective sum over the group at shift ``mu``."""
        lo, hi = self._split(mu)
        full = (self.n - hi) * self.w / 2.0 - (self.csum[-1] - self.csum[hi])
        partial = ((hi - lo) * mu * mu - (self.csq[hi] - self.csq[lo])) / (2.0 * self.w)
        return float(full + partial)

    def shift_for_mean(self, target: float) -> float:
        if target >= self.bp_mean[0]:
            return float(self.bp[0])
        if target <= self.bp_mean[-1]:
            return float(self.bp[-1])
        # bp_mean is nonincreasing; find j with bp_mean[j-1] > target >= bp_mean[j]
        j = int(np.searchsorted(-self.bp_mean, -target, side="left"))
        m0, m1 = self.bp_mean[j - 1], self.bp_mean[j]
        b0, b1 = self.bp[j - 1], self.bp[j]
        if m0 - m1 <= 0.0:
            return float(b1)
        return float(b0 + (m0 - target) / (m0 - m1) * (b1 - b0))

    def shift_for_interval(self, lo: float, hi: float) -> float:
        if lo <= self.free_mean <= hi:
            return 0.0
        return self.shift_for_mean(hi if self.free_mean > hi else lo)


def _clip_interval(lo: float, hi: float) -> tuple[float, float]:
    lo_c, hi_c = max(lo, 0.0), min(hi, 1.0)
    if lo > hi or lo_c > hi_c:
        raise InfeasibleError(f"mean interval [{lo}, {hi}] does not intersect [0, 1]")
    return lo_c, hi_c


def solve_group(scores, interval, quad_weight: float, inner_tol: float = 1e-10):
    """Minimize ``(w/2)||y||^2 - y.f`` over ``y in [0,1]^n`` with ``mean(y)`` in ``interval``.

    Returns ``(values, achieved_mean)``.
    """
    f = np.asarray(scores, dtype=float)
    if f.ndim != 1 or f.size == 0:
        raise ValidationError(ValidationError.SHAPE, "scores must be a nonempty 1-D vector")
    if not quad_weight > 0:
        raise ValidationError(ValidationError.ENTRY_RANGE, "quad_weight must be > 0")
    lo, hi = _clip_interval(*interval)
    prof = _GroupProfile(f, quad_weight)
    mu = prof.shift_for_interval(lo, hi)
    y = np.clip((f - mu) / quad_weight, 0.0, 1.0)
    m = float(y.mean())
    if not lo - inner_tol <= m <= hi + inner_tol:  # pragma: no cover - guards float drift
        raise ParityForgeError(f"group solve missed interval [{lo}, {hi}] with mean {m}")
    return y, m


@dataclass(frozen=True)
class ClassSubproblem:
    scores: np.ndarray
    groups: GroupVector
    epsilon: float
    quad_weight: float

    def __post_init__(self):
        f = np.asarray(self.scores, dtype=float)
        g = as_groups(self.groups)
        if f.shape != (len(g),):
            raise ValidationError(ValidationError.LENGTH_MISMATCH, "scores length must equal groups length")
        if not np.all(np.isfinite(f)):
            raise ValidationError(ValidationError.NON_FINITE, "scores contain non-finite values")
        if not self.quad_weight > 0:
            raise ValidationError(ValidationError.ENTRY_RANGE, "quad_weight must be > 0")
        if not self.epsilon >= 0:
            raise ValidationError(ValidationError.ENTRY_RANGE, "epsilon must be >= 0")
        object.__setattr__(self, "scores", f)
        object.__setattr__(self, "groups", g)


@dataclass(frozen=True)
class SubproblemSolution:
    values: np.ndarray
    anchor: float
    group_means: np.ndarray
    objective: float

    @property
    def mean_range(self) -> float:
        return float(self.group_means.max() - self.group_means.min())


def class_objective(values, scores, quad_weight: float) -> float:
    y = np.asarray(values, dtype=float)
    return float(0.5 * quad_weight * (y @ y) - y @ np.asarray(scores, dtype=float))


class _AnchoredProblem:
    """Per-group profiles plus the partial-minimum value function ``V(a)``."""

    def __init__(self, problem: ClassSubproblem):
        self.problem = problem
        self.members = problem.groups.members()
        w = problem.quad_weight
        self.profiles = [_GroupProfile(problem.scores[idx], w) for idx in self.members]
        self.free_means = np.array([p.free_mean for p in self.profiles])

    def intervals(self, a: float):
        eps = self.problem.epsilon
        return [(a, a + eps)] * len(self.profiles)

    def shifts(self, a: float) -> list[float]:
        out = []
        for prof, (lo, hi) in zip(self.profiles, self.intervals(a)):
            lo, hi = _clip_interval(lo, hi)
            out.append(prof.shift_for_interval(lo, hi))
        return out

    def value(self, a: float) -> float:
        return sum(p.value(mu) for p, mu in zip(self.profiles, self.shifts(a)))

    def slope(self, a: float) -> float:
        """``V'(a)``: only groups held at an interval end contribute."""
        eps = self.problem.epsilon
        total = 0.0
        for prof in self.profiles:
            if prof.free_mean < a:
                total -= prof.n * prof.shift_for_mean(min(a, 1.0))
            elif prof.free_mean > a + eps:
                total -= prof.n * prof.shift_for_mean(min(a + eps, 1.0))
        return total

    def knots(self, lo: float, hi: float) -> np.ndarray:
        """Sorted anchors in ``[lo, hi]`` where ``V'`` may change slope or jump."""
        eps = self.problem.epsilon
        pts = [np.array([lo, hi]), self.free_means, self.free_means - eps]
        for prof in self.profiles:
            pts += [prof.bp_mean, prof.bp_mean - eps]
        k = np.unique(np.concatenate(pts))
        return k[(k >= lo) & (k <= hi)]

    def best_anchor(self, lo: float, hi: float) -> float:
        """Exact minimizer of the convex ``V`` on ``[lo, hi]``.

        ``V'`` is linear strictly inside each knot segment but may jump at a
        knot, so it is only sampled at segment interiors.
        """
        k = self.knots(lo, hi)
        if k.size < 2:
            return lo
        left, right = k[:-1], k[1:]
        # first segment whose midpoint slope is >= 0
        i, j = 0, left.size
        while i < j:
            m = (i + j) // 2
            if self.slope(0.5 * (left[m] + right[m])) >= 0.0:
                j = m
            else:
                i = m + 1
        if i > 0:
            # the zero may sit in the right half of the previous segment
            r = self._segment_root(left[i - 1], right[i - 1])
            if r < right[i - 1]:
                return r
        if i == left.size:
            return hi
        return self._segment_root(left[i], right[i])

    def _segment_root(self, a0: float, a1: float) -> float:
        """Zero of the linear piece of ``V'`` on ``(a0, a1)``, clamped to the segment."""
        x0, x1 = a0 + 0.25 * (a1 - a0), a0 + 0.75 * (a1 - a0)
        d0, d1 = self.slope(x0), self.slope(x1)
        if d1 <= d0:
            # flat piece: the whole segment is optimal if it is level at zero
            if d0 == 0.0:
                return float(x0)
            return float(a0 if d0 > 0.0 else a1)
        root = x0 - d0 * (x1 - x0) / (d1 - d0)
        return float(min(max(root, a0), a1))

    def assemble(self, shifts) -> np.ndarray:
        w = self.problem.quad_weight
        y = np.empty_like(self.problem.scores)
        for idx, mu in zip(self.members, shifts):
            y[idx] = np.clip((self.problem.scores[idx] - mu) / w, 0.0, 1.0)
        return y


def solve_class(problem: ClassSubproblem, outer_tol: float = 1e-9, inner_tol: float = 1e-10) -> SubproblemSolution:
    """Exact minimizer of the range-constrained class subproblem.

    ``outer_tol`` is accepted for interface compatibility; the anchor search
    is exact and needs no tolerance. ``inner_tol`` is the slack allowed on
    the group-mean range check.
    """
    ap = _AnchoredProblem(problem)
    eps = problem.epsilon
    fm = ap.free_means
    if fm.max() - fm.min() <= eps:
        # unconstrained clip already satisfies the range constraint
        a = float(fm.min())
        shifts = [0.0] * len(ap.profiles)
    else:
        # outside [min free mean - eps, max free mean] every group moves the same way,
        # so the optimal anchor lies inside it
        lo = max(0.0, float(fm.min()) - eps)
        hi = min(1.0, float(fm.max()))
        a = ap.best_anchor(lo, hi)
        shifts = ap.shifts(a)
    y = ap.assemble(shifts)
    means = np.array([y[idx].mean() for idx in ap.members])
    sol = SubproblemSolution(
        values=y,
        anchor=a,
        group_means=means,
        objective=class_objective(y, problem.scores, problem.quad_weight),
    )
    if sol.mean_range > eps + 2 * inner_tol:  # pragma: no cover - guards float drift
        raise ParityForgeError(f"class solve violated range constraint: {sol.mean_range} > {eps}")
    return sol


def value_function(problem: ClassSubproblem, anchors) -> np.ndarray:
    """``V(a)`` evaluated at each anchor; exposed for diagnostics and tests."""
    ap = _AnchoredProblem(problem)
    return np.array([ap.value(float(a)) for a in np.atleast_1d(anchors)])
