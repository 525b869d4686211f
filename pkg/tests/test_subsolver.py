import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parity_forge.subsolver import (
    _AnchoredProblem,
    ClassSubproblem,
    InfeasibleError,
    class_objective,
    solve_class,
    solve_group,
    value_function,
)
from oracles import box_slab_projection, class_grid_oracle

F5 = np.array([0.50073809, 0.67924732, 0.33551729, -0.0343551, 0.22719753])
F12 = np.array([0.31709638, 0.97987377, 0.91236054, 0.04484646, 0.15101524, 0.0363079,
                0.58486318, 0.27196778, 0.67344281, -0.6236624, 1.08327439, 0.25178392])
# frozen from the box/slab Dykstra projection and the nested grid search
F5_OBJECTIVE = -0.33300268706803193
F12_OBJECTIVE = -1.26807182480879


def test_group_unconstrained_clip():
    y, m = solve_group([0.5, 0.5], (0.0, 1.0), 1.0)
    np.testing.assert_allclose(y, [0.5, 0.5])
    assert m == pytest.approx(0.5)


def test_group_pinned_mean():
    # the clipped point (1, 0) already has mean 1/2 and beats the interior
    # candidate (3/4, 1/4): -1/2 < -7/16
    y, m = solve_group([1.0, 0.0], (0.5, 0.5), 1.0)
    np.testing.assert_allclose(y, [1.0, 0.0], atol=1e-12)
    assert m == pytest.approx(0.5, abs=1e-12)
    assert class_objective(y, [1.0, 0.0], 1.0) < class_objective(np.array([0.75, 0.25]), [1.0, 0.0], 1.0)


def test_group_interior_shift():
    # f = (1, 0.5), mean pinned at 1/2: shared shift mu = 1/4 keeps both coordinates free
    y, m = solve_group([1.0, 0.5], (0.5, 0.5), 1.0)
    np.testing.assert_allclose(y, [0.75, 0.25], atol=1e-12)
    assert (1.0 - y[0]) == pytest.approx(0.5 - y[1], abs=1e-12)


def test_group_five_point_instance():
    y, m = solve_group(F5, (0.3, 0.4), 1.3)
    assert 0.3 - 1e-10 <= m <= 0.4 + 1e-10
    assert class_objective(y, F5, 1.3) == pytest.approx(F5_OBJECTIVE, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_group_matches_projection(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    f = rng.normal(0.4, 0.8, n)
    w = float(rng.uniform(0.5, 2.0))
    lo = float(rng.uniform(0, 0.9))
    hi = lo + float(rng.uniform(0, 0.3))
    y, m = solve_group(f, (lo, hi), w)
    # minimizing (w/2)|y|^2 - y.f is projecting f/w onto the feasible set
    ref = box_slab_projection(f / w, lo, min(hi, 1.0))
    assert class_objective(y, f, w) <= class_objective(ref, f, w) + 1e-9
    assert np.all((y >= 0) & (y <= 1))
    assert lo - 1e-10 <= m <= hi + 1e-10


def test_group_infeasible_interval():
    with pytest.raises(InfeasibleError):
        solve_group([0.2, 0.3], (1.2, 1.5), 1.0)
    with pytest.raises(InfeasibleError):
        solve_group([0.2, 0.3], (0.6, 0.4), 1.0)


def test_class_loose_epsilon_is_clip():
    rng = np.random.default_rng(2)
    f = rng.normal(0.5, 1.0, 30)
    g = np.arange(30) % 3
    sol = solve_class(ClassSubproblem(f, g, 1.0, 1.7))
    np.testing.assert_array_equal(sol.values, np.clip(f / 1.7, 0, 1))


def test_class_two_point_anchor():
    sol = solve_class(ClassSubproblem(np.array([1.0, 0.0]), np.array([0, 1]), 0.0, 1.0))
    np.testing.assert_allclose(sol.values, [0.5, 0.5], atol=1e-6)
    assert sol.anchor == pytest.approx(0.5, abs=1e-6)


def test_class_twelve_point_instance():
    g = np.arange(12) % 3
    sol = solve_class(ClassSubproblem(F12, g, 0.05, 1.5))
    assert sol.objective == pytest.approx(F12_OBJECTIVE, abs=1e-5)
    assert sol.mean_range <= 0.05 + 2e-10


def test_class_matches_grid_oracle():
    rng = np.random.default_rng(123)
    for _ in range(15):
        n = int(rng.integers(4, 13))
        r = int(rng.integers(2, 4))
        g = np.concatenate([np.arange(r), rng.integers(0, r, n - r)])
        f = rng.normal(0.4, 0.7, n)
        eps = float(rng.choice([0.0, 0.05, 0.1]))
        w = float(rng.uniform(0.5, 2.0))
        sol = solve_class(ClassSubproblem(f, g, eps, w))
        ref, _ = class_grid_oracle(f, g, eps, w)
        assert sol.objective == pytest.approx(ref, abs=1e-4)
        assert sol.objective <= ref + 1e-9


def test_value_function_is_convex():
    rng = np.random.default_rng(8)
    f = rng.normal(0.3, 0.6, 40)
    g = rng.integers(0, 4, 40)
    g[:4] = np.arange(4)
    anchors = np.linspace(0, 0.95, 100)
    v = value_function(ClassSubproblem(f, g, 0.05, 1.5), anchors)
    second = v[:-2] - 2 * v[1:-1] + v[2:]
    assert second.min() >= -1e-10


def test_solution_preserves_order_within_groups():
    rng = np.random.default_rng(21)
    f = rng.normal(0.5, 0.5, 50)
    g = rng.integers(0, 3, 50)
    g[:3] = np.arange(3)
    sol = solve_class(ClassSubproblem(f, g, 0.0, 1.5))
    for s in range(3):
        idx = np.flatnonzero(g == s)
        order = np.argsort(f[idx])
        assert np.all(np.diff(sol.values[idx][order]) >= -1e-15)


def _random_problem(rng, n=30, r=3):
    g = np.concatenate([np.arange(r), rng.integers(0, r, n - r)])
    return ClassSubproblem(rng.normal(0.4, 0.7, n), g, float(rng.choice([0.0, 0.03, 0.1])),
                           float(rng.uniform(0.5, 2.0)))


def test_slope_matches_finite_differences():
    rng = np.random.default_rng(40)
    for _ in range(10):
        ap = _AnchoredProblem(_random_problem(rng))
        for a in rng.uniform(0.05, 0.85, 5):
            h = 1e-6
            fd = (ap.value(a + h) - ap.value(a - h)) / (2 * h)
            assert ap.slope(a) == pytest.approx(fd, abs=1e-4)


def test_anchor_beats_dense_scan():
    rng = np.random.default_rng(41)
    for _ in range(20):
        prob = _random_problem(rng, n=int(rng.integers(4, 40)), r=int(rng.integers(2, 5)))
        ap = _AnchoredProblem(prob)
        lo = max(0.0, ap.free_means.min() - prob.epsilon)
        hi = min(1.0, ap.free_means.max())
        a = ap.best_anchor(lo, hi)
        assert lo <= a <= hi
        scan = value_function(prob, np.linspace(lo, hi, 2001))
        assert ap.value(a) <= scan.min() + 1e-12


def test_matches_conic_solver():
    cp = pytest.importorskip("cvxpy")
    if "CLARABEL" not in cp.installed_solvers():
        pytest.skip("Clarabel not installed")
    rng = np.random.default_rng(31)
    for _ in range(5):
        n, r = 15, 3
        g = np.concatenate([np.arange(r), rng.integers(0, r, n - r)])
        f = rng.normal(0.4, 0.6, n)
        eps, w = 0.03, 1.5
        y = cp.Variable(n)
        means = [cp.sum(y[g == s]) / np.sum(g == s) for s in range(r)]
        cons = [y >= 0, y <= 1]
        cons += [means[a] - means[b] <= eps for a in range(r) for b in range(r) if a != b]
        prob = cp.Problem(cp.Minimize(0.5 * w * cp.sum_squares(y) - f @ y), cons)
        prob.solve(solver="CLARABEL")
        sol = solve_class(ClassSubproblem(f, g, eps, w))
        assert sol.objective == pytest.approx(prob.value, abs=1e-6)


def test_subproblem_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ClassSubproblem(np.array([0.1, np.inf]), np.array([0, 1]), 0.0, 1.0)
    with pytest.raises(ValueError):
        ClassSubproblem(np.array([0.1, 0.2]), np.array([0, 1]), -0.1, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_class_with_tied_scores(seed):
    # repeated scores and values beyond [0, w] create flat pieces and jumps in V'
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 10))
    r = int(rng.integers(2, min(n, 3) + 1))
    g = np.concatenate([np.arange(r), rng.integers(0, r, n - r)])
    f = rng.choice([-0.5, 0.0, 0.25, 0.5, 1.0, 1.5], size=n)
    eps = float(rng.choice([0.0, 0.1, 0.25]))
    sol = solve_class(ClassSubproblem(f, g, eps, 1.0))
    ref, _ = class_grid_oracle(f, g, eps, 1.0)
    assert sol.objective <= ref + 1e-9
    assert sol.mean_range <= eps + 2e-10
