"""Factor projections against enumeration and search oracles.

Oracles used here:
  box      - per-coordinate ternary search of the 1-D distance function
  simplex  - active-set enumeration over all 2^n supports
  l1 ball  - signed active-set enumeration via the same device
  SOC      - distance minimized over a discretized cone boundary
  hyperplane - KKT residual: result on the plane, correction in the row space
"""

import itertools

import numpy as np
import pytest

from splitproj.exceptions import InfeasibleConstraintError
from splitproj.sets import (
    BoxSet,
    FactorSet,
    FreeSpace,
    Hyperplane,
    L1BallSet,
    LiftedConstraint,
    SecondOrderConeSet,
    SimplexSet,
    lift_intersection,
    lift_polytope,
    lift_soc_program,
    project_box,
    project_factorset,
    project_hyperplane,
    project_l1_ball,
    project_simplex,
    project_soc,
)


def ternary_search_box_oracle(x, lo, hi):
    """Minimize (t - x)^2 over [lo, hi] by ternary search, coordinatewise."""
    out = np.empty_like(x)
    for i in range(x.size):
        a = max(lo[i], x[i] - 10.0) if np.isfinite(lo[i]) else x[i] - 10.0
        b = min(hi[i], x[i] + 10.0) if np.isfinite(hi[i]) else x[i] + 10.0
        if a > b:
            a, b = b, a
        for _ in range(200):
            m1 = a + (b - a) / 3.0
            m2 = b - (b - a) / 3.0
            if (m1 - x[i]) ** 2 <= (m2 - x[i]) ** 2:
                b = m2
            else:
                a = m1
        out[i] = 0.5 * (a + b)
    return out


def simplex_enumeration_oracle(x, radius):
    """Best feasible candidate over all nonempty supports."""
    n = x.size
    best = None
    best_dist = np.inf
    for mask in itertools.product([0, 1], repeat=n):
        s = np.array(mask, dtype=bool)
        k = s.sum()
        if k == 0:
            continue
        y = np.zeros(n)
        y[s] = x[s] - (x[s].sum() - radius) / k
        if (y[s] < -1e-12).any():
            continue
        dist = np.linalg.norm(y - x)
        if dist < best_dist:
            best_dist = dist
            best = y
    return best


def l1_enumeration_oracle(x, radius):
    """Signed supports: p_S = sign(x_S) (|x_S| - theta) with sum |p| = radius."""
    if np.abs(x).sum() <= radius:
        return x.copy()
    n = x.size
    best = None
    best_dist = np.inf
    for mask in itertools.product([0, 1], repeat=n):
        s = np.array(mask, dtype=bool)
        k = s.sum()
        if k == 0:
            continue
        theta = (np.abs(x[s]).sum() - radius) / k
        mags = np.abs(x[s]) - theta
        if (mags < -1e-12).any():
            continue
        y = np.zeros(n)
        y[s] = np.sign(x[s]) * np.maximum(mags, 0.0)
        dist = np.linalg.norm(y - x)
        if dist < best_dist:
            best_dist = dist
            best = y
    return best


def soc_boundary_oracle(x, n_theta=20000):
    """Distance to the 3-D cone via boundary discretization and the two cases.

    Boundary points are t * (cos a, sin a, 1); for each angle the best t >= 0
    solves a scalar quadratic.
    """
    v, t = x[:2], x[2]
    candidates = [np.linalg.norm(x - np.zeros(3))]  # apex
    if np.linalg.norm(v) <= t:
        return 0.0
    for a in np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False):
        u = np.array([np.cos(a), np.sin(a)])
        tt = max(0.0, (v @ u + t) / 2.0)
        p = np.concatenate([tt * u, [tt]])
        candidates.append(np.linalg.norm(x - p))
    return min(candidates)


def test_box_clamp_examples():
    box = BoxSet([0.0, -np.inf], [1.0, 0.0])
    assert np.array_equal(project_box(box, np.array([2.0, -3.0])), [1.0, -3.0])
    assert np.array_equal(project_box(box, np.array([0.5, 1.0])), [0.5, 0.0])


def test_box_against_ternary_search():
    rng = np.random.default_rng(0)
    lo = np.array([-1.0, 0.0, -np.inf, 2.0])
    hi = np.array([1.0, 0.0, 5.0, np.inf])
    box = BoxSet(lo, hi)
    for _ in range(20):
        x = rng.normal(scale=3.0, size=4)
        got = project_box(box, x)
        want = ternary_search_box_oracle(x, lo, hi)
        assert np.abs(got - want).max() <= 1e-9


def test_box_rejects_crossed_bounds():
    with pytest.raises(ValueError):
        BoxSet([1.0], [0.0])


def test_simplex_uniform_point():
    simplex = SimplexSet(4, radius=1.0)
    got = project_simplex(simplex, np.full(4, 0.25))
    assert np.abs(got - 0.25).max() <= 1e-15


def test_simplex_against_enumeration():
    rng = np.random.default_rng(1)
    for n in (2, 3, 5, 6):
        simplex = SimplexSet(n, radius=1.3)
        for _ in range(25):
            x = rng.normal(scale=2.0, size=n)
            got = project_simplex(simplex, x)
            want = simplex_enumeration_oracle(x, 1.3)
            assert np.abs(got - want).max() <= 1e-9
            assert abs(got.sum() - 1.3) <= 1e-9
            assert got.min() >= -1e-12


def test_l1_interior_identity():
    ball = L1BallSet(3, radius=2.0)
    x = np.array([0.5, -0.5, 0.5])
    assert np.array_equal(project_l1_ball(ball, x), x)


def test_l1_zero_radius():
    ball = L1BallSet(3, radius=0.0)
    assert np.array_equal(project_l1_ball(ball, np.array([1.0, -2.0, 3.0])), np.zeros(3))


def test_l1_against_enumeration():
    rng = np.random.default_rng(2)
    for n in (2, 4, 6):
        ball = L1BallSet(n, radius=0.8)
        for _ in range(25):
            x = rng.normal(scale=1.5, size=n)
            got = project_l1_ball(ball, x)
            want = l1_enumeration_oracle(x, 0.8)
            assert np.abs(got - want).max() <= 1e-9


def test_soc_interior_and_polar():
    cone = SecondOrderConeSet(3)
    inside = np.array([0.3, 0.4, 1.0])
    assert np.array_equal(project_soc(cone, inside), inside)
    polar = np.array([0.3, 0.4, -1.0])
    assert np.array_equal(project_soc(cone, polar), np.zeros(3))


def test_soc_projection_on_boundary():
    cone = SecondOrderConeSet(3)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.normal(scale=2.0, size=3)
        p = project_soc(cone, x)
        v, t = p[:2], p[2]
        assert np.linalg.norm(v) <= t + 1e-12


def test_soc_distance_against_boundary_search():
    cone = SecondOrderConeSet(3)
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 10:
        x = rng.normal(scale=2.0, size=3)
        if np.linalg.norm(x[:2]) <= x[2]:
            continue
        got = np.linalg.norm(x - project_soc(cone, x))
        want = soc_boundary_oracle(x)
        assert abs(got - want) <= 1e-6
        checked += 1


def test_hyperplane_coordinate_example():
    h = Hyperplane(np.array([[1.0, 0.0]]), np.array([1.0]))
    assert np.allclose(project_hyperplane(h, np.zeros(2)), [1.0, 0.0], atol=1e-14)


def test_hyperplane_kkt_residuals():
    rng = np.random.default_rng(5)
    for _ in range(10):
        a = rng.normal(size=(4, 9))
        b = rng.normal(size=4)
        h = Hyperplane(a, b)
        s = rng.normal(size=9)
        p = project_hyperplane(h, s)
        assert np.abs(a @ p - b).max() <= 1e-9
        # correction must lie in the row space: no component survives I - A^+A
        corr = p - s
        assert np.abs(corr - h.pinv.apply_rows((corr @ a.T)[None])[0]).max() <= 1e-8


def test_hyperplane_idempotent():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(3, 7))
    b = rng.normal(size=3)
    h = Hyperplane(a, b)
    s = rng.normal(size=7)
    p = project_hyperplane(h, s)
    assert np.abs(project_hyperplane(h, p) - p).max() <= 1e-10


def test_hyperplane_inconsistent_rejected():
    a = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(InfeasibleConstraintError):
        Hyperplane(a, np.array([0.0, 1.0]))


def test_hyperplane_consistent_rank_deficient_accepted():
    a = np.array([[1.0, 0.0], [2.0, 0.0]])
    h = Hyperplane(a, np.array([1.0, 2.0]))
    assert np.allclose(project_hyperplane(h, np.array([5.0, 5.0])), [1.0, 5.0])


def test_factorset_mixed_blocks():
    fs = FactorSet([BoxSet([0.0], [1.0]), SecondOrderConeSet(3), FreeSpace(2)])
    assert fs.dim == 6
    x = np.array([2.0, 0.3, 0.4, -1.0, 7.0, -7.0])
    got = project_factorset(fs, x)
    assert got[0] == 1.0
    assert np.array_equal(got[1:4], np.zeros(3))
    assert np.array_equal(got[4:], x[4:])


def test_factorset_rejects_wrong_scale_target():
    fs = FactorSet([SimplexSet(3)])
    with pytest.raises(ValueError):
        fs.scaled(np.ones(3))


ALL_FACTORS = [
    BoxSet(np.array([-1.0, 0.0, -np.inf]), np.array([1.0, 0.0, 2.0])),
    SecondOrderConeSet(4),
    SimplexSet(5, radius=2.0),
    L1BallSet(4, radius=1.5),
    FreeSpace(3),
]


@pytest.mark.parametrize("factor", ALL_FACTORS, ids=lambda f: type(f).__name__)
def test_projection_idempotent(factor):
    rng = np.random.default_rng(8)
    x = rng.normal(scale=2.0, size=(40, factor.dim))
    p = factor.project_batch(x)
    pp = factor.project_batch(p)
    assert np.abs(pp - p).max() <= 1e-9


@pytest.mark.parametrize("factor", ALL_FACTORS, ids=lambda f: type(f).__name__)
def test_projection_nonexpansive(factor):
    rng = np.random.default_rng(9)
    x = rng.normal(scale=2.0, size=(40, factor.dim))
    y = rng.normal(scale=2.0, size=(40, factor.dim))
    px = factor.project_batch(x)
    py = factor.project_batch(y)
    assert np.all(
        np.linalg.norm(px - py, axis=1) <= np.linalg.norm(x - y, axis=1) + 1e-9
    )


def test_lift_polytope_block_layout():
    e = np.array([[1.0, 2.0]])
    c = np.array([[3.0, 4.0], [5.0, 6.0]])
    lc = lift_polytope(e, [7.0], c, [-1.0, -2.0], [1.0, 2.0])
    assert lc.d == 2 and lc.n == 4 and lc.m == 3
    want = np.array([
        [1.0, 2.0, 0.0, 0.0],
        [3.0, 4.0, -1.0, 0.0],
        [5.0, 6.0, 0.0, -1.0],
    ])
    assert np.array_equal(lc.hyperplane.a, want)
    assert np.array_equal(lc.b, [7.0, 0.0, 0.0])
    assert isinstance(lc.k1.factors[0], FreeSpace)
    assert isinstance(lc.k2.factors[0], BoxSet)


def test_lift_soc_program_layout():
    a = np.arange(6.0).reshape(3, 2)
    lc = lift_soc_program(a, [1.0, 2.0, 3.0], d1=2, d2=3)
    assert lc.d == lc.n == 5
    assert np.array_equal(lc.hyperplane.a, np.concatenate([a, np.eye(3)], axis=1))
    assert isinstance(lc.k1.factors[0], FreeSpace)
    assert isinstance(lc.k1.factors[1], SecondOrderConeSet)
    assert lc.k2.dim == 0


def test_lift_intersection_polytope_only_matches_lift_polytope():
    rng = np.random.default_rng(10)
    e = rng.normal(size=(2, 4))
    q = rng.normal(size=2)
    c = rng.normal(size=(3, 4))
    lo = -np.ones(3)
    hi = np.ones(3)
    via_poly = lift_polytope(e, q, c, lo, hi)
    via_inter = lift_intersection(e, q, c, lo, hi)
    assert np.array_equal(via_poly.hyperplane.a, via_inter.hyperplane.a)
    assert np.array_equal(via_poly.b, via_inter.b)


def test_lift_intersection_soc_only_layout():
    f = np.array([[1.0, 0.0], [0.0, 1.0]])
    c = np.array([0.5, -0.5])
    fv = np.array([0.0, 0.0])
    lc = lift_intersection(
        np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)), np.zeros(0), np.zeros(0),
        soc_parts=[(f, c, fv, 2.0)],
    )
    assert lc.d == 2 and lc.n == 5 and lc.m == 3
    want = np.array([
        [1.0, 0.0, -1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, -1.0],
    ])
    assert np.array_equal(lc.hyperplane.a, want)
    assert np.array_equal(lc.b, [-0.5, 0.5, -2.0])
    assert isinstance(lc.k2.factors[0], SecondOrderConeSet)


def test_raw_violation_components():
    lc = lift_polytope(
        np.array([[1.0, 1.0]]), [1.0],
        np.array([[1.0, 0.0]]), [-0.5], [0.5],
    )
    y = np.array([0.8, 0.2])
    assert lc.raw.violation(y) == pytest.approx(0.3)
    y_eq_bad = np.array([0.4, 0.2])
    assert lc.raw.violation(y_eq_bad) == pytest.approx(0.4)


def test_lifted_constraint_with_rhs_updates_raw():
    lc = lift_polytope(
        np.array([[1.0, 0.0]]), [1.0],
        np.array([[0.0, 1.0]]), [-1.0], [1.0],
    )
    lc2 = lc.with_rhs(np.array([3.0, 0.0]))
    assert lc2.raw.violation(np.array([3.0, 0.0])) == 0.0
    assert lc.raw.violation(np.array([1.0, 0.0])) == 0.0
    assert lc2.hyperplane.pinv is lc.hyperplane.pinv


def test_dimension_mismatch_rejected():
    h = Hyperplane(np.ones((1, 3)), np.ones(1))
    with pytest.raises(ValueError):
        LiftedConstraint(h, FactorSet([FreeSpace(2)]))
