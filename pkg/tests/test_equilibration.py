"""Ruiz equilibration and constraint rescaling."""

import numpy as np
import pytest

from splitproj.equilibration import Scaling, rescale_constraint, ruiz_equilibrate
from splitproj.sets import BoxSet, SimplexSet, FactorSet, lift_box_program, lift_polytope


def norm_band(a):
    row = np.linalg.norm(a, axis=1)
    col = np.linalg.norm(a, axis=0)
    return 1.0 - row.min() / row.max(), 1.0 - col.min() / col.max()


def test_orthogonal_matrix_needs_no_scaling():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    sc = ruiz_equilibrate(q)
    assert sc.converged
    assert sc.iterations == 0
    assert np.array_equal(sc.d_r, np.ones(6))
    assert np.array_equal(sc.d_c, np.ones(6))
    assert np.array_equal(sc.a_scaled, q)


def test_diagonal_spread_is_flattened():
    a = np.diag([100.0, 0.01])
    sc = ruiz_equilibrate(a, tol=1e-6, max_iter=50)
    assert sc.converged
    cond = np.linalg.cond(sc.a_scaled)
    assert cond <= 1.0 + 1e-5


def test_scaled_matrix_is_the_diagonal_product():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((7, 11)) * 10.0 ** rng.uniform(-2, 2, 11)
    sc = ruiz_equilibrate(a)
    manual = (sc.d_r[:, None] * a) * sc.d_c
    assert np.abs(manual - sc.a_scaled).max() <= 1e-12


def test_norms_flat_after_convergence():
    rng = np.random.default_rng(2)
    for _ in range(5):
        a = rng.standard_normal((12, 20))
        sc = ruiz_equilibrate(a, tol=1e-3)
        assert sc.converged
        rb, cb = norm_band(sc.a_scaled)
        assert rb < 1e-3
        assert cb < 1e-3


def test_jacobi_mode_also_flattens():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((10, 15)) * 10.0 ** rng.uniform(-2, 2, 15)
    sc = ruiz_equilibrate(a, mode="jacobi", max_iter=100)
    assert sc.converged
    rb, cb = norm_band(sc.a_scaled)
    assert rb < 1e-3
    assert cb < 1e-3


def test_condition_number_drops_on_skewed_matrices():
    rng = np.random.default_rng(4)
    for _ in range(20):
        g = rng.standard_normal((15, 15))
        d1 = 10.0 ** rng.uniform(-3, 3, 15)
        d2 = 10.0 ** rng.uniform(-3, 3, 15)
        a = d1[:, None] * g * d2
        sc = ruiz_equilibrate(a)
        assert np.linalg.cond(sc.a_scaled) < np.linalg.cond(a)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        ruiz_equilibrate(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        ruiz_equilibrate(np.array([[1.0, 0.0], [0.0, 0.0]]))  # zero row
    with pytest.raises(ValueError):
        ruiz_equilibrate(np.ones((2, 2)), mode="chaotic")


def test_box_bounds_divide_by_column_scaling():
    box = BoxSet(np.zeros(3), np.ones(3))
    scaled = box.scaled(np.array([2.0, 1.0, 0.5]))
    assert np.array_equal(scaled.lower, np.zeros(3))
    assert np.array_equal(scaled.upper, np.array([0.5, 1.0, 2.0]))


def test_rescale_constraint_roundtrip():
    rng = np.random.default_rng(5)
    d, m_eq = 6, 2
    e = rng.standard_normal((m_eq, d)) * 10.0 ** rng.uniform(-2, 2, d)
    anchor = np.clip(rng.standard_normal(d) * 0.3, -0.9, 0.9)
    lifted = lift_box_program(e, e @ anchor, -np.ones(d), np.ones(d))
    sc = ruiz_equilibrate(lifted.hyperplane.a)
    eq = rescale_constraint(lifted, sc)
    # scaled system equals the diagonal product of the original
    manual = (sc.d_r[:, None] * lifted.hyperplane.a) * sc.d_c
    assert np.array_equal(eq.scaled.hyperplane.a, manual)
    assert np.array_equal(eq.scaled.hyperplane.b, sc.d_r * lifted.hyperplane.b)
    # a point feasible for the original maps to a feasible scaled point
    v = np.concatenate([anchor])
    v_scaled = v / eq.dc1
    lo, hi = eq.scaled.k1.box_bounds()
    assert np.all(v_scaled >= lo - 1e-12)
    assert np.all(v_scaled <= hi + 1e-12)


def test_rescale_rejects_shape_and_factor_mismatches():
    rng = np.random.default_rng(6)
    d = 4
    e = rng.standard_normal((2, d))
    anchor = np.zeros(d)
    lifted = lift_box_program(e, e @ anchor, -np.ones(d), np.ones(d))
    good = ruiz_equilibrate(lifted.hyperplane.a)
    with pytest.raises(ValueError):
        rescale_constraint(lifted, Scaling(good.d_r[:-1], good.d_c,
                                           good.a_scaled, 1, True))
    with pytest.raises(ValueError):
        rescale_constraint(lifted, Scaling(-good.d_r, good.d_c,
                                           good.a_scaled, 1, True))
    with pytest.raises(ValueError):
        FactorSet([SimplexSet(3)]).scaled(np.ones(3))
