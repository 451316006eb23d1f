"""Problem families: generation certificates, objectives, reference solutions.

Independent oracles used here: a direct KKT linear solve for
equality-constrained QPs, a dense grid search for a 2-D box QP, the cone
KKT certificate (membership, orthogonality, stationarity, zero gap) for
the SOC construction, and sampled feasible perturbations for trajectory
optimality.
"""

import hashlib

import numpy as np
import pytest

from splitproj import problems as pr
from splitproj.autodiff import Tape, Tensor, backward
from splitproj.exceptions import ConfigError, InfeasibleConstraintError
from splitproj.oracle import QPStructure
from splitproj.projection import DRSettings, dr_project
from splitproj.sets import SecondOrderConeSet, lift_box_program


def kkt_equality_oracle(q_diag, q_lin, e_mat, x):
    """Direct solve of [2Q E'; E 0] [y; lam] = [-q; x]."""
    d = q_diag.size
    m = e_mat.shape[0]
    kkt = np.zeros((d + m, d + m))
    kkt[:d, :d] = 2.0 * np.diag(q_diag)
    kkt[:d, d:] = e_mat.T
    kkt[d:, :d] = e_mat
    sol = np.linalg.solve(kkt, np.concatenate([-q_lin, x]))
    return sol[:d]


def grid_oracle_2d(value, lo, hi, n=2001):
    g0 = np.linspace(lo[0], hi[0], n)
    g1 = np.linspace(lo[1], hi[1], n)
    xx, yy = np.meshgrid(g0, g1, indexing="ij")
    vals = value(xx, yy)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    return np.array([g0[k[0]], g1[k[1]]])


def fd_objective_grad(spec, y, x=None, eps=1e-6):
    g = np.zeros_like(y)
    for j in range(y.size):
        e = np.zeros_like(y)
        e[j] = eps
        g[j] = (
            pr.evaluate_objective(spec, y + e, x) - pr.evaluate_objective(spec, y - e, x)
        ) / (2 * eps)
    return g


# -- objectives -------------------------------------------------------------


def test_quadratic_kinds_vanish_at_zero():
    rng = np.random.default_rng(0)
    params = {"q_diag": rng.uniform(0.5, 1.5, 7), "q_lin": rng.normal(size=7)}
    for kind in ("quadratic", "quadratic_sin"):
        spec = pr.ObjectiveSpec(kind, params)
        assert pr.evaluate_objective(spec, np.zeros(7)) == 0.0


def test_quadratic_requires_positive_diagonal():
    with pytest.raises(ConfigError):
        pr.ObjectiveSpec("quadratic", {"q_diag": np.array([1.0, 0.0]), "q_lin": np.zeros(2)})
    with pytest.raises(ConfigError):
        pr.ObjectiveSpec("nonsense", {})


def test_objective_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    d = 9
    specs = [
        pr.ObjectiveSpec(
            "quadratic", {"q_diag": rng.uniform(0.5, 1.5, d), "q_lin": rng.normal(size=d)}
        ),
        pr.ObjectiveSpec(
            "quadratic_sin",
            {"q_diag": rng.uniform(0.5, 1.5, d), "q_lin": rng.normal(size=d)},
        ),
        pr.ObjectiveSpec(
            "mpc_tracking",
            {"weights": rng.uniform(0.0, 2.0, d), "targets": rng.normal(size=d)},
        ),
    ]
    y = rng.normal(size=d)
    for spec in specs:
        assert np.abs(pr.objective_grad(spec, y) - fd_objective_grad(spec, y)).max() <= 1e-6


def test_linear_objective_uses_context_slice():
    spec = pr.ObjectiveSpec(
        "linear",
        {
            "context_cols": np.array([2, 3], dtype=np.int64),
            "y_cols": np.array([0, 1], dtype=np.int64),
        },
    )
    x = np.array([9.0, 9.0, 2.0, -1.0])
    y = np.array([3.0, 4.0, 100.0])
    assert pr.evaluate_objective(spec, y, x) == pytest.approx(2.0)
    g = pr.objective_grad(spec, y, x)
    assert np.allclose(g, [2.0, -1.0, 0.0])
    with pytest.raises(ConfigError):
        pr.evaluate_objective(spec, y)


def test_objective_loss_matches_values_and_backpropagates():
    rng = np.random.default_rng(2)
    d, b = 6, 5
    spec = pr.ObjectiveSpec(
        "quadratic_sin",
        {"q_diag": rng.uniform(0.5, 1.5, d), "q_lin": rng.normal(size=d)},
    )
    yy = rng.normal(size=(b, d))
    with Tape() as tape:
        yt = Tensor(yy, requires_grad=True)
        loss = pr.objective_loss(spec, yt)
    assert loss.values == pytest.approx(np.mean(pr.objective_values(spec, yy)))
    g = backward(tape, 1.0, loss)[yt]
    assert np.abs(g - pr.objective_grad(spec, yy) / b).max() <= 1e-12


def test_trajectory_objective_batch_and_gradient():
    ds = pr.gen_trajectory_family(2, 8, seed=11, n_samples=6, lambda_pref=1.0, nu_cov=1.0)
    rng = np.random.default_rng(3)
    raw = rng.normal(size=(4, ds.params["raw_dim"]))
    yy = pr.trajectory_completion(ds, raw, ds.contexts[:4])
    vals = pr.objective_values(ds.objective, yy)
    assert vals.shape == (4,)
    single = [pr.evaluate_objective(ds.objective, row) for row in yy]
    assert np.allclose(vals, single)
    g = pr.objective_grad(ds.objective, yy[0])
    fd = fd_objective_grad(ds.objective, yy[0])
    assert np.abs(g - fd).max() <= 2e-6


def test_coverage_term_prefers_spread_positions():
    # two vehicles stacked on one spot cover less than spread ones
    ds = pr.gen_trajectory_family(2, 4, seed=13, n_samples=4, nu_cov=1.0)
    p = ds.objective.params
    d = ds.d
    stacked, spread = np.zeros(d), np.zeros(d)
    stacked[p["pos_x_cols"]] = 0.0
    spread[p["pos_x_cols"][: p["pos_x_cols"].size // 2]] = -3.0
    spread[p["pos_x_cols"][p["pos_x_cols"].size // 2 :]] = 3.0
    _, _, cov_stacked = pr._trajectory_terms_np(p, stacked[None])
    _, _, cov_spread = pr._trajectory_terms_np(p, spread[None])
    assert cov_spread[0] < cov_stacked[0]


# -- dc3-style QP families --------------------------------------------------


def test_dc3_family_every_instance_oracle_feasible():
    ds = pr.gen_dc3_family(10, 5, 5, 200, seed=21)
    for i in range(ds.n_samples):
        sol = pr.oracle_solve(ds.instance(i))
        assert sol.converged
        assert sol.primal_residual <= 1e-9


def test_dc3_without_inequalities_is_automatically_feasible():
    ds = pr.gen_dc3_family(6, 3, 0, 12, seed=22)
    for i in range(ds.n_samples):
        inst = ds.instance(i)
        sol = pr.oracle_solve(inst)
        assert sol.primal_residual <= 1e-9
        # independent check: KKT oracle agrees on the equality-only QP
        y_kkt = kkt_equality_oracle(
            ds.objective.params["q_diag"],
            ds.objective.params["q_lin"],
            ds.structure_arrays["e_mat"],
            inst.context,
        )
        assert np.abs(sol.y - y_kkt).max() <= 1e-7


def test_dc3_paper_scale_structure():
    ds = pr.gen_dc3_family(100, 50, 50, 4, seed=23)
    assert ds.structure_arrays["e_mat"].shape == (50, 100)
    assert ds.structure_arrays["c_mat"].shape == (50, 100)
    assert ds.contexts.shape == (4, 50)
    assert ds.rhs.shape == (4, 100)


def test_dc3_preconditions():
    with pytest.raises(ConfigError):
        pr.gen_dc3_family(5, 6, 2, 10, seed=0)
    with pytest.raises(ConfigError):
        pr.gen_dc3_family(5, 0, 2, 10, seed=0)


def test_split_sizes_match_reference_ratio():
    ds = pr.gen_dc3_family(4, 2, 2, 40, seed=24)
    assert ds.split("train").size + ds.split("val").size + ds.split("test").size == 40
    all_idx = np.concatenate([ds.split(s) for s in ("train", "val", "test")])
    assert np.array_equal(np.sort(all_idx), np.arange(40))
    sizes = pr._make_splits(10000)
    assert sizes["train"].size == 7952
    assert sizes["val"].size == 1024
    assert sizes["test"].size == 1024
    with pytest.raises(ConfigError):
        ds.split("holdout")


# -- toy MPC ----------------------------------------------------------------


def test_mpc_rejects_zero_horizon():
    with pytest.raises(ConfigError):
        pr.gen_toy_mpc(4, horizon=0, seed=0)


def test_mpc_objective_decreases_along_horizon():
    ds = pr.gen_toy_mpc(4, horizon=8, seed=31)
    target = np.array([3.0, -12.0])
    for i in range(ds.n_samples):
        sol = pr.oracle_solve(ds.instance(i))
        assert sol.converged and sol.primal_residual <= 1e-9
        dist = [
            np.linalg.norm(sol.y[2 * k : 2 * k + 2] - target) for k in range(9)
        ]
        # tracking stages shrink the gap; the unweighted terminal state coasts
        assert all(b <= a + 1e-9 for a, b in zip(dist[:-1], dist[1:]))
        assert dist[7] < dist[0]


def test_mpc_first_step_sign_matches_oracle_with_interior_target():
    ds = pr.gen_toy_mpc(4, horizon=6, seed=32)
    # same constraint structure, target moved inside the state box
    n = 6
    weights = ds.objective.params["weights"]
    targets = np.concatenate([np.tile([4.0, -5.0], n), np.zeros(2 * n + 2)])
    spec = pr.ObjectiveSpec("mpc_tracking", {"weights": weights, "targets": targets})
    x0 = np.array([-8.0, 6.0])
    rhs = np.zeros(ds.rhs.shape[1])
    rhs[:2] = x0
    inst = pr.ProblemInstance(x0, ds.structure.with_rhs(rhs), spec)
    sol = pr.oracle_solve(inst)
    u0 = sol.y[2 * (n + 1) : 2 * (n + 1) + 2]
    assert np.all(np.sign(u0) == np.sign(targets[:2] - x0))


def test_mpc_hold_input_is_feasible():
    ds = pr.gen_toy_mpc(8, horizon=5, seed=33)
    for i in range(ds.n_samples):
        inst = ds.instance(i)
        y_hold = np.concatenate([np.tile(inst.context, 6), np.zeros(10)])
        assert inst.constraint.raw.violation(y_hold) <= 1e-12


# -- SOC family -------------------------------------------------------------


def test_soc_degenerate_interior_point_gives_zero_cost():
    # z already in the cone -> y2* = z, c = 0, optimum 0
    d1, d2 = 3, 4
    a_mat = np.random.default_rng(41).uniform(-1, 1, (d2, d1))
    cone = SecondOrderConeSet(d2)
    z = np.array([0.1, -0.1, 0.05, 5.0])
    y2 = cone.project_batch(z[None])[0]
    assert np.array_equal(y2, z)
    c = -(a_mat.T @ (y2 - z))
    assert np.array_equal(c, np.zeros(d1))


def test_soc_certificates_hold_on_construction():
    """KKT verification of the stored optima, z redrawn per-instance."""
    ds = pr.gen_soc_family(8, 8, 64, seed=42)
    a_mat = ds.structure_arrays["a_mat"]
    d1, d2 = 8, 8
    cone = SecondOrderConeSet(d2)
    for i in range(ds.n_samples):
        rng = np.random.default_rng((42, i))
        z = rng.uniform(-1.0, 1.0, size=d2)
        b = ds.rhs[i]
        c = ds.contexts[i, d2:]
        y1 = ds.oracle_y[i, :d1]
        y2 = ds.oracle_y[i, d1:]
        # primal feasibility
        assert np.abs(a_mat @ y1 + y2 - b).max() <= 1e-12
        assert np.linalg.norm(y2 - cone.project_batch(y2[None])[0]) <= 1e-12
        # dual certificate mu = y2* - z: cone membership, stationarity,
        # complementary slackness -> zero duality gap
        mu = y2 - z
        assert np.linalg.norm(mu[:-1]) <= mu[-1] + 1e-10
        assert np.abs(a_mat.T @ mu + c).max() <= 1e-12
        assert abs(mu @ y2) <= 1e-9
        assert ds.oracle_obj[i] == pytest.approx(c @ y1, abs=1e-12)


def test_soc_stored_optimum_beats_sampled_feasible_points():
    ds = pr.gen_soc_family(6, 6, 16, seed=43)
    settings = DRSettings(n_iter_fwd=3000)
    rng = np.random.default_rng(7)
    for i in range(0, ds.n_samples, 4):
        inst = ds.instance(i)
        assert inst.constraint.raw.violation(inst.oracle_y) <= 1e-9
        # long-run projections of random points are feasible candidates;
        # none may undercut the certified optimum
        for _ in range(4):
            res = dr_project(inst.constraint, rng.normal(size=12), settings)
            if inst.constraint.raw.violation(res.y) > 1e-6:
                continue
            j = pr.evaluate_objective(inst.objective, res.y, inst.context)
            assert j >= inst.oracle_objective - 1e-6


def test_soc_oracle_solve_returns_stored_optimum():
    ds = pr.gen_soc_family(5, 4, 12, seed=44)
    sol = pr.oracle_solve(ds.instance(3))
    assert sol.converged
    assert sol.objective == pytest.approx(float(ds.oracle_obj[3]))
    bare = pr.ProblemInstance(ds.contexts[3], ds.instance(3).constraint, ds.objective)
    with pytest.raises(ConfigError):
        pr.oracle_solve(bare)


# -- trajectory family ------------------------------------------------------


def test_trajectory_equal_endpoints_zero_input_optimal():
    ds = pr.gen_trajectory_family(1, 6, seed=51, n_samples=4)
    p0 = np.array([1.5, -2.0])
    ctx = np.concatenate([p0, p0])
    rhs = pr.context_rhs(ds, ctx)[0]
    inst = pr.ProblemInstance(ctx, ds.structure.with_rhs(rhs), ds.objective)
    y_rest = pr.trajectory_completion(ds, np.zeros((1, ds.params["raw_dim"])), ctx[None])[0]
    assert inst.constraint.raw.violation(y_rest) <= 1e-12
    assert pr.evaluate_objective(ds.objective, y_rest) == 0.0
    sol = pr.oracle_solve(inst)
    assert sol.objective <= 1e-9


def test_trajectory_oracle_beats_sampled_perturbations():
    ds = pr.gen_trajectory_family(1, 8, seed=52, n_samples=6)
    raw = ds.structure.raw
    m_mat, lo, hi = pr._constraint_rows(raw)
    proj = QPStructure(np.ones(ds.d), m_mat)
    rng = np.random.default_rng(8)
    for i in range(ds.n_samples):
        inst = ds.instance(i)
        lo_i, hi_i = lo.copy(), hi.copy()
        m_eq = ds.structure_arrays["e_mat"].shape[0]
        lo_i[:m_eq] = hi_i[:m_eq] = ds.rhs[i, :m_eq]
        j_star = inst.oracle_objective
        for _ in range(5):
            pert = proj.solve(-(inst.oracle_y + 0.3 * rng.normal(size=ds.d)), lo_i, hi_i).y
            assert raw.with_eq_rhs(ds.rhs[i, :m_eq]).violation(pert) <= 1e-8
            assert pr.evaluate_objective(ds.objective, pert) >= j_star - 1e-8


def test_trajectory_rejects_out_of_scale_requests():
    with pytest.raises(ConfigError):
        pr.gen_trajectory_family(4, 8, seed=0)
    with pytest.raises(ConfigError):
        pr.gen_trajectory_family(1, 30, seed=0)
    ds = pr.gen_trajectory_family(1, 4, seed=53, n_samples=4)
    with pytest.raises(InfeasibleConstraintError):
        pr.context_rhs(ds, np.array([6.0, 0.0, 1.0, 1.0]))


def test_trajectory_completion_satisfies_dynamics_rows():
    ds = pr.gen_trajectory_family(2, 10, seed=54, n_samples=4)
    rng = np.random.default_rng(9)
    raw_acc = rng.normal(size=(3, ds.params["raw_dim"]))
    yy = pr.trajectory_completion(ds, raw_acc, ds.contexts[:3])
    e_mat = ds.structure_arrays["e_mat"]
    t_n, per = 10, 4 * 10 + 8
    for i in range(3):
        r = e_mat @ yy[i] - ds.rhs[i, : e_mat.shape[0]]
        for v in range(2):
            blk = r[v * per : (v + 1) * per]
            assert np.abs(blk[: 4 * t_n]).max() <= 1e-12  # dynamics
            assert np.abs(blk[4 * t_n : 4 * t_n + 2]).max() <= 1e-12  # p0
            assert np.abs(blk[4 * t_n + 4 : 4 * t_n + 6]).max() <= 1e-12  # v0


def test_trajectory_generation_certifies_feasibility():
    ds = pr.gen_trajectory_family(2, 12, seed=55, n_samples=12)
    assert ds.oracle_ok.all()
    for i in range(ds.n_samples):
        inst = ds.instance(i)
        assert inst.constraint.raw.violation(inst.oracle_y) <= 1e-9
        assert inst.oracle_objective > 0.0  # distinct endpoints force effort


# -- oracle dispatch --------------------------------------------------------


def test_oracle_unconstrained_quadratic_matches_closed_form():
    rng = np.random.default_rng(61)
    d = 6
    q_diag = rng.uniform(0.5, 2.0, d)
    q_lin = rng.normal(size=d)
    spec = pr.ObjectiveSpec("quadratic", {"q_diag": q_diag, "q_lin": q_lin})
    cons = lift_box_program(
        np.zeros((0, d)), np.zeros(0), np.full(d, -np.inf), np.full(d, np.inf)
    )
    sol = pr.oracle_solve(pr.ProblemInstance(np.zeros(0), cons, spec))
    assert np.abs(sol.y - (-q_lin / (2.0 * q_diag))).max() <= 1e-8


def test_oracle_equality_only_matches_kkt_solve():
    rng = np.random.default_rng(62)
    ds = pr.gen_dc3_family(7, 3, 0, 6, seed=63)
    inst = ds.instance(2)
    sol = pr.oracle_solve(inst)
    y_kkt = kkt_equality_oracle(
        ds.objective.params["q_diag"],
        ds.objective.params["q_lin"],
        ds.structure_arrays["e_mat"],
        inst.context,
    )
    assert np.abs(sol.y - y_kkt).max() <= 1e-7


def test_oracle_box_2d_matches_grid_search():
    q_diag = np.array([1.3, 0.7])
    q_lin = np.array([-2.0, 1.1])
    spec = pr.ObjectiveSpec("quadratic", {"q_diag": q_diag, "q_lin": q_lin})
    lo, hi = np.array([-1.0, -1.0]), np.array([0.5, 1.0])
    cons = lift_box_program(np.zeros((0, 2)), np.zeros(0), lo, hi)
    sol = pr.oracle_solve(pr.ProblemInstance(np.zeros(0), cons, spec))
    y_grid = grid_oracle_2d(
        lambda a, b: q_diag[0] * a * a + q_diag[1] * b * b + q_lin[0] * a + q_lin[1] * b,
        lo,
        hi,
    )
    assert np.abs(sol.y - y_grid).max() <= 1e-3


def test_oracle_nonconvex_never_worse_than_convex_start():
    ds = pr.gen_dc3_family(8, 4, 6, 10, seed=64, convex=False)
    for i in range(4):
        inst = ds.instance(i)
        sol = pr.oracle_solve(inst, pgd_starts=3, pgd_iters=120, pgd_seed=(64, i))
        assert sol.primal_residual <= 1e-9
        # the convex-part minimizer, projected, is one of the starts
        m_mat, lo, hi = pr._constraint_rows(inst.constraint.raw)
        p_diag, q_vec = pr._convex_qp_data(inst.objective, 8)
        start = QPStructure(p_diag, m_mat).solve(q_vec, lo, hi).y
        assert sol.objective <= pr.evaluate_objective(inst.objective, start, inst.context) + 1e-10


def test_compute_oracles_fills_requested_splits():
    ds = pr.gen_dc3_family(6, 3, 4, 30, seed=65)
    pr.compute_oracles(ds, ("val", "test"))
    idx = np.concatenate([ds.split("val"), ds.split("test")])
    assert ds.oracle_ok[idx].all()
    assert np.isfinite(ds.oracle_obj[idx]).all()
    assert not ds.oracle_ok[ds.split("train")].any()


# -- persistence ------------------------------------------------------------


def _digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


@pytest.mark.parametrize(
    "gen",
    [
        lambda: pr.gen_dc3_family(10, 5, 5, 24, seed=71),
        lambda: pr.gen_toy_mpc(24, horizon=6, seed=72),
        lambda: pr.gen_soc_family(6, 5, 24, seed=73),
        lambda: pr.gen_trajectory_family(1, 6, seed=74, n_samples=10),
    ],
)
def test_dataset_regeneration_is_byte_identical(gen, tmp_path):
    p1, p2 = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
    gen().save(p1)
    gen().save(p2)
    assert _digest(p1) == _digest(p2)


def test_dataset_roundtrip_preserves_everything(tmp_path):
    ds = pr.gen_dc3_family(8, 4, 5, 30, seed=75)
    pr.compute_oracles(ds, ("test",))
    path = str(tmp_path / "fam.bin")
    ds.save(path)
    back = pr.Dataset.load(path)
    assert back.kind == ds.kind and back.seed == ds.seed
    assert np.array_equal(back.contexts, ds.contexts)
    assert np.array_equal(back.rhs, ds.rhs)
    assert np.array_equal(back.oracle_ok, ds.oracle_ok)
    assert np.array_equal(back.structure.hyperplane.a, ds.structure.hyperplane.a)
    assert back.objective.kind == ds.objective.kind
    for k, v in ds.objective.params.items():
        assert np.array_equal(back.objective.params[k], v)
    # reload produces identical bytes again
    p2 = str(tmp_path / "fam2.bin")
    back.save(p2)
    assert _digest(path) == _digest(p2)


def test_context_rhs_matches_generation():
    for gen in (
        lambda: pr.gen_dc3_family(6, 3, 4, 8, seed=76),
        lambda: pr.gen_toy_mpc(8, horizon=4, seed=77),
        lambda: pr.gen_soc_family(5, 4, 8, seed=78),
        lambda: pr.gen_trajectory_family(2, 6, seed=79, n_samples=6),
    ):
        ds = gen()
        rebuilt = pr.context_rhs(ds, ds.contexts)
        assert np.array_equal(rebuilt, ds.rhs)
