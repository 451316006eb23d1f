"""Benchmark problem families with certified-feasible instances.

Four recipes cover the evaluation grid: random equality/inequality
constrained QPs (convex, plus a sin-perturbed non-convex variant), a toy
MPC task on a 2-D single integrator, second-order-cone programs whose
optima are known from construction, and a small multi-vehicle trajectory
planning family whose fleet objective mixes input effort with a spatial
potential and a workspace coverage score.

Every instance ships with a feasibility certificate: the context is
derived from a point that provably lies inside the constraint set.
Reference solutions come from the in-package ADMM oracle for quadratic
objectives; non-convex kinds get a projected-gradient multi-start
refined by the same machinery and are reported as best-found, not as
global optima.

Generation is per-instance independent: instance ``i`` draws from
``default_rng((seed, i))``, so regenerating a family with the same seed
is byte-identical regardless of iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, InfeasibleConstraintError
from .io import load_container, save_container
from .oracle import OracleSolution, QPStructure, projected_gradient_best
from .sets import (
    LiftedConstraint,
    SecondOrderConeSet,
    lift_box_program,
    lift_polytope,
    lift_soc_program,
)

__all__ = [
    "ObjectiveSpec",
    "ProblemInstance",
    "Dataset",
    "objective_values",
    "objective_grad",
    "objective_loss",
    "evaluate_objective",
    "gen_dc3_family",
    "gen_toy_mpc",
    "gen_soc_family",
    "gen_trajectory_family",
    "trajectory_completion",
    "context_rhs",
    "oracle_solve",
    "compute_oracles",
    "ORACLE_FEAS_TOL",
]

# Generated instances must admit a point at least this feasible.
ORACLE_FEAS_TOL = 1e-9

_KINDS = ("quadratic", "quadratic_sin", "linear", "mpc_tracking", "effort_preference")


@dataclass(frozen=True)
class ObjectiveSpec:
    """Objective family J(y; x). ``params`` holds arrays and scalars.

    kinds: quadratic y'Qy + q'y, quadratic_sin y'Qy + q'sin(y) (both with
    Q = diag(q_diag) > 0), linear (context-supplied cost on a slice of y),
    mpc_tracking (diagonal weighted tracking), effort_preference (fleet
    trajectory objective).
    """

    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown objective kind {self.kind!r}")
        if self.kind in ("quadratic", "quadratic_sin"):
            q_diag = np.asarray(self.params["q_diag"])
            if q_diag.ndim != 1 or np.any(q_diag <= 0):
                raise ConfigError("quadratic kinds need a positive diagonal")


@dataclass(frozen=True)
class ProblemInstance:
    context: np.ndarray
    constraint: LiftedConstraint
    objective: ObjectiveSpec
    oracle_y: np.ndarray | None = None
    oracle_objective: float | None = None


def _rows(y):
    y = np.asarray(y, dtype=np.float64)
    return (y[None], True) if y.ndim == 1 else (y, False)


def objective_values(spec: ObjectiveSpec, y, x=None) -> np.ndarray | float:
    """J per row; scalar for a single point."""
    yy, single = _rows(y)
    p = spec.params
    if spec.kind == "quadratic":
        vals = np.sum(yy * p["q_diag"] * yy, axis=1) + yy @ p["q_lin"]
    elif spec.kind == "quadratic_sin":
        vals = np.sum(yy * p["q_diag"] * yy, axis=1) + np.sin(yy) @ p["q_lin"]
    elif spec.kind == "linear":
        xx, _ = _rows(_need_context(spec, x))
        vals = np.sum(xx[:, p["context_cols"]] * yy[:, p["y_cols"]], axis=1)
    elif spec.kind == "mpc_tracking":
        diff = yy - p["targets"]
        vals = np.sum(p["weights"] * diff * diff, axis=1)
    else:
        effort, pref, cov = _trajectory_terms_np(p, yy)
        vals = effort + p["lambda_pref"] * pref + p["nu_cov"] * cov
    return float(vals[0]) if single else vals


def objective_grad(spec: ObjectiveSpec, y, x=None) -> np.ndarray:
    """dJ/dy, same shape as y. Analytic per kind; tape for the fleet kind."""
    yy, single = _rows(y)
    p = spec.params
    if spec.kind == "quadratic":
        g = 2.0 * p["q_diag"] * yy + p["q_lin"]
    elif spec.kind == "quadratic_sin":
        g = 2.0 * p["q_diag"] * yy + np.cos(yy) * p["q_lin"]
    elif spec.kind == "linear":
        xx, _ = _rows(_need_context(spec, x))
        g = np.zeros_like(yy)
        g[:, p["y_cols"]] = xx[:, p["context_cols"]]
    elif spec.kind == "mpc_tracking":
        g = 2.0 * p["weights"] * (yy - p["targets"])
    else:
        with ad.Tape() as tape:
            yt = ad.Tensor(yy, requires_grad=True)
            total = ad.tensor_sum(_objective_rows_t(spec, yt, x))
        g = ad.backward(tape, 1.0, total)[yt]
    return g[0] if single else g


def evaluate_objective(spec: ObjectiveSpec, y, x=None) -> float:
    return float(objective_values(spec, y, x))


def objective_loss(spec: ObjectiveSpec, y_t: ad.Tensor, x=None) -> ad.Tensor:
    """Mean objective over the batch as a taped scalar (training loss)."""
    return ad.mean(_objective_rows_t(spec, y_t, x))


def _need_context(spec, x):
    if x is None:
        raise ConfigError(f"objective kind {spec.kind!r} needs the context")
    return x


def _objective_rows_t(spec, y_t, x):
    p = spec.params
    if spec.kind == "quadratic":
        return ad.tensor_sum(y_t * p["q_diag"] * y_t + y_t * p["q_lin"], axis=1)
    if spec.kind == "quadratic_sin":
        return ad.tensor_sum(y_t * p["q_diag"] * y_t + ad.sin(y_t) * p["q_lin"], axis=1)
    if spec.kind == "linear":
        xx, _ = _rows(_need_context(spec, x))
        c = xx[:, p["context_cols"]]
        return ad.tensor_sum(ad.take_cols(y_t, p["y_cols"]) * c, axis=1)
    if spec.kind == "mpc_tracking":
        diff = y_t - p["targets"]
        return ad.tensor_sum(diff * p["weights"] * diff, axis=1)
    effort, pref, cov = _trajectory_terms_t(p, y_t)
    out = effort
    if p["lambda_pref"]:
        out = out + pref * p["lambda_pref"]
    if p["nu_cov"]:
        out = out + cov * p["nu_cov"]
    return out


# -- fleet trajectory objective -------------------------------------------
#
# effort = sum ||a||^2; preference = sum of a scaled Ishigami-style
# potential evaluated at p/1.25; coverage paints each visited position as
# a Gaussian splat (amplitude 200, unit variance) on a 16x16 pixel grid,
# clips the summed image at 255, and scores the negative mean intensity.


def _potential_np(z1, z2):
    quart = (0.5 * (z1 + z2)) ** 4
    return 0.05 * (np.sin(z1) + 7.0 * np.sin(z2) ** 2 + 0.1 * quart * np.sin(z1))


def _trajectory_terms_np(p, yy):
    a = yy[:, p["acc_cols"]]
    effort = np.sum(a * a, axis=1)
    px = yy[:, p["pos_x_cols"]]
    py = yy[:, p["pos_y_cols"]]
    pref = np.sum(_potential_np(px / 1.25, py / 1.25), axis=1)

    h_pix, w_pix = int(p["grid_h"]), int(p["grid_w"])
    span = p["p_max"] - p["p_min"]
    u = (px - p["p_min"][0]) * (w_pix / span[0])
    v = h_pix - (py - p["p_min"][1]) * (h_pix / span[1])
    gu = np.arange(1, w_pix + 1, dtype=np.float64)
    gv = np.arange(1, h_pix + 1, dtype=np.float64)
    du = u[:, :, None, None] - gu[None, None, None, :]
    dv = v[:, :, None, None] - gv[None, None, :, None]
    heat = np.sum(p["amp"] * np.exp(-0.5 * (du * du + dv * dv)), axis=1)
    img = np.minimum(heat, 255.0)
    cov = -np.sum(img, axis=(1, 2)) / (h_pix * w_pix * 255.0)
    return effort, pref, cov


def _trajectory_terms_t(p, y_t):
    a = ad.take_cols(y_t, p["acc_cols"])
    effort = ad.tensor_sum(a * a, axis=1)
    px = ad.take_cols(y_t, p["pos_x_cols"])
    py = ad.take_cols(y_t, p["pos_y_cols"])
    z1 = px * (1.0 / 1.25)
    z2 = py * (1.0 / 1.25)
    s1 = ad.sin(z1)
    s2 = ad.sin(z2)
    quart = ad.power((z1 + z2) * 0.5, 4.0)
    pref = ad.tensor_sum((s1 + s2 * s2 * 7.0 + quart * s1 * 0.1) * 0.05, axis=1)

    h_pix, w_pix = int(p["grid_h"]), int(p["grid_w"])
    n_pts = px.shape[1]
    b = px.shape[0]
    span = p["p_max"] - p["p_min"]
    u = (px - p["p_min"][0]) * (w_pix / span[0])
    v = (py - p["p_min"][1]) * (-h_pix / span[1]) + float(h_pix)
    gu = np.arange(1, w_pix + 1, dtype=np.float64).reshape(1, 1, 1, w_pix)
    gv = np.arange(1, h_pix + 1, dtype=np.float64).reshape(1, 1, h_pix, 1)
    du = ad.reshape(u, (b, n_pts, 1, 1)) - gu
    dv = ad.reshape(v, (b, n_pts, 1, 1)) - gv
    heat = ad.tensor_sum(ad.exp((du * du + dv * dv) * -0.5) * p["amp"], axis=1)
    img = ad.clip_max(heat, 255.0)
    cov = ad.tensor_sum(ad.tensor_sum(img, axis=2), axis=1) * (
        -1.0 / (h_pix * w_pix * 255.0)
    )
    return effort, pref, cov


# -- dataset container ------------------------------------------------------


@dataclass
class Dataset:
    """A problem family: shared structure, per-instance contexts and rhs.

    ``rhs`` rows are full lifted right-hand sides aligned with
    ``structure``; ``oracle_y`` rows are NaN until an oracle run fills
    them (``oracle_ok`` marks converged rows). Splits are disjoint
    contiguous index blocks.
    """

    kind: str
    seed: int
    params: dict
    objective: ObjectiveSpec
    structure: LiftedConstraint
    structure_arrays: dict
    contexts: np.ndarray
    rhs: np.ndarray
    splits: dict
    oracle_y: np.ndarray
    oracle_obj: np.ndarray
    oracle_ok: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.contexts.shape[0]

    @property
    def d(self) -> int:
        return self.oracle_y.shape[1]

    def split(self, name: str) -> np.ndarray:
        if name not in self.splits:
            raise ConfigError(f"unknown split {name!r}; have {sorted(self.splits)}")
        return self.splits[name]

    def instance(self, i: int) -> ProblemInstance:
        i = int(i)
        ok = bool(self.oracle_ok[i])
        return ProblemInstance(
            context=self.contexts[i],
            constraint=self.structure.with_rhs(self.rhs[i]),
            objective=self.objective,
            oracle_y=self.oracle_y[i].copy() if ok else None,
            oracle_objective=float(self.oracle_obj[i]) if ok else None,
        )

    def save(self, path: str) -> None:
        scalars, obj_arrays = {}, {}
        for key, val in self.objective.params.items():
            if isinstance(val, np.ndarray):
                obj_arrays[f"objective.{key}"] = val
            else:
                scalars[key] = val
        meta = {
            "family": self.kind,
            "seed": self.seed,
            "params": self.params,
            "objective_kind": self.objective.kind,
            "objective_scalars": scalars,
            "split_names": sorted(self.splits),
        }
        arrays = {
            "contexts": self.contexts,
            "rhs": self.rhs,
            "oracle_y": self.oracle_y,
            "oracle_obj": self.oracle_obj,
            "oracle_ok": self.oracle_ok,
        }
        arrays.update(obj_arrays)
        for key, val in self.structure_arrays.items():
            arrays[f"structure.{key}"] = val
        for name, idx in self.splits.items():
            arrays[f"split.{name}"] = np.asarray(idx, dtype=np.int64)
        save_container(path, "dataset", meta, arrays)

    @classmethod
    def load(cls, path: str) -> "Dataset":
        meta, arrays = load_container(path, expect_kind="dataset")
        kind = meta["family"]
        params = meta["params"]
        structure_arrays = {
            k[len("structure.") :]: v
            for k, v in arrays.items()
            if k.startswith("structure.")
        }
        obj_params = dict(meta["objective_scalars"])
        for k, v in arrays.items():
            if k.startswith("objective."):
                obj_params[k[len("objective.") :]] = v
        builder = _STRUCTURE_BUILDERS.get(kind)
        if builder is None:
            raise ConfigError(f"unknown dataset family {kind!r}")
        return cls(
            kind=kind,
            seed=int(meta["seed"]),
            params=params,
            objective=ObjectiveSpec(meta["objective_kind"], obj_params),
            structure=builder(params, structure_arrays),
            structure_arrays=structure_arrays,
            contexts=arrays["contexts"],
            rhs=arrays["rhs"],
            splits={name: arrays[f"split.{name}"] for name in meta["split_names"]},
            oracle_y=arrays["oracle_y"],
            oracle_obj=arrays["oracle_obj"],
            oracle_ok=arrays["oracle_ok"],
        )


def _make_splits(n: int) -> dict:
    # 1024/10000 per held-out split at reference scale, rounded elsewhere
    n_val = max(1, int(round(n * 1024 / 10000)))
    n_train = n - 2 * n_val
    if n_train < 1:
        raise ConfigError(f"n_samples={n} too small to split")
    idx = np.arange(n, dtype=np.int64)
    return {
        "train": idx[:n_train],
        "val": idx[n_train : n_train + n_val],
        "test": idx[n_train + n_val :],
    }


def _empty_oracle(n: int, d: int):
    return np.full((n, d), np.nan), np.full(n, np.nan), np.zeros(n, dtype=bool)


def _build_dc3(params, arrays):
    return lift_polytope(
        arrays["e_mat"],
        np.zeros(arrays["e_mat"].shape[0]),
        arrays["c_mat"],
        arrays["c_lower"],
        arrays["c_upper"],
    )


def _build_mpc(params, arrays):
    return lift_box_program(
        arrays["e_mat"],
        np.zeros(arrays["e_mat"].shape[0]),
        arrays["lower"],
        arrays["upper"],
    )


def _build_soc(params, arrays):
    d1, d2 = int(params["d1"]), int(params["d2"])
    return lift_soc_program(arrays["a_mat"], np.zeros(d2), d1, d2)


def _build_trajectory(params, arrays):
    return lift_box_program(
        arrays["e_mat"],
        np.zeros(arrays["e_mat"].shape[0]),
        arrays["lower"],
        arrays["upper"],
        c_mat=arrays["jerk_c"],
        c_lower=arrays["jerk_lower"],
        c_upper=arrays["jerk_upper"],
    )


_STRUCTURE_BUILDERS = {
    "dc3_qp": _build_dc3,
    "toy_mpc": _build_mpc,
    "soc": _build_soc,
    "trajectory": _build_trajectory,
}


# -- family generators ------------------------------------------------------


def gen_dc3_family(
    d: int,
    n_eq: int,
    n_ineq: int,
    n_samples: int,
    seed: int,
    convex: bool = True,
    retry_budget: int = 20,
) -> Dataset:
    """Random QP family: E y = x (context), C y <= u, fixed E, C, u, Q, q.

    Contexts are certified feasible by construction: draw y0 ~ N(0, I),
    project it into {C y <= u} with the oracle, and set x = E y0. Raises
    after ``retry_budget`` failed certification attempts per instance.
    """
    if n_eq > d:
        raise ConfigError("n_eq must not exceed d")
    if n_eq < 1:
        raise ConfigError("need at least one equality row; the context is its rhs")
    fam = np.random.default_rng(seed)
    e_mat = fam.normal(size=(n_eq, d))
    c_mat = fam.normal(size=(n_ineq, d))
    c_upper = fam.uniform(0.5, 1.5, size=n_ineq)
    c_lower = np.full(n_ineq, -np.inf)
    q_diag = fam.uniform(0.5, 1.5, size=d)
    q_lin = fam.normal(size=d)

    proj = QPStructure(np.ones(d), c_mat) if n_ineq else None
    contexts = np.empty((n_samples, n_eq))
    rhs = np.zeros((n_samples, n_eq + n_ineq))
    for i in range(n_samples):
        rng = np.random.default_rng((seed, i))
        for _ in range(retry_budget):
            y0 = rng.normal(size=d)
            if proj is not None:
                sol = proj.solve(-y0, c_lower, c_upper, eps=1e-10)
                if not sol.converged:
                    continue
                y0 = sol.y
                slack = np.max(c_mat @ y0 - c_upper) if n_ineq else 0.0
                if slack > ORACLE_FEAS_TOL:
                    continue
            break
        else:
            raise InfeasibleConstraintError(
                f"instance {i}: no certified context in {retry_budget} draws"
            )
        contexts[i] = e_mat @ y0
        rhs[i, :n_eq] = contexts[i]

    objective = ObjectiveSpec(
        "quadratic" if convex else "quadratic_sin",
        {"q_diag": q_diag, "q_lin": q_lin},
    )
    structure_arrays = {
        "e_mat": e_mat,
        "c_mat": c_mat,
        "c_lower": c_lower,
        "c_upper": c_upper,
    }
    params = {"d": d, "n_eq": n_eq, "n_ineq": n_ineq, "convex": bool(convex)}
    oracle_y, oracle_obj, oracle_ok = _empty_oracle(n_samples, d)
    return Dataset(
        "dc3_qp",
        seed,
        params,
        objective,
        _build_dc3(params, structure_arrays),
        structure_arrays,
        contexts,
        rhs,
        _make_splits(n_samples),
        oracle_y,
        oracle_obj,
        oracle_ok,
    )


def gen_toy_mpc(n_samples: int, horizon: int = 8, seed: int = 0) -> Dataset:
    """2-D single integrator x_{k+1} = x_k + u_k over ``horizon`` steps.

    Decision vector stacks states x_0..x_N then inputs u_0..u_{N-1};
    states live in [-10, 10]^2, inputs in [-1, 1]^2, and the tracking
    target [3, -12] sits outside the state box on purpose. The context is
    the initial state, uniform over the state box, so every instance is
    feasible (zero input holds the state).
    """
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    n = int(horizon)
    d = 4 * n + 2
    n_state = 2 * (n + 1)

    e_mat = np.zeros((2 * n + 2, d))
    e_mat[0, 0] = 1.0
    e_mat[1, 1] = 1.0
    for k in range(n):
        r = 2 + 2 * k
        for c in range(2):
            e_mat[r + c, 2 * (k + 1) + c] = 1.0
            e_mat[r + c, 2 * k + c] = -1.0
            e_mat[r + c, n_state + 2 * k + c] = -1.0
    lower = np.concatenate([np.full(n_state, -10.0), np.full(2 * n, -1.0)])
    upper = np.concatenate([np.full(n_state, 10.0), np.full(2 * n, 1.0)])

    weights = np.concatenate([np.ones(2 * n), np.zeros(2), np.ones(2 * n)])
    targets = np.concatenate([np.tile([3.0, -12.0], n), np.zeros(2 * n + 2)])
    objective = ObjectiveSpec("mpc_tracking", {"weights": weights, "targets": targets})

    contexts = np.empty((n_samples, 2))
    rhs = np.zeros((n_samples, 2 * n + 2))
    for i in range(n_samples):
        rng = np.random.default_rng((seed, i))
        contexts[i] = rng.uniform(-10.0, 10.0, size=2)
        rhs[i, :2] = contexts[i]

    structure_arrays = {"e_mat": e_mat, "lower": lower, "upper": upper}
    params = {"d": d, "horizon": n}
    oracle_y, oracle_obj, oracle_ok = _empty_oracle(n_samples, d)
    return Dataset(
        "toy_mpc",
        seed,
        params,
        objective,
        _build_mpc(params, structure_arrays),
        structure_arrays,
        contexts,
        rhs,
        _make_splits(n_samples),
        oracle_y,
        oracle_obj,
        oracle_ok,
    )


def gen_soc_family(d1: int, d2: int, batch: int, seed: int) -> Dataset:
    """min c'y1 s.t. A y1 + y2 = b, y2 in the second-order cone.

    Per instance: z ~ U[-1,1]^d2, y1* ~ N(0, I), y2* = Pi_SOC(z),
    b = A y1* + y2*, c = -A'(y2* - z). The KKT certificate holds by
    construction (nu = z - y2* lies in the normal cone at y2* and is
    orthogonal to it), so c'y1* is the exact optimum and is stored.
    Context is (b, c).
    """
    if d2 < 2:
        raise ConfigError("cone block needs d2 >= 2")
    fam = np.random.default_rng(seed)
    a_mat = fam.uniform(-1.0, 1.0, size=(d2, d1))
    cone = SecondOrderConeSet(d2)

    d = d1 + d2
    contexts = np.empty((batch, d2 + d1))
    rhs = np.empty((batch, d2))
    oracle_y = np.empty((batch, d))
    oracle_obj = np.empty(batch)
    for i in range(batch):
        rng = np.random.default_rng((seed, i))
        z = rng.uniform(-1.0, 1.0, size=d2)
        y1 = rng.normal(size=d1)
        y2 = cone.project_batch(z[None])[0]
        nu = z - y2
        # Moreau: the residual is orthogonal to the projection
        if abs(nu @ y2) > 1e-9 * max(1.0, np.linalg.norm(z) ** 2):
            raise InfeasibleConstraintError(f"instance {i}: cone certificate failed")
        b = a_mat @ y1 + y2
        c = -(a_mat.T @ (y2 - z))
        contexts[i] = np.concatenate([b, c])
        rhs[i] = b
        oracle_y[i] = np.concatenate([y1, y2])
        oracle_obj[i] = c @ y1

    objective = ObjectiveSpec(
        "linear",
        {
            "context_cols": np.arange(d2, d2 + d1, dtype=np.int64),
            "y_cols": np.arange(d1, dtype=np.int64),
        },
    )
    structure_arrays = {"a_mat": a_mat}
    params = {"d": d, "d1": d1, "d2": d2}
    return Dataset(
        "soc",
        seed,
        params,
        objective,
        _build_soc(params, structure_arrays),
        structure_arrays,
        contexts,
        rhs,
        _make_splits(batch),
        oracle_y,
        oracle_obj,
        np.ones(batch, dtype=bool),
    )


def _block_diag(blocks):
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def _vehicle_blocks(horizon: int, h: float):
    """Single-vehicle dynamics/boundary equalities, jerk rows, completion.

    Vehicle block layout: positions p_0..p_T, velocities v_0..v_T,
    accelerations a_0..a_{T-1}, two coordinates each. Boundary rows pin
    p_0, p_T to the context and v_0 = v_T = 0 (rest-to-rest transitions,
    which keeps the minimum effort strictly positive for distinct
    endpoints).
    """
    t_n = int(horizon)
    d_v = 6 * t_n + 4
    pos = lambda t: 2 * t
    vel = lambda t: 2 * (t_n + 1) + 2 * t
    acc = lambda t: 4 * (t_n + 1) + 2 * t

    e_v = np.zeros((4 * t_n + 8, d_v))
    for t in range(t_n):
        for c in range(2):
            r = 2 * t + c
            e_v[r, pos(t + 1) + c] = 1.0
            e_v[r, pos(t) + c] = -1.0
            e_v[r, vel(t) + c] = -h
            e_v[r, acc(t) + c] = -0.5 * h * h
            r = 2 * t_n + 2 * t + c
            e_v[r, vel(t + 1) + c] = 1.0
            e_v[r, vel(t) + c] = -1.0
            e_v[r, acc(t) + c] = -h
    for c in range(2):
        e_v[4 * t_n + c, pos(0) + c] = 1.0
        e_v[4 * t_n + 2 + c, pos(t_n) + c] = 1.0
        e_v[4 * t_n + 4 + c, vel(0) + c] = 1.0
        e_v[4 * t_n + 6 + c, vel(t_n) + c] = 1.0

    jerk = np.zeros((2 * (t_n - 1), d_v))
    for t in range(t_n - 1):
        for c in range(2):
            jerk[2 * t + c, acc(t + 1) + c] = 1.0 / h
            jerk[2 * t + c, acc(t) + c] = -1.0 / h

    # rollout from (p0, v0 = 0): states are linear in the accelerations
    comp_a = np.zeros((d_v, 2 * t_n))
    comp_c = np.zeros((d_v, 2))
    for t in range(t_n + 1):
        for c in range(2):
            comp_c[pos(t) + c, c] = 1.0
            for s in range(t):
                comp_a[pos(t) + c, 2 * s + c] = h * h * (t - s - 0.5)
                comp_a[vel(t) + c, 2 * s + c] = h
    comp_a[acc(0) : acc(0) + 2 * t_n] = np.eye(2 * t_n)
    return e_v, jerk, comp_a, comp_c


def gen_trajectory_family(
    n_vehicles: int,
    horizon: int,
    seed: int,
    n_samples: int = 128,
    lambda_pref: float = 0.0,
    nu_cov: float = 0.0,
    retry_budget: int = 20,
) -> Dataset:
    """Fleet transition planning: rest-to-rest, decoupled polytopes.

    Workspace [-5, 5]^2, velocities [-2, 2], accelerations [-2, 2], jerk
    band [-10, 10] at step h = 0.25. Endpoint pairs are drawn inside the
    workspace with a margin and certified by solving the minimum-effort
    QP; draws whose QP fails shrink the displacement and retry. With
    lambda_pref = nu_cov = 0 that QP is the exact oracle and is stored.
    """
    if not 1 <= n_vehicles <= 3:
        raise ConfigError("desk scale supports 1 to 3 vehicles")
    if not 2 <= horizon <= 25:
        raise ConfigError("desk scale supports horizons 2 to 25")
    h = 0.25
    t_n = int(horizon)
    n_veh = int(n_vehicles)
    e_v, jerk_v, comp_a_v, comp_c_v = _vehicle_blocks(t_n, h)
    d_v = e_v.shape[1]
    d = n_veh * d_v

    e_mat = _block_diag([e_v] * n_veh)
    jerk_c = _block_diag([jerk_v] * n_veh)
    completion_a = _block_diag([comp_a_v] * n_veh)
    comp_c = np.zeros((d, 4 * n_veh))
    for v in range(n_veh):
        comp_c[v * d_v : (v + 1) * d_v, 4 * v : 4 * v + 2] = comp_c_v

    n_state = 2 * (t_n + 1)
    lower_v = np.concatenate(
        [np.full(n_state, -5.0), np.full(n_state, -2.0), np.full(2 * t_n, -2.0)]
    )
    upper_v = -lower_v
    lower = np.tile(lower_v, n_veh)
    upper = np.tile(upper_v, n_veh)
    jerk_lower = np.full(jerk_c.shape[0], -10.0)
    jerk_upper = np.full(jerk_c.shape[0], 10.0)

    structure_arrays = {
        "e_mat": e_mat,
        "lower": lower,
        "upper": upper,
        "jerk_c": jerk_c,
        "jerk_lower": jerk_lower,
        "jerk_upper": jerk_upper,
        "completion_a": completion_a,
        "completion_c": comp_c,
    }
    params = {
        "d": d,
        "n_vehicles": n_veh,
        "horizon": t_n,
        "h": h,
        "lambda_pref": float(lambda_pref),
        "nu_cov": float(nu_cov),
        "raw_dim": n_veh * 2 * t_n,
    }
    structure = _build_trajectory(params, structure_arrays)

    pos_x, pos_y, acc_cols = [], [], []
    for v in range(n_veh):
        base = v * d_v
        pos_x.extend(base + 2 * t for t in range(t_n + 1))
        pos_y.extend(base + 2 * t + 1 for t in range(t_n + 1))
        acc_cols.extend(base + 4 * (t_n + 1) + j for j in range(2 * t_n))
    objective = ObjectiveSpec(
        "effort_preference",
        {
            "pos_x_cols": np.asarray(pos_x, dtype=np.int64),
            "pos_y_cols": np.asarray(pos_y, dtype=np.int64),
            "acc_cols": np.asarray(acc_cols, dtype=np.int64),
            "p_min": np.array([-5.0, -5.0]),
            "p_max": np.array([5.0, 5.0]),
            "lambda_pref": float(lambda_pref),
            "nu_cov": float(nu_cov),
            "amp": 200.0,
            "grid_h": 16,
            "grid_w": 16,
            "n_vehicles": n_veh,
            "horizon": t_n,
        },
    )

    # effort QP doubles as the feasibility certifier (and as the oracle
    # when the non-convex weights are off)
    p_diag = np.zeros(d)
    p_diag[acc_cols] = 2.0
    m_rows = np.vstack([e_mat, jerk_c, np.eye(d)])
    m_eq = e_mat.shape[0]
    qp = QPStructure(p_diag, m_rows)
    lo_tail = np.concatenate([jerk_lower, lower])
    hi_tail = np.concatenate([jerk_upper, upper])

    # conservative rest-to-rest reach for the displacement draw
    reach = min(3.0, 0.35 * (t_n * h) ** 2)
    pure_effort = lambda_pref == 0.0 and nu_cov == 0.0

    contexts = np.empty((n_samples, 4 * n_veh))
    rhs = np.zeros((n_samples, e_mat.shape[0] + jerk_c.shape[0]))
    oracle_y, oracle_obj, oracle_ok = _empty_oracle(n_samples, d)
    for i in range(n_samples):
        rng = np.random.default_rng((seed, i))
        scale = 1.0
        for _ in range(retry_budget):
            p0 = rng.uniform(-4.5, 4.5, size=(n_veh, 2))
            delta = rng.uniform(-reach * scale, reach * scale, size=(n_veh, 2))
            small = np.abs(delta).max(axis=1) < 0.5 * scale
            delta[small] = np.sign(delta[small] + 1e-12) * 0.5 * scale
            p_t = np.clip(p0 + delta, -4.5, 4.5)
            ctx = np.concatenate([np.concatenate([p0[v], p_t[v]]) for v in range(n_veh)])
            q_vec = np.zeros(m_eq)
            for v in range(n_veh):
                base = v * (4 * t_n + 8)
                q_vec[base + 4 * t_n : base + 4 * t_n + 2] = p0[v]
                q_vec[base + 4 * t_n + 2 : base + 4 * t_n + 4] = p_t[v]
            sol = qp.solve(
                np.zeros(d),
                np.concatenate([q_vec, lo_tail]),
                np.concatenate([q_vec, hi_tail]),
                eps=1e-10,
            )
            if sol.converged and sol.primal_residual <= ORACLE_FEAS_TOL:
                break
            scale *= 0.7
        else:
            raise InfeasibleConstraintError(
                f"instance {i}: no reachable endpoint pair in {retry_budget} draws"
            )
        contexts[i] = ctx
        rhs[i, :m_eq] = q_vec
        if pure_effort:
            oracle_y[i] = sol.y
            oracle_obj[i] = evaluate_objective(objective, sol.y)
            oracle_ok[i] = True

    return Dataset(
        "trajectory",
        seed,
        params,
        objective,
        structure,
        structure_arrays,
        contexts,
        rhs,
        _make_splits(n_samples),
        oracle_y,
        oracle_obj,
        oracle_ok,
    )


def trajectory_completion(dataset: Dataset, raw: np.ndarray, contexts: np.ndarray):
    """Map raw acceleration predictions to full state-input trajectories.

    Rollout is linear: y = raw @ Ra' + context @ Rc'. Accepts (B, raw_dim)
    with (B, 4V) contexts.
    """
    ra = dataset.structure_arrays["completion_a"]
    rc = dataset.structure_arrays["completion_c"]
    return raw @ ra.T + contexts @ rc.T


def context_rhs(dataset: Dataset, contexts: np.ndarray) -> np.ndarray:
    """Lifted rhs rows for fresh contexts, following the family recipe.

    Lets a trained model be evaluated on contexts the generator never
    saw. Trajectory contexts are endpoint pairs and must stay inside the
    workspace box.
    """
    contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
    n = contexts.shape[0]
    m = dataset.rhs.shape[1]
    if contexts.shape[1] != dataset.contexts.shape[1]:
        raise ConfigError(
            f"context width {contexts.shape[1]} != {dataset.contexts.shape[1]}"
        )
    rhs = np.zeros((n, m))
    if dataset.kind in ("dc3_qp", "toy_mpc"):
        rhs[:, : contexts.shape[1]] = contexts
    elif dataset.kind == "soc":
        rhs[:] = contexts[:, : int(dataset.params["d2"])]
    elif dataset.kind == "trajectory":
        if np.any(np.abs(contexts) > 5.0):
            raise InfeasibleConstraintError("endpoint outside the workspace box")
        t_n = int(dataset.params["horizon"])
        for v in range(int(dataset.params["n_vehicles"])):
            base = v * (4 * t_n + 8)
            rhs[:, base + 4 * t_n : base + 4 * t_n + 4] = contexts[:, 4 * v : 4 * v + 4]
    else:
        raise ConfigError(f"unknown dataset family {dataset.kind!r}")
    return rhs


# -- reference solutions ----------------------------------------------------


def _constraint_rows(raw):
    if raw.soc:
        raise ConfigError("cone blocks are outside the QP oracle's reach")
    mats, lows, highs = [], [], []
    if raw.eq is not None:
        e_mat, q = raw.eq
        mats.append(e_mat)
        lows.append(q)
        highs.append(q)
    if raw.ineq is not None:
        c_mat, lo, hi = raw.ineq
        mats.append(c_mat)
        lows.append(lo)
        highs.append(hi)
    if raw.bounds is not None:
        lo, hi = raw.bounds
        mats.append(np.eye(raw.d))
        lows.append(lo)
        highs.append(hi)
    if not mats:
        mats = [np.zeros((0, raw.d))]
        lows = [np.zeros(0)]
        highs = [np.zeros(0)]
    return np.vstack(mats), np.concatenate(lows), np.concatenate(highs)


def _convex_qp_data(spec: ObjectiveSpec, d: int):
    """(P diagonal, q) of the convex part in the solver's 1/2 y'Py + q'y form."""
    p = spec.params
    if spec.kind == "quadratic":
        return 2.0 * p["q_diag"], p["q_lin"]
    if spec.kind == "quadratic_sin":
        # convex part only: the sin term is handled by the multi-start
        return 2.0 * p["q_diag"], np.zeros(d)
    if spec.kind == "mpc_tracking":
        return 2.0 * p["weights"], -2.0 * p["weights"] * p["targets"]
    if spec.kind == "effort_preference":
        diag = np.zeros(d)
        diag[p["acc_cols"]] = 2.0
        return diag, np.zeros(d)
    raise ConfigError(f"no QP form for objective kind {spec.kind!r}")


def oracle_solve(
    instance: ProblemInstance,
    eps: float = 1e-10,
    max_iter: int = 60000,
    pgd_starts: int = 4,
    pgd_iters: int = 250,
    pgd_seed=0,
) -> OracleSolution:
    """Reference solution for one instance.

    Quadratic kinds run the ADMM oracle to ``eps`` residuals (global
    optimum). Non-convex kinds run a projected-gradient multi-start from
    the convex-part solution plus projected random points; the result is
    best-found, with the feasibility residual reported in place of the
    ADMM residuals. Linear (cone) instances return their construction
    optimum and never hit the QP path.
    """
    spec = instance.objective
    raw = instance.constraint.raw
    if raw is None:
        raise ConfigError("oracle needs the raw constraint description")
    if spec.kind == "linear":
        if instance.oracle_y is None:
            raise ConfigError("linear instances carry construction optima; none found")
        y = instance.oracle_y
        return OracleSolution(
            y=y,
            objective=float(instance.oracle_objective),
            primal_residual=raw.violation(y),
            dual_residual=0.0,
            iterations=0,
            converged=True,
            polished=False,
        )

    m_mat, lo, hi = _constraint_rows(raw)
    p_diag, q_vec = _convex_qp_data(spec, raw.d)
    qp = QPStructure(p_diag, m_mat)
    sol = qp.solve(q_vec, lo, hi, eps=eps, max_iter=max_iter)
    p = spec.params
    nonconvex = spec.kind == "quadratic_sin" or (
        spec.kind == "effort_preference" and (p["lambda_pref"] or p["nu_cov"])
    )
    if not nonconvex:
        return replace(
            sol, objective=evaluate_objective(spec, sol.y, instance.context)
        )

    proj = QPStructure(np.ones(raw.d), m_mat)
    warm = {"y": sol.y}

    def project(y):
        out = proj.solve(-y, lo, hi, eps=1e-9, y0=warm["y"])
        warm["y"] = out.y
        return out.y

    rng = np.random.default_rng(pgd_seed)
    starts = [sol.y]
    for _ in range(max(0, pgd_starts - 1)):
        starts.append(project(rng.normal(size=raw.d)))
    best, best_val = projected_gradient_best(
        lambda y: float(objective_values(spec, y, instance.context)),
        lambda y: objective_grad(spec, y, instance.context),
        project,
        starts,
        n_iter=pgd_iters,
    )
    residual = raw.violation(best)
    return OracleSolution(
        y=best,
        objective=best_val,
        primal_residual=residual,
        dual_residual=0.0,
        iterations=pgd_starts * pgd_iters,
        converged=residual <= ORACLE_FEAS_TOL,
        polished=False,
    )


def compute_oracles(dataset: Dataset, split_names=("val", "test"), **kwargs) -> Dataset:
    """Fill reference solutions for the named splits, in place.

    Rows already marked ok are kept. Non-convex instances seed their
    multi-start from (dataset seed, row index) so recomputation is
    deterministic. Returns the dataset for chaining.
    """
    idx = np.unique(np.concatenate([dataset.split(s) for s in split_names]))
    for i in idx:
        i = int(i)
        if dataset.oracle_ok[i]:
            continue
        sol = oracle_solve(
            dataset.instance(i), pgd_seed=(dataset.seed, 104729, i), **kwargs
        )
        dataset.oracle_y[i] = sol.y
        dataset.oracle_obj[i] = sol.objective
        dataset.oracle_ok[i] = sol.converged and sol.primal_residual <= ORACLE_FEAS_TOL
    return dataset
