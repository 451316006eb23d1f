"""Constraint-enforcing output layer glued to a plain MLP backbone.

A model is the backbone (contexts in, raw point out), an optional linear
completion map (raw controls to full decision vector), and the projection
layer. In ``project`` mode the projection runs inside the training graph
with its implicit-function backward; in ``inference_only`` mode training
sees the raw output (optionally with a soft violation penalty) and the
projection happens only at prediction time.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .backward import FixedPointResidualOp, KrylovSettings, projection_vjp_batch
from .equilibration import Scaling, rescale_constraint
from .exceptions import ConfigError
from .io import load_container, save_container
from .projection import (
    DRSettings,
    EquilibratedConstraint,
    dr_project_batch,
    dr_project_equilibrated_batch,
)
from .sets import LiftedConstraint

__all__ = [
    "Backbone",
    "ProjectionLayer",
    "ConstrainedModel",
    "soft_violation_rows",
    "save_model",
    "load_model",
]


class Backbone:
    """Fully-connected ReLU network with fan-in uniform initialization."""

    def __init__(self, sizes, seed: int = 0):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ConfigError(f"bad layer sizes {sizes}")
        self.sizes = sizes
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.weights.append(ad.Tensor(w, requires_grad=True))
            self.biases.append(ad.Tensor(np.zeros(fan_out), requires_grad=True))

    @property
    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward_t(self, x: np.ndarray) -> ad.Tensor:
        h = ad.Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.matmul(h, w) + b
            if i != last:
                h = ad.relu(h)
        return h

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.values + b.values
            if i != last:
                h = np.maximum(h, 0.0)
        return h


def _as_matrix(arr):
    return None if arr is None or arr.size == 0 else arr


class ProjectionLayer:
    """Projection onto the constraint set as a differentiable op.

    Forward runs the splitting loop for ``settings.n_iter_fwd`` sweeps;
    backward solves the implicit fixed-point system. ``last`` carries
    diagnostics from the most recent call (forward cv, Krylov convergence
    fraction and residual).
    """

    def __init__(self, target, settings: DRSettings | None = None,
                 krylov: KrylovSettings | None = None):
        if not isinstance(target, (LiftedConstraint, EquilibratedConstraint)):
            raise ConfigError("target must be a lifted or equilibrated constraint")
        self.target = target
        self.settings = settings if settings is not None else DRSettings()
        self.krylov = krylov if krylov is not None else KrylovSettings()
        self.last: dict = {}
        self._op = ad.register_custom_vjp(self._forward, self._vjp)

    def _run(self, y_raw, rhs, n_iter):
        if isinstance(self.target, EquilibratedConstraint):
            return dr_project_equilibrated_batch(
                self.target, y_raw, self.settings, rhs=rhs, n_iter=n_iter
            )
        return dr_project_batch(self.target, y_raw, self.settings, rhs=rhs, n_iter=n_iter)

    def _forward(self, y_raw, rhs):
        rhs = _as_matrix(rhs)
        res = self._run(y_raw, rhs, self.settings.n_iter_fwd)
        self.last = {"cv_max": float(np.max(res.cv)), "cv_mean": float(np.mean(res.cv))}
        return res.y, (y_raw, res.s_final, rhs)

    def _vjp(self, residuals, g):
        y_raw, s_final, rhs = residuals
        op = FixedPointResidualOp(self.target, y_raw, s_final, self.settings, rhs=rhs)
        grad, converged, resid = projection_vjp_batch(op, g, self.krylov)
        self.last["krylov_converged"] = float(np.mean(converged))
        self.last["krylov_residual"] = float(np.max(resid))
        return grad, None

    def __call__(self, y_raw_t: ad.Tensor, rhs: np.ndarray | None) -> ad.Tensor:
        if rhs is None:
            return self._op(y_raw_t, np.zeros((0,)))
        return self._op(y_raw_t, np.asarray(rhs, dtype=np.float64))

    def project(self, y_raw: np.ndarray, rhs=None, n_iter: int | None = None):
        """Inference-path projection, default test-time budget. Returns rows."""
        y_raw = np.atleast_2d(np.asarray(y_raw, dtype=np.float64))
        k = self.settings.n_iter_test if n_iter is None else int(n_iter)
        return self._run(y_raw, rhs, k)


class ConstrainedModel:
    """Backbone plus projection with a train-time mode switch.

    mode "project" runs the projection inside the loss graph (hard
    constraints during training); "inference_only" trains the bare
    backbone, optionally with penalty weight > 0 adding
    lambda * (max eq violation + max ineq violation) to the loss, and
    projects only in :meth:`predict`.
    """

    MODES = ("project", "inference_only")

    def __init__(self, backbone: Backbone, layer: ProjectionLayer,
                 mode: str = "project", penalty: float = 0.0,
                 completion=None, ctx_shift=None, ctx_scale=None):
        if mode not in self.MODES:
            raise ConfigError(f"mode must be one of {self.MODES}")
        self.backbone = backbone
        self.layer = layer
        self.mode = mode
        self.penalty = float(penalty)
        # completion: (ra, rc) mapping raw controls + context to the full vector
        self.completion = completion
        target = layer.target
        d = target.base.d if isinstance(target, EquilibratedConstraint) else target.d
        expected = completion[0].shape[1] if completion is not None else d
        if backbone.sizes[-1] != expected:
            raise ConfigError(
                f"backbone emits {backbone.sizes[-1]} values, constraint expects {expected}"
            )
        p = backbone.sizes[0]
        self.ctx_shift = np.zeros(p) if ctx_shift is None else np.asarray(ctx_shift, float)
        self.ctx_scale = np.ones(p) if ctx_scale is None else np.asarray(ctx_scale, float)
        if np.any(self.ctx_scale <= 0):
            raise ConfigError("ctx_scale must be positive")

    @property
    def parameters(self):
        return self.backbone.parameters

    def _net_input(self, contexts):
        return (np.atleast_2d(np.asarray(contexts, float)) - self.ctx_shift) / self.ctx_scale

    def raw_forward_t(self, contexts) -> ad.Tensor:
        out = self.backbone.forward_t(self._net_input(contexts))
        if self.completion is not None:
            ra, rc = self.completion
            shift = np.atleast_2d(np.asarray(contexts, float)) @ rc.T
            out = ad.matmul(out, ra.T.copy()) + shift
        return out

    def raw_forward(self, contexts) -> np.ndarray:
        out = self.backbone.forward(self._net_input(contexts))
        if self.completion is not None:
            ra, rc = self.completion
            out = out @ ra.T + np.atleast_2d(np.asarray(contexts, float)) @ rc.T
        return out

    def forward_t(self, contexts, rhs) -> ad.Tensor:
        """Training-path output: projected in "project" mode, raw otherwise."""
        y_raw = self.raw_forward_t(contexts)
        if self.mode == "project":
            return self.layer(y_raw, rhs)
        return y_raw

    def predict(self, contexts, rhs=None, n_iter: int | None = None):
        """Projected prediction (both modes project at inference)."""
        return self.layer.project(self.raw_forward(contexts), rhs, n_iter)


def soft_violation_rows(raw, y_t: ad.Tensor, eq_rhs) -> ad.Tensor:
    """Per-row max equality violation + max inequality violation, taped.

    Mirrors the EQCV + INEQCV penalty: the inequality part folds general
    rows and coordinate bounds into one one-sided system, dropping
    infinite bounds.
    """
    terms = None
    if raw.eq is not None and raw.eq[0].shape[0]:
        e_mat, q = raw.eq
        rhs = q if eq_rhs is None else np.atleast_2d(np.asarray(eq_rhs, float))
        r = ad.matmul(y_t, e_mat.T.copy()) - rhs
        terms = ad.amax(ad.absolute(r), axis=1)
    rows = []
    bounds = []
    if raw.ineq is not None:
        c_mat, lo, hi = raw.ineq
        rows.extend([c_mat, -c_mat])
        bounds.extend([hi, -lo])
    if raw.bounds is not None:
        lo, hi = raw.bounds
        eye = np.eye(raw.d)
        rows.extend([eye, -eye])
        bounds.extend([hi, -lo])
    if rows:
        c_all = np.vstack(rows)
        u_all = np.concatenate(bounds)
        keep = np.isfinite(u_all)
        if keep.any():
            slack = ad.relu(ad.matmul(y_t, c_all[keep].T.copy()) - u_all[keep])
            ineq = ad.amax(slack, axis=1)
            terms = ineq if terms is None else terms + ineq
    if terms is None:
        raise ConfigError("constraint has no affine rows to penalize")
    return terms


def save_model(model: ConstrainedModel, path: str) -> None:
    s = model.layer.settings
    k = model.layer.krylov
    meta = {
        "sizes": model.backbone.sizes,
        "mode": model.mode,
        "penalty": model.penalty,
        "has_completion": model.completion is not None,
        "equilibrated": isinstance(model.layer.target, EquilibratedConstraint),
        "settings": {
            "sigma": s.sigma,
            "omega": s.omega,
            "n_iter_fwd": s.n_iter_fwd,
            "n_iter_test": s.n_iter_test,
            "n_iter_bwd": s.n_iter_bwd,
        },
        "krylov": {"max_iter": k.max_iter, "tol": k.tol},
    }
    arrays = {"ctx_shift": model.ctx_shift, "ctx_scale": model.ctx_scale}
    for i, (w, b) in enumerate(zip(model.backbone.weights, model.backbone.biases)):
        arrays[f"w{i}"] = w.values
        arrays[f"b{i}"] = b.values
    if model.completion is not None:
        arrays["completion_a"], arrays["completion_c"] = model.completion
    if meta["equilibrated"]:
        arrays["d_r"] = model.layer.target.d_r
        arrays["d_c"] = model.layer.target.d_c
    save_container(path, "checkpoint", meta, arrays)


def load_model(path: str, structure: LiftedConstraint) -> ConstrainedModel:
    """Rebuild a model against the dataset's constraint structure."""
    meta, arrays = load_container(path, expect_kind="checkpoint")
    backbone = Backbone(meta["sizes"], seed=0)
    for i in range(len(backbone.weights)):
        backbone.weights[i].values[...] = arrays[f"w{i}"]
        backbone.biases[i].values[...] = arrays[f"b{i}"]
    target = structure
    if meta["equilibrated"]:
        d_r, d_c = arrays["d_r"], arrays["d_c"]
        a_scaled = (d_r[:, None] * structure.hyperplane.a) * d_c
        target = rescale_constraint(structure, Scaling(d_r, d_c, a_scaled, 0, True))
    s = meta["settings"]
    layer = ProjectionLayer(
        target,
        DRSettings(
            sigma=s["sigma"],
            omega=s["omega"],
            n_iter_fwd=s["n_iter_fwd"],
            n_iter_test=s["n_iter_test"],
            n_iter_bwd=s["n_iter_bwd"],
        ),
        KrylovSettings(max_iter=meta["krylov"]["max_iter"], tol=meta["krylov"]["tol"]),
    )
    completion = None
    if meta["has_completion"]:
        completion = (arrays["completion_a"], arrays["completion_c"])
    return ConstrainedModel(
        backbone,
        layer,
        mode=meta["mode"],
        penalty=meta["penalty"],
        completion=completion,
        ctx_shift=arrays["ctx_shift"],
        ctx_scale=arrays["ctx_scale"],
    )
