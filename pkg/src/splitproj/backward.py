"""Implicit backward pass for the Douglas-Rachford projection.

The forward loop converges to a fixed point s = Phi(s, y_raw); the output is
an affine image of s. Differentiating the fixed-point relation gives the
vector-Jacobian product of the projection without unrolling:

    seed   v1 = (dPi_A/ds)^T [v, 0]
    solve  (I - dPhi/ds)^T xi = v1      (matrix-free BiCGSTAB)
    return xi^T dPhi/dy_raw

All Jacobians are evaluated at the last forward iterate s_K, which stands in
for the exact fixed point. Each BiCGSTAB iteration applies the fixed-point
Jacobian twice, so its cost tracks two forward sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projection import DRSettings, EquilibratedConstraint
from .sets import LiftedConstraint

__all__ = [
    "KrylovSettings",
    "FixedPointResidualOp",
    "bicgstab_solve",
    "bicgstab_solve_batch",
    "phi_vjp_s",
    "phi_vjp_yraw",
    "projection_vjp",
    "projection_vjp_batch",
]

_RHO_BREAKDOWN = 1e-30


@dataclass
class KrylovSettings:
    max_iter: int = 25
    tol: float = 1e-6

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")


class FixedPointResidualOp:
    """Linearization of one Douglas-Rachford sweep at a completed forward run.

    Captures the constraint, y_raw, and the final governing iterate, and
    precomputes the intermediates of a single sweep from s_K so the two
    partial VJPs (with respect to s and to y_raw) are cheap matrix-free
    applies. Rows are independent batch lanes.
    """

    def __init__(self, target, y_raw: np.ndarray, s_final: np.ndarray,
                 settings: DRSettings, rhs: np.ndarray | None = None):
        if isinstance(target, EquilibratedConstraint):
            self.lifted = target.scaled
            self.dc1 = target.dc1
            rhs = target.scale_rhs_rows(rhs) if rhs is not None else None
        elif isinstance(target, LiftedConstraint):
            self.lifted = target
            self.dc1 = None
        else:
            raise TypeError("target must be a LiftedConstraint or EquilibratedConstraint")
        y_raw = np.asarray(y_raw, dtype=np.float64)
        s_final = np.asarray(s_final, dtype=np.float64)
        squeeze = y_raw.ndim == 1
        if squeeze:
            y_raw = y_raw[None]
            s_final = s_final[None]
        d, n = self.lifted.d, self.lifted.n
        if y_raw.shape[1] != d or s_final.shape != (y_raw.shape[0], n):
            raise ValueError("y_raw and s_final shapes do not match the constraint")
        self.sigma = settings.sigma
        self.omega = settings.omega
        if self.dc1 is None:
            self.den1 = 1.0 + 2.0 * self.sigma
            self.ycoef = (2.0 * self.sigma) / self.den1
            num_w = 2.0 * self.sigma
        else:
            self.den1 = 1.0 + (2.0 * self.sigma) * (self.dc1 * self.dc1)
            self.ycoef = (2.0 * self.sigma) * self.dc1 / self.den1
            num_w = (2.0 * self.sigma) * self.dc1
        z = self.lifted.hyperplane.project_rows(s_final, rhs)
        self.u1 = (2.0 * z[:, :d] - s_final[:, :d] + num_w * y_raw) / self.den1
        self.x2 = 2.0 * z[:, d:] - s_final[:, d:]
        self.d, self.n = d, n
        self.batch = y_raw.shape[0]
        # diagnostics from the most recent projection_vjp call
        self.last_converged: np.ndarray | None = None
        self.last_residual: np.ndarray | None = None

    def _split_apply(self, v: np.ndarray) -> np.ndarray:
        """J_K applied blockwise to omega * v, with the K1 block rescaled."""
        d = self.d
        out = np.empty_like(v)
        out[:, :d] = self.lifted.k1.jacobian_apply_batch(
            self.u1, self.omega * v[:, :d]
        ) / self.den1
        if self.n > d:
            out[:, d:] = self.lifted.k2.jacobian_apply_batch(
                self.x2, self.omega * v[:, d:]
            )
        return out

    def vjp_s_rows(self, v: np.ndarray) -> np.ndarray:
        """v^T dPhi/ds for each row of v."""
        xb = self._split_apply(v)
        zbar = 2.0 * xb - self.omega * v
        return v - xb + self.lifted.hyperplane.tangent_apply_rows(zbar)

    def vjp_yraw_rows(self, v: np.ndarray) -> np.ndarray:
        """v^T dPhi/dy_raw for each row of v."""
        u1bar = self.lifted.k1.jacobian_apply_batch(self.u1, self.omega * v[:, : self.d])
        return u1bar * self.ycoef

    def seed_rows(self, v: np.ndarray) -> np.ndarray:
        """Cotangent on the output y mapped back through the affine z-step."""
        pad = np.zeros((v.shape[0], self.n))
        pad[:, : self.d] = v if self.dc1 is None else v * self.dc1
        return self.lifted.hyperplane.tangent_apply_rows(pad)


def phi_vjp_s(op: FixedPointResidualOp, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        return op.vjp_s_rows(v[None])[0]
    return op.vjp_s_rows(v)


def phi_vjp_yraw(op: FixedPointResidualOp, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        return op.vjp_yraw_rows(v[None])[0]
    return op.vjp_yraw_rows(v)


def bicgstab_solve_batch(applier, rhs: np.ndarray,
                         settings: KrylovSettings | None = None):
    """Matrix-free BiCGSTAB on independent rows.

    :param applier: maps an array of rows through the system matrix.
    :returns: (solution rows, true relative residuals, converged flags).
        Lanes hitting a scalar breakdown keep their current iterate and stay
        flagged unconverged.
    """
    settings = settings or KrylovSettings()
    rhs = np.asarray(rhs, dtype=np.float64)
    nb = rhs.shape[0]
    x = np.zeros_like(rhs)
    r = rhs.copy()
    rhat = rhs.copy()
    rho = np.ones(nb)
    alpha = np.ones(nb)
    omg = np.ones(nb)
    v = np.zeros_like(rhs)
    p = np.zeros_like(rhs)
    bnorm = np.linalg.norm(rhs, axis=1)
    safe_b = np.where(bnorm > 0.0, bnorm, 1.0)
    tol_abs = settings.tol * safe_b
    converged = bnorm <= tol_abs
    converged |= bnorm == 0.0
    active = ~converged

    def guard(den):
        return np.where(den == 0.0, 1.0, den)

    for _ in range(settings.max_iter):
        if not active.any():
            break
        rho_new = (rhat * r).sum(axis=1)
        active &= np.abs(rho_new) >= _RHO_BREAKDOWN
        beta = (rho_new / guard(rho)) * (alpha / guard(omg))
        p = np.where(active[:, None], r + beta[:, None] * (p - omg[:, None] * v), p)
        v = np.where(active[:, None], applier(p), v)
        den = (rhat * v).sum(axis=1)
        active &= np.abs(den) >= _RHO_BREAKDOWN
        alpha = np.where(active, rho_new / guard(den), alpha)
        s = r - alpha[:, None] * v
        s_small = active & (np.linalg.norm(s, axis=1) <= tol_abs)
        if s_small.any():
            x = np.where(s_small[:, None], x + alpha[:, None] * p, x)
            converged |= s_small
            active &= ~s_small
        t = applier(s)
        tt = (t * t).sum(axis=1)
        omg = np.where(active, (t * s).sum(axis=1) / guard(tt), omg)
        x = np.where(active[:, None], x + alpha[:, None] * p + omg[:, None] * s, x)
        r = np.where(active[:, None], s - omg[:, None] * t, r)
        rho = np.where(active, rho_new, rho)
        done = active & (np.linalg.norm(r, axis=1) <= tol_abs)
        converged |= done
        active &= ~done

    residual = np.linalg.norm(rhs - applier(x), axis=1) / safe_b
    return x, residual, converged


def bicgstab_solve(applier, rhs: np.ndarray,
                   settings: KrylovSettings | None = None):
    """Single-system convenience wrapper around the batched solver."""
    rhs = np.asarray(rhs, dtype=np.float64)

    def rows_applier(w):
        return applier(w[0])[None]

    x, residual, converged = bicgstab_solve_batch(rows_applier, rhs[None], settings)
    return x[0], float(residual[0]), bool(converged[0])


def projection_vjp_batch(op: FixedPointResidualOp, v: np.ndarray,
                         settings: KrylovSettings | None = None):
    """Cotangent on the projected output mapped back to y_raw, row-wise.

    :returns: (gradient rows, converged flags, relative residuals).
    """
    v = np.asarray(v, dtype=np.float64)
    seed = op.seed_rows(v)

    def applier(w):
        return w - op.vjp_s_rows(w)

    xi, residual, converged = bicgstab_solve_batch(applier, seed, settings)
    op.last_converged = converged
    op.last_residual = residual
    return op.vjp_yraw_rows(xi), converged, residual


def projection_vjp(op: FixedPointResidualOp, v: np.ndarray,
                   settings: KrylovSettings | None = None) -> np.ndarray:
    """Single-vector projection VJP; diagnostics land on the op."""
    v = np.asarray(v, dtype=np.float64)
    grad, _, _ = projection_vjp_batch(op, v[None], settings)
    return grad[0]
