"""Douglas-Rachford projection onto lifted convex sets.

One iteration, from governing iterate s:

    z   = Pi_A(s)
    t_1 = Pi_K1((2 z_1 - s_1 + 2 sigma y_raw) / (1 + 2 sigma))
    t_2 = Pi_K2(2 z_2 - s_2)
    s  <- s + omega (t - z)

The output after K iterations is the first d coordinates of z_K, which lies
on the hyperplane by construction, so equality constraints are satisfied to
numerical precision at every iterate. Under a diagonal equilibration
(D_r A D_c) the same kernel runs in scaled coordinates: the K1 step picks up
per-coordinate weights 2 sigma d_c,i / (1 + 2 sigma d_c,i^2) and the output
is mapped back through D_c.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalFailureError
from .sets import FactorSet, LiftedConstraint

__all__ = [
    "DRSettings",
    "DRState",
    "ProjectionResult",
    "BatchProjectionResult",
    "dr_project",
    "dr_project_batch",
    "dr_project_equilibrated",
    "dr_project_equilibrated_batch",
    "feasibility_residual",
    "convergence_profile",
    "convergence_profile_batch",
]


@dataclass
class DRSettings:
    """Relaxation, proximal weight, and iteration budgets."""

    sigma: float = 1.0
    omega: float = 1.7
    n_iter_fwd: int = 100
    n_iter_test: int = 100
    n_iter_bwd: int = 25

    def __post_init__(self):
        if not 0.0 < self.omega < 2.0:
            raise ValueError(f"omega must lie in (0, 2), got {self.omega}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        for name in ("n_iter_fwd", "n_iter_test", "n_iter_bwd"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class DRState:
    """Final kernel state: rows of s, z, t after ``iterations_run`` sweeps."""

    s: np.ndarray
    z: np.ndarray
    t: np.ndarray
    iterations_run: int


@dataclass
class ProjectionResult:
    y: np.ndarray
    s_final: np.ndarray
    cv: float
    iterations: int
    state: DRState = field(repr=False, default=None)


@dataclass
class BatchProjectionResult:
    y: np.ndarray
    s_final: np.ndarray
    cv: np.ndarray
    iterations: int
    state: DRState = field(repr=False, default=None)


def _check_finite(s: np.ndarray, k: int):
    if not np.isfinite(s).all():
        raise NumericalFailureError(
            f"non-finite iterate at Douglas-Rachford iteration {k + 1}"
        )


def _dr_kernel(lifted: LiftedConstraint, y_raw: np.ndarray, rhs: np.ndarray | None,
               sigma: float, omega: float, n_iter: int, s0: np.ndarray | None,
               dc1: np.ndarray | None = None, on_checkpoint=None, checkpoints=()):
    """Shared batched loop; dc1 enables the equilibrated K1 step."""
    hyper = lifted.hyperplane
    d, n = lifted.d, lifted.n
    nb = y_raw.shape[0]
    if dc1 is None:
        num_w = 2.0 * sigma
        den1 = 1.0 + 2.0 * sigma
    else:
        num_w = (2.0 * sigma) * dc1
        den1 = 1.0 + (2.0 * sigma) * (dc1 * dc1)
    y_shift = num_w * y_raw

    s = np.zeros((nb, n)) if s0 is None else np.array(s0, dtype=np.float64, copy=True)
    if s.shape != (nb, n):
        raise ValueError(f"s0 must have shape ({nb}, {n}), got {s.shape}")
    t = np.empty_like(s)
    z = s
    cp = set(checkpoints)
    for k in range(n_iter):
        z = hyper.project_rows(s, rhs)
        t[:, :d] = lifted.k1.project_batch(
            (2.0 * z[:, :d] - s[:, :d] + y_shift) / den1
        )
        if n > d:
            t[:, d:] = lifted.k2.project_batch(2.0 * z[:, d:] - s[:, d:])
        s += omega * (t - z)
        _check_finite(s, k)
        if on_checkpoint is not None and (k + 1) in cp:
            on_checkpoint(k + 1, z)
    return DRState(s=s, z=z, t=t.copy(), iterations_run=n_iter)


def _lifted_violation(lifted: LiftedConstraint, z: np.ndarray) -> np.ndarray:
    # z is on the hyperplane already; measure its distance to K per coordinate
    k = FactorSet(tuple(lifted.k1.factors) + tuple(lifted.k2.factors))
    return np.abs(z - k.project_batch(z)).max(axis=1)


def _batch_cv(lifted: LiftedConstraint, y: np.ndarray, z: np.ndarray,
              rhs: np.ndarray | None) -> np.ndarray:
    if lifted.raw is not None:
        eq_rhs = lifted.raw_eq_rhs_rows(rhs) if rhs is not None else None
        return lifted.raw.violation_batch(y, eq_rhs=eq_rhs)
    return _lifted_violation(lifted, z)


def dr_project_batch(lifted: LiftedConstraint, y_raw: np.ndarray,
                     settings: DRSettings | None = None,
                     rhs: np.ndarray | None = None,
                     s0: np.ndarray | None = None,
                     n_iter: int | None = None) -> BatchProjectionResult:
    """Project each row of y_raw onto the lifted set.

    :param rhs: optional per-row right-hand side (B, m) overriding the
        constraint's own b; rows share all other structure.
    :param s0: optional warm start for the governing iterate, shape (B, n).
    """
    settings = settings or DRSettings()
    y_raw = np.asarray(y_raw, dtype=np.float64)
    if y_raw.ndim != 2 or y_raw.shape[1] != lifted.d:
        raise ValueError(f"y_raw must have shape (B, {lifted.d})")
    k = settings.n_iter_fwd if n_iter is None else int(n_iter)
    state = _dr_kernel(lifted, y_raw, rhs, settings.sigma, settings.omega, k, s0)
    y = state.z[:, : lifted.d].copy()
    cv = _batch_cv(lifted, y, state.z, rhs)
    return BatchProjectionResult(y=y, s_final=state.s, cv=cv, iterations=k, state=state)


def dr_project(lifted: LiftedConstraint, y_raw: np.ndarray,
               settings: DRSettings | None = None,
               s0: np.ndarray | None = None,
               n_iter: int | None = None) -> ProjectionResult:
    """Single-point Douglas-Rachford projection; see :func:`dr_project_batch`."""
    y_raw = np.asarray(y_raw, dtype=np.float64)
    if y_raw.ndim != 1:
        raise ValueError("y_raw must be 1-D; use dr_project_batch for batches")
    res = dr_project_batch(
        lifted, y_raw[None], settings,
        s0=None if s0 is None else np.asarray(s0, dtype=np.float64)[None],
        n_iter=n_iter,
    )
    return ProjectionResult(
        y=res.y[0], s_final=res.s_final[0], cv=float(res.cv[0]),
        iterations=res.iterations, state=res.state,
    )


class EquilibratedConstraint:
    """A lifted constraint together with its diagonally rescaled twin.

    Built by :func:`splitproj.equilibration.rescale_constraint`; holds the
    scaled hyperplane and factor sets plus the column scalings needed to
    map iterates back to original coordinates.
    """

    def __init__(self, base: LiftedConstraint, scaled: LiftedConstraint,
                 d_r: np.ndarray, d_c: np.ndarray):
        self.base = base
        self.scaled = scaled
        self.d_r = d_r
        self.d_c = d_c
        self.dc1 = d_c[: base.d]
        self.dc2 = d_c[base.d :]

    def scale_rhs_rows(self, rhs: np.ndarray) -> np.ndarray:
        return rhs * self.d_r


def dr_project_equilibrated_batch(eq: EquilibratedConstraint, y_raw: np.ndarray,
                                  settings: DRSettings | None = None,
                                  rhs: np.ndarray | None = None,
                                  s0: np.ndarray | None = None,
                                  n_iter: int | None = None) -> BatchProjectionResult:
    """Equilibrated projection; rhs is given in original coordinates."""
    settings = settings or DRSettings()
    y_raw = np.asarray(y_raw, dtype=np.float64)
    if y_raw.ndim != 2 or y_raw.shape[1] != eq.base.d:
        raise ValueError(f"y_raw must have shape (B, {eq.base.d})")
    k = settings.n_iter_fwd if n_iter is None else int(n_iter)
    scaled_rhs = eq.scale_rhs_rows(rhs) if rhs is not None else None
    state = _dr_kernel(eq.scaled, y_raw, scaled_rhs, settings.sigma,
                       settings.omega, k, s0, dc1=eq.dc1)
    y = eq.dc1 * state.z[:, : eq.base.d]
    if eq.base.raw is not None:
        cv = _batch_cv(eq.base, y, state.z, rhs)
    else:
        cv = _lifted_violation(eq.scaled, state.z)
    return BatchProjectionResult(y=y, s_final=state.s, cv=cv, iterations=k, state=state)


def dr_project_equilibrated(eq: EquilibratedConstraint, y_raw: np.ndarray,
                            settings: DRSettings | None = None,
                            s0: np.ndarray | None = None,
                            n_iter: int | None = None) -> ProjectionResult:
    y_raw = np.asarray(y_raw, dtype=np.float64)
    if y_raw.ndim != 1:
        raise ValueError("y_raw must be 1-D")
    res = dr_project_equilibrated_batch(
        eq, y_raw[None], settings,
        s0=None if s0 is None else np.asarray(s0, dtype=np.float64)[None],
        n_iter=n_iter,
    )
    return ProjectionResult(
        y=res.y[0], s_final=res.s_final[0], cv=float(res.cv[0]),
        iterations=res.iterations, state=res.state,
    )


def feasibility_residual(lifted: LiftedConstraint, y: np.ndarray) -> float:
    """Constraint violation of y measured on the original constraint data."""
    y = np.asarray(y, dtype=np.float64)
    if lifted.raw is None:
        raise ValueError("constraint has no raw description to check against")
    return lifted.raw.violation(y)


def feasibility_residual_batch(lifted: LiftedConstraint, y: np.ndarray,
                               rhs: np.ndarray | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if lifted.raw is None:
        raise ValueError("constraint has no raw description to check against")
    eq_rhs = lifted.raw_eq_rhs_rows(rhs) if rhs is not None else None
    return lifted.raw.violation_batch(y, eq_rhs=eq_rhs)


def convergence_profile(target, y_raw: np.ndarray, settings: DRSettings | None = None,
                        checkpoints=(25, 50, 100, 200, 400)) -> list[tuple[int, float]]:
    """cv at increasing iteration counts from a single run.

    :param target: a LiftedConstraint or EquilibratedConstraint.
    """
    y_raw = np.asarray(y_raw, dtype=np.float64)
    profile = convergence_profile_batch(target, y_raw[None], settings, checkpoints)
    return [(k, float(cv[0])) for k, cv in profile]


def convergence_profile_batch(target, y_raw: np.ndarray,
                              settings: DRSettings | None = None,
                              checkpoints=(25, 50, 100, 200, 400),
                              rhs: np.ndarray | None = None) -> list[tuple[int, np.ndarray]]:
    settings = settings or DRSettings()
    checkpoints = sorted(int(c) for c in checkpoints)
    if not checkpoints or checkpoints[0] < 1:
        raise ValueError("checkpoints must be positive iteration counts")
    y_raw = np.asarray(y_raw, dtype=np.float64)
    out: list[tuple[int, np.ndarray]] = []

    if isinstance(target, EquilibratedConstraint):
        lifted = target.scaled
        base = target.base
        dc1 = target.dc1
        run_rhs = target.scale_rhs_rows(rhs) if rhs is not None else None
        cv_rhs = rhs
    else:
        lifted = target
        base = target
        dc1 = None
        run_rhs = rhs
        cv_rhs = rhs

    def record(k, z):
        y = z[:, : base.d] if dc1 is None else dc1 * z[:, : base.d]
        if base.raw is None and dc1 is not None:
            out.append((k, _lifted_violation(lifted, z)))
        else:
            out.append((k, _batch_cv(base, y, z, cv_rhs)))

    _dr_kernel(lifted, y_raw, run_rhs, settings.sigma, settings.omega,
               checkpoints[-1], None, dc1=dc1,
               on_checkpoint=record, checkpoints=checkpoints)
    return out


def iterations_to_threshold(profile, threshold: float) -> int | None:
    """Smallest checkpoint whose worst cv is at or below the threshold."""
    for k, cv in profile:
        worst = float(np.max(cv)) if np.ndim(cv) else float(cv)
        if worst <= threshold:
            return k
    return None
