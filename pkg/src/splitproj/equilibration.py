"""Modified Ruiz equilibration and constraint rescaling.

Iteratively scales rows and columns of a matrix by inverse square roots of
their 2-norms until both norm families are flat to a tolerance. The
Gauss-Seidel mode recomputes column norms after the row scaling within each
sweep; the Jacobi mode scales both from the same snapshot. Rescaling a
lifted constraint is only defined when K is made of box and free factors,
whose bounds transform coordinatewise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projection import EquilibratedConstraint
from .sets import Hyperplane, LiftedConstraint

__all__ = ["Scaling", "ruiz_equilibrate", "rescale_constraint"]


@dataclass
class Scaling:
    d_r: np.ndarray
    d_c: np.ndarray
    a_scaled: np.ndarray
    iterations: int
    converged: bool


def _flat(norms: np.ndarray, tol: float) -> bool:
    return bool(1.0 - norms.min() / norms.max() < tol)


def ruiz_equilibrate(a: np.ndarray, max_iter: int = 25, tol: float = 1e-3,
                     mode: str = "gauss-seidel") -> Scaling:
    """Diagonal scalings D_r, D_c such that D_r A D_c has balanced norms.

    :param a: matrix with no zero row or column.
    :param tol: flatness target; converged when 1 - min/max of both the row
        and the column 2-norms drops below it.
    """
    if mode not in ("gauss-seidel", "jacobi"):
        raise ValueError(f"unknown mode {mode!r}")
    a = np.array(a, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError("matrix must be 2-D and nonempty")
    m, n = a.shape
    row = np.linalg.norm(a, axis=1)
    col = np.linalg.norm(a, axis=0)
    if row.min() == 0.0 or col.min() == 0.0:
        raise ValueError("matrix has a zero row or column; cannot equilibrate")

    d_r = np.ones(m)
    d_c = np.ones(n)
    it = 0
    converged = _flat(row, tol) and _flat(col, tol)
    while not converged and it < max_iter:
        if mode == "gauss-seidel":
            sr = 1.0 / np.sqrt(row)
            d_r *= sr
            a *= sr[:, None]
            col = np.linalg.norm(a, axis=0)
            sc = 1.0 / np.sqrt(col)
            d_c *= sc
            a *= sc
        else:
            sr = 1.0 / np.sqrt(row)
            sc = 1.0 / np.sqrt(col)
            d_r *= sr
            d_c *= sc
            a = (a * sr[:, None]) * sc
        it += 1
        row = np.linalg.norm(a, axis=1)
        col = np.linalg.norm(a, axis=0)
        converged = _flat(row, tol) and _flat(col, tol)
    return Scaling(d_r=d_r, d_c=d_c, a_scaled=a, iterations=it, converged=converged)


def rescale_constraint(lifted: LiftedConstraint, scaling: Scaling) -> EquilibratedConstraint:
    """Build the diagonally rescaled twin of a box-factored lifted constraint.

    The scaled system is (D_r A D_c) v = D_r b with box bounds divided by the
    column scalings; other factor types are rejected because their membership
    is not preserved under diagonal scaling.
    """
    d_r = np.asarray(scaling.d_r, dtype=np.float64)
    d_c = np.asarray(scaling.d_c, dtype=np.float64)
    if d_r.shape != (lifted.m,) or d_c.shape != (lifted.n,):
        raise ValueError("scaling dimensions do not match the constraint")
    if np.any(d_r <= 0.0) or np.any(d_c <= 0.0):
        raise ValueError("scalings must be positive")
    if lifted.k1.box_bounds() is None or lifted.k2.box_bounds() is None:
        raise ValueError(
            "equilibration requires box or free factors; cone, simplex, and "
            "l1 factors do not rescale coordinatewise"
        )
    # one-shot product rather than scaling.a_scaled so the scaled hyperplane
    # is an exact function of (A, d_r, d_c)
    a_scaled = (d_r[:, None] * lifted.hyperplane.a) * d_c
    b_scaled = d_r * lifted.hyperplane.b
    d = lifted.d
    scaled = LiftedConstraint(
        Hyperplane(a_scaled, b_scaled),
        lifted.k1.scaled(d_c[:d]),
        lifted.k2.scaled(d_c[d:]),
        raw=None,
        eq_rhs_len=lifted.eq_rhs_len,
    )
    return EquilibratedConstraint(lifted, scaled, d_r, d_c)
