"""Reference solvers used to certify datasets and grade solution quality.

The workhorse is an operator-splitting QP solver with an active-set polish
step. It shares one factorization across all instances that differ only in
their constraint bounds, which is the common case for problem families here
(the matrices are fixed, the right-hand side varies per sample).

    minimize   0.5 y'Py + q'y
    subject to lo <= My <= hi

For non-convex objectives a multistart projected-gradient loop reports the
best stationary point found; those values are best-found, not certified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalFailureError

__all__ = ["OracleSolution", "QPStructure", "qp_solve", "projected_gradient_best"]


@dataclass
class OracleSolution:
    y: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    polished: bool


class QPStructure:
    """Factored KKT system for a family of QPs sharing P and M.

    rho is raised on rows with lo == hi so equality rows converge at the
    same rate as the rest.
    """

    def __init__(self, p, m_mat, sigma: float = 1e-6, rho: float = 1.0):
        m_mat = np.asarray(m_mat, dtype=np.float64)
        if m_mat.ndim != 2:
            raise ValueError("constraint matrix must be 2-D")
        self.m_mat = m_mat
        self.n_rows, self.dim = m_mat.shape
        p = np.asarray(p, dtype=np.float64)
        if p.ndim == 1:
            if p.shape[0] != self.dim:
                raise ValueError("diagonal objective has wrong length")
            self.p_mat = np.diag(p)
        else:
            if p.shape != (self.dim, self.dim):
                raise ValueError("objective matrix has wrong shape")
            self.p_mat = 0.5 * (p + p.T)
        self.sigma = float(sigma)
        self.base_rho = float(rho)
        self._chol = None
        self._rho_vec = None

    def _factor(self, rho_vec: np.ndarray) -> None:
        if self._rho_vec is not None and np.array_equal(rho_vec, self._rho_vec):
            return
        k = (
            self.p_mat
            + self.sigma * np.eye(self.dim)
            + (self.m_mat.T * rho_vec) @ self.m_mat
        )
        try:
            self._chol = np.linalg.cholesky(k)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError("KKT matrix is not positive definite") from exc
        self._rho_vec = rho_vec.copy()

    def _solve_kkt(self, rhs: np.ndarray) -> np.ndarray:
        c = self._chol
        return np.linalg.solve(c.T, np.linalg.solve(c, rhs))

    def solve(
        self,
        q,
        lo,
        hi,
        eps: float = 1e-10,
        max_iter: int = 50000,
        alpha: float = 1.6,
        polish: bool = True,
        y0=None,
    ) -> OracleSolution:
        q = np.asarray(q, dtype=np.float64)
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if q.shape != (self.dim,) or lo.shape != (self.n_rows,) or hi.shape != (self.n_rows,):
            raise ValueError("q/lo/hi shapes do not match the structure")
        eq_rows = lo == hi
        rho_vec = np.where(eq_rows, 1e3 * self.base_rho, self.base_rho)
        self._factor(rho_vec)

        m_mat, p_mat, sigma = self.m_mat, self.p_mat, self.sigma
        x = np.zeros(self.dim) if y0 is None else np.asarray(y0, dtype=np.float64).copy()
        z = np.clip(m_mat @ x, lo, hi)
        lam = np.zeros(self.n_rows)

        # Loose ADMM tolerance; the polish step is what reaches eps.
        eps_admm = max(eps, 1e-8)
        it = 0
        r_prim = r_dual = np.inf
        for it in range(1, max_iter + 1):
            rhs = sigma * x - q + m_mat.T @ (rho_vec * z - lam)
            xt = self._solve_kkt(rhs)
            zt = m_mat @ xt
            x = alpha * xt + (1.0 - alpha) * x
            z_prev = z
            z_in = alpha * zt + (1.0 - alpha) * z_prev + lam / rho_vec
            z = np.clip(z_in, lo, hi)
            lam = lam + rho_vec * (alpha * zt + (1.0 - alpha) * z_prev - z)
            if it % 25 == 0 or it == max_iter:
                mx = m_mat @ x
                r_prim = np.max(np.abs(mx - np.clip(mx, lo, hi)))
                r_dual = np.max(np.abs(p_mat @ x + q + m_mat.T @ lam))
                if r_prim <= eps_admm and r_dual <= eps_admm:
                    break
                if polish and it % 500 == 0 and r_prim <= 1e-6 and r_dual <= 1e-6:
                    sol = self._try_polish(q, lo, hi, x, lam, eq_rows, eps, it)
                    if sol is not None:
                        return sol

        if polish:
            sol = self._try_polish(q, lo, hi, x, lam, eq_rows, eps, it)
            if sol is not None:
                return sol

        mx = m_mat @ x
        r_prim = float(np.max(np.abs(mx - np.clip(mx, lo, hi)))) if self.n_rows else 0.0
        r_dual = float(np.max(np.abs(p_mat @ x + q + m_mat.T @ lam)))
        obj = float(0.5 * x @ (p_mat @ x) + q @ x)
        ok = r_prim <= eps and r_dual <= eps
        return OracleSolution(x, obj, r_prim, r_dual, it, ok, polished=False)

    def _try_polish(self, q, lo, hi, x, lam, eq_rows, eps, it):
        """Solve the equality-constrained QP on the guessed active set."""
        mx = self.m_mat @ x
        atol = 1e-6
        low_act = (mx - lo <= atol) & ~eq_rows
        hi_act = (hi - mx <= atol) & ~eq_rows
        active = eq_rows | low_act | hi_act
        n_act = int(np.count_nonzero(active))
        g = self.m_mat[active]
        target = np.where(eq_rows, lo, np.where(low_act, lo, hi))[active]
        dim = self.dim
        kkt = np.zeros((dim + n_act, dim + n_act))
        kkt[:dim, :dim] = self.p_mat + 1e-12 * np.eye(dim)
        kkt[:dim, dim:] = g.T
        kkt[dim:, :dim] = g
        rhs = np.concatenate([-q, target])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        y = sol[:dim]
        nu = sol[dim:]

        my = self.m_mat @ y
        r_prim = float(np.max(np.abs(my - np.clip(my, lo, hi)))) if self.n_rows else 0.0
        lam_full = np.zeros(self.n_rows)
        lam_full[active] = nu
        r_dual = float(np.max(np.abs(self.p_mat @ y + q + self.m_mat.T @ lam_full)))
        # Multiplier signs must match the side each row is active on.
        sign_ok = True
        ineq_low = low_act[active] & ~eq_rows[active]
        ineq_hi = hi_act[active] & ~eq_rows[active] & ~low_act[active]
        if np.any(nu[ineq_low] > 1e-7) or np.any(nu[ineq_hi] < -1e-7):
            sign_ok = False
        if r_prim <= eps and r_dual <= eps and sign_ok:
            obj = float(0.5 * y @ (self.p_mat @ y) + q @ y)
            return OracleSolution(y, obj, r_prim, r_dual, it, True, polished=True)
        return None


def qp_solve(p, m_mat, q, lo, hi, **kwargs) -> OracleSolution:
    """One-off QP solve without keeping the structure around."""
    return QPStructure(p, m_mat).solve(q, lo, hi, **kwargs)


def projected_gradient_best(
    objective_value,
    objective_grad,
    project,
    starts: np.ndarray,
    n_iter: int = 400,
    step0: float = 0.1,
) -> tuple[np.ndarray, float]:
    """Multistart projected gradient with backtracking; returns best found.

    `project` must map a point to the feasible set; starts are projected
    before use, so they may be infeasible.
    """
    best_y = None
    best_val = np.inf
    for y0 in np.atleast_2d(starts):
        y = project(y0)
        val = objective_value(y)
        step = step0
        for _ in range(n_iter):
            g = objective_grad(y)
            cand = project(y - step * g)
            cval = objective_value(cand)
            if cval <= val - 1e-12:
                y, val = cand, cval
                step = min(step * 1.5, 10.0)
            else:
                step *= 0.5
                if step < 1e-12:
                    break
        if val < best_val:
            best_val = val
            best_y = y
    return best_y, float(best_val)
