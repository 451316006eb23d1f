"""Factor sets with closed-form projections, and lifted constraints.

A lifted constraint represents C = proj_d(A ∩ K): a hyperplane
A = {v : A v = b} in R^n intersected with a Cartesian product
K = K1 x K2 of simple factors, with the feasible set of interest being the
image of the first d coordinates. Constructors are provided for polytopes,
box-bounded programs, second-order-cone programs, and intersections.

Every factor knows how to project a batch of rows and how to apply the
(sub)differential of that projection at a batch of linearization points. At
projection kinks the "inactive" branch is chosen: a box coordinate exactly at
its bound differentiates like an interior point, a point on the cone surface
like an interior one.
"""

from __future__ import annotations

import numpy as np

from .autodiff import PseudoInverse
from .exceptions import InfeasibleConstraintError

__all__ = [
    "FreeSpace",
    "BoxSet",
    "SecondOrderConeSet",
    "SimplexSet",
    "L1BallSet",
    "FactorSet",
    "Hyperplane",
    "RawConstraint",
    "LiftedConstraint",
    "lift_polytope",
    "lift_box_program",
    "lift_soc_program",
    "lift_intersection",
    "project_hyperplane",
    "project_box",
    "project_soc",
    "project_simplex",
    "project_l1_ball",
    "project_factorset",
]


def _as_vector(x, length, name):
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (length,):
        raise ValueError(f"{name} must have shape ({length},), got {v.shape}")
    return v


class FreeSpace:
    """All of R^dim; projection is the identity."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = int(dim)

    def project_batch(self, x: np.ndarray) -> np.ndarray:
        return x

    def jacobian_apply_batch(self, points: np.ndarray, w: np.ndarray) -> np.ndarray:
        return w


class BoxSet:
    """Axis-aligned box [lower, upper]; infinite bounds are allowed."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        if self.lower.ndim != 1 or self.lower.shape != self.upper.shape:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(self.lower > self.upper):
            raise ValueError("box has lower > upper")
        self.dim = self.lower.shape[0]

    def project_batch(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def jacobian_apply_batch(self, points: np.ndarray, w: np.ndarray) -> np.ndarray:
        mask = (points >= self.lower) & (points <= self.upper)
        return w * mask

    def scaled(self, dc: np.ndarray) -> "BoxSet":
        """Bounds divided coordinatewise by dc > 0."""
        return BoxSet(self.lower / dc, self.upper / dc)


class SecondOrderConeSet:
    """{(v, t) in R^(dim-1) x R : ||v||_2 <= t}; the last coordinate is t."""

    def __init__(self, dim: int):
        if dim < 2:
            raise ValueError("second-order cone needs dim >= 2")
        self.dim = int(dim)

    @staticmethod
    def _cases(x):
        v = x[:, :-1]
        t = x[:, -1]
        rho = np.linalg.norm(v, axis=1)
        inside = rho <= t
        polar = ~inside & (rho <= -t)
        middle = ~inside & ~polar
        return v, t, rho, inside, polar, middle

    def project_batch(self, x: np.ndarray) -> np.ndarray:
        v, t, rho, _, polar, middle = self._cases(x)
        out = x.copy()
        out[polar] = 0.0
        if middle.any():
            r = rho[middle]
            alpha = 0.5 * (t[middle] + r)
            out[middle, :-1] = v[middle] * (alpha / r)[:, None]
            out[middle, -1] = alpha
        return out

    def jacobian_apply_batch(self, points: np.ndarray, w: np.ndarray) -> np.ndarray:
        v, t, rho, _, polar, middle = self._cases(points)
        out = w.copy()
        out[polar] = 0.0
        if middle.any():
            # rho > 0 strictly in the middle case
            rm = rho[middle]
            vhat = v[middle] / rm[:, None]
            c = (t[middle] + rm) / (2.0 * rm)
            wv = w[middle, :-1]
            wt = w[middle, -1]
            dot = (vhat * wv).sum(axis=1)
            out[middle, :-1] = (
                c[:, None] * wv
                + ((0.5 - c) * dot + 0.5 * wt)[:, None] * vhat
            )
            out[middle, -1] = 0.5 * (dot + wt)
        return out


def _simplex_project_rows(x: np.ndarray, radius: float) -> np.ndarray:
    """Row-wise Euclidean projection onto {y >= 0, sum y = radius}."""
    srt = np.sort(x, axis=1)[:, ::-1]
    cum = np.cumsum(srt, axis=1) - radius
    ks = np.arange(1, x.shape[1] + 1, dtype=np.float64)
    theta = cum / ks
    count = np.count_nonzero(srt - theta > 0.0, axis=1)
    theta_star = theta[np.arange(x.shape[0]), count - 1]
    return np.maximum(x - theta_star[:, None], 0.0)


class SimplexSet:
    """{y >= 0, sum y = radius} with radius > 0."""

    def __init__(self, dim: int, radius: float = 1.0):
        if dim < 1:
            raise ValueError("dim must be positive")
        if not radius > 0.0:
            raise ValueError("simplex radius must be positive")
        self.dim = int(dim)
        self.radius = float(radius)

    def project_batch(self, x: np.ndarray) -> np.ndarray:
        return _simplex_project_rows(x, self.radius)

    def jacobian_apply_batch(self, points: np.ndarray, w: np.ndarray) -> np.ndarray:
        # on the active face the projection is affine: w -> w - mean_S(w)
        proj = self.project_batch(points)
        support = proj > 0.0
        sizes = support.sum(axis=1)
        ssum = np.where(support, w, 0.0).sum(axis=1)
        return np.where(support, w - (ssum / sizes)[:, None], 0.0)


class L1BallSet:
    """{y : ||y||_1 <= radius} with radius >= 0."""

    def __init__(self, dim: int, radius: float = 1.0):
        if dim < 1:
            raise ValueError("dim must be positive")
        if radius < 0.0:
            raise ValueError("l1 radius must be nonnegative")
        self.dim = int(dim)
        self.radius = float(radius)

    def _outside(self, x):
        return np.abs(x).sum(axis=1) > self.radius

    def project_batch(self, x: np.ndarray) -> np.ndarray:
        if self.radius == 0.0:
            return np.zeros_like(x)
        out = x.copy()
        need = self._outside(x)
        if need.any():
            sub = x[need]
            q = _simplex_project_rows(np.abs(sub), self.radius)
            out[need] = np.sign(sub) * q
        return out

    def jacobian_apply_batch(self, points: np.ndarray, w: np.ndarray) -> np.ndarray:
        if self.radius == 0.0:
            return np.zeros_like(w)
        out = w.copy()
        need = self._outside(points)
        if need.any():
            sub = points[need]
            q = _simplex_project_rows(np.abs(sub), self.radius)
            support = q > 0.0
            sizes = support.sum(axis=1)
            sg = np.sign(sub)
            t = sg * w[need]
            ssum = np.where(support, t, 0.0).sum(axis=1)
            t = np.where(support, t - (ssum / sizes)[:, None], 0.0)
            out[need] = sg * t
        return out


class FactorSet:
    """Cartesian product of factors acting on contiguous coordinate spans."""

    def __init__(self, factors=()):
        self.factors = tuple(factors)
        spans = []
        start = 0
        for f in self.factors:
            spans.append((start, start + f.dim))
            start += f.dim
        self.spans = tuple(spans)
        self.dim = start

    def project_batch(self, x: np.ndarray) -> np.ndarray:
        if self.dim == 0:
            return x
        out = np.empty_like(x)
        for f, (a, b) in zip(self.factors, self.spans):
            out[:, a:b] = f.project_batch(x[:, a:b])
        return out

    def jacobian_apply_batch(self, points: np.ndarray, w: np.ndarray) -> np.ndarray:
        if self.dim == 0:
            return w
        out = np.empty_like(w)
        for f, (a, b) in zip(self.factors, self.spans):
            out[:, a:b] = f.jacobian_apply_batch(points[:, a:b], w[:, a:b])
        return out

    def box_bounds(self):
        """(lower, upper) arrays when every factor is a box or free space, else None."""
        lower = np.empty(self.dim)
        upper = np.empty(self.dim)
        for f, (a, b) in zip(self.factors, self.spans):
            if isinstance(f, BoxSet):
                lower[a:b] = f.lower
                upper[a:b] = f.upper
            elif isinstance(f, FreeSpace):
                lower[a:b] = -np.inf
                upper[a:b] = np.inf
            else:
                return None
        return lower, upper

    def scaled(self, dc: np.ndarray) -> "FactorSet":
        """Coordinatewise rescale of a box-only factor set by 1/dc."""
        parts = []
        for f, (a, b) in zip(self.factors, self.spans):
            if isinstance(f, BoxSet):
                parts.append(f.scaled(dc[a:b]))
            elif isinstance(f, FreeSpace):
                parts.append(f)
            else:
                raise ValueError(
                    f"cannot rescale factor of type {type(f).__name__}; only "
                    "box and free factors support diagonal scaling"
                )
        return FactorSet(parts)


class Hyperplane:
    """Affine set {v : A v = b} with a precomputed pseudo-inverse of A.

    Consistency of the system is verified at construction; for full-row-rank
    A every right-hand side is consistent and later rhs swaps skip the check.
    """

    def __init__(self, a, b, rank_tol: float = 1e-12, check_tol: float = 1e-8):
        self.a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        if self.a.ndim != 2:
            raise ValueError("A must be 2-D")
        self.m, self.n = self.a.shape
        self.b = _as_vector(b, self.m, "b")
        self.pinv = PseudoInverse(self.a, rank_tol=rank_tol)
        self.check_tol = float(check_tol)
        self.full_row_rank = self.pinv.rank == self.m
        if not self.full_row_rank and self.m > 0:
            self._check_consistent(self.b)

    def _check_consistent(self, b):
        resid = np.abs(self.a @ self.pinv.apply(b) - b).max() if self.m else 0.0
        scale = max(1.0, np.abs(b).max()) if self.m else 1.0
        if resid > self.check_tol * scale:
            raise InfeasibleConstraintError(
                f"equality system A v = b inconsistent (residual {resid:.3e})"
            )

    def with_rhs(self, b) -> "Hyperplane":
        h = object.__new__(Hyperplane)
        h.a = self.a
        h.m, h.n = self.m, self.n
        h.b = _as_vector(b, self.m, "b")
        h.pinv = self.pinv
        h.check_tol = self.check_tol
        h.full_row_rank = self.full_row_rank
        if not h.full_row_rank and h.m > 0:
            h._check_consistent(h.b)
        return h

    def project_rows(self, s: np.ndarray, rhs: np.ndarray | None = None) -> np.ndarray:
        """Row-wise projection onto the hyperplane; rhs overrides b per row."""
        if self.m == 0:
            return s.copy()
        r = s @ self.a.T
        r -= self.b if rhs is None else rhs
        return s - self.pinv.apply_rows(r)

    def project(self, s: np.ndarray) -> np.ndarray:
        return self.project_rows(s[None])[0]

    def tangent_apply_rows(self, w: np.ndarray) -> np.ndarray:
        """Apply P = I - A^+ A (the linear part of the projection) to rows."""
        if self.m == 0:
            return w
        return w - self.pinv.apply_rows(w @ self.a.T)


class RawConstraint:
    """Original constraint data used for violation checks on y itself.

    Components (each optional): equalities E y = q, two-sided inequalities
    l <= C y <= u, coordinate bounds ly <= y <= uy, and cone memberships
    ||F y + c||_2 <= f . y + e. The violation is the max over components,
    with infinity norms on the affine parts and Euclidean distance to the
    cone on the conic parts.
    """

    def __init__(self, d, eq=None, ineq=None, bounds=None, soc=()):
        self.d = int(d)
        self.eq = None
        if eq is not None:
            e_mat = np.asarray(eq[0], dtype=np.float64)
            q = _as_vector(eq[1], e_mat.shape[0], "q")
            self.eq = (e_mat, q)
        self.ineq = None
        if ineq is not None:
            c_mat = np.asarray(ineq[0], dtype=np.float64)
            lo = _as_vector(ineq[1], c_mat.shape[0], "l")
            hi = _as_vector(ineq[2], c_mat.shape[0], "u")
            self.ineq = (c_mat, lo, hi)
        self.bounds = None
        if bounds is not None:
            lo = _as_vector(bounds[0], self.d, "lower")
            hi = _as_vector(bounds[1], self.d, "upper")
            self.bounds = (lo, hi)
        self.soc = tuple(
            (
                np.asarray(f_mat, dtype=np.float64),
                np.asarray(c_vec, dtype=np.float64),
                _as_vector(f_vec, self.d, "f"),
                float(e_val),
            )
            for f_mat, c_vec, f_vec, e_val in soc
        )

    def with_eq_rhs(self, q) -> "RawConstraint":
        r = object.__new__(RawConstraint)
        r.d = self.d
        r.eq = (self.eq[0], _as_vector(q, self.eq[0].shape[0], "q")) if self.eq else None
        r.ineq = self.ineq
        r.bounds = self.bounds
        r.soc = self.soc
        return r

    def violation_batch(self, y: np.ndarray, eq_rhs: np.ndarray | None = None) -> np.ndarray:
        viol = np.zeros(y.shape[0])
        if self.eq is not None:
            e_mat, q = self.eq
            r = y @ e_mat.T
            r -= q if eq_rhs is None else eq_rhs
            if r.shape[1]:
                viol = np.maximum(viol, np.abs(r).max(axis=1))
        if self.ineq is not None:
            c_mat, lo, hi = self.ineq
            z = y @ c_mat.T
            if z.shape[1]:
                over = np.maximum(z - hi, 0.0).max(axis=1)
                under = np.maximum(lo - z, 0.0).max(axis=1)
                viol = np.maximum(viol, np.maximum(over, under))
        if self.bounds is not None:
            lo, hi = self.bounds
            over = np.maximum(y - hi, 0.0).max(axis=1)
            under = np.maximum(lo - y, 0.0).max(axis=1)
            viol = np.maximum(viol, np.maximum(over, under))
        for f_mat, c_vec, f_vec, e_val in self.soc:
            p = y @ f_mat.T + c_vec
            t = y @ f_vec + e_val
            x = np.concatenate([p, t[:, None]], axis=1)
            cone = SecondOrderConeSet(x.shape[1])
            dist = np.linalg.norm(x - cone.project_batch(x), axis=1)
            viol = np.maximum(viol, dist)
        return viol

    def violation(self, y: np.ndarray) -> float:
        return float(self.violation_batch(np.asarray(y, dtype=np.float64)[None])[0])


class LiftedConstraint:
    """C = proj_d(A ∩ (K1 x K2)) with K1 on the first d coordinates.

    ``eq_rhs_len`` marks how many leading entries of the lifted rhs b are the
    raw equality rhs q, so per-context rhs swaps can keep the raw description
    in sync.
    """

    def __init__(self, hyperplane: Hyperplane, k1: FactorSet, k2: FactorSet | None = None,
                 raw: RawConstraint | None = None, eq_rhs_len: int | None = None):
        self.hyperplane = hyperplane
        self.k1 = k1
        self.k2 = k2 if k2 is not None else FactorSet()
        self.d = self.k1.dim
        self.n = self.d + self.k2.dim
        if hyperplane.n != self.n:
            raise ValueError(
                f"hyperplane acts on R^{hyperplane.n} but K1 x K2 has dim {self.n}"
            )
        self.raw = raw
        self.eq_rhs_len = self.hyperplane.m if eq_rhs_len is None else int(eq_rhs_len)

    @property
    def m(self) -> int:
        return self.hyperplane.m

    @property
    def b(self) -> np.ndarray:
        return self.hyperplane.b

    def with_rhs(self, b) -> "LiftedConstraint":
        lc = object.__new__(LiftedConstraint)
        lc.hyperplane = self.hyperplane.with_rhs(b)
        lc.k1 = self.k1
        lc.k2 = self.k2
        lc.d = self.d
        lc.n = self.n
        lc.eq_rhs_len = self.eq_rhs_len
        if self.raw is not None and self.raw.eq is not None:
            lc.raw = self.raw.with_eq_rhs(np.asarray(b)[: self.eq_rhs_len])
        else:
            lc.raw = self.raw
        return lc

    def raw_eq_rhs_rows(self, rhs_rows: np.ndarray) -> np.ndarray | None:
        """Per-row raw equality rhs extracted from per-row lifted rhs."""
        if self.raw is None or self.raw.eq is None:
            return None
        return rhs_rows[:, : self.eq_rhs_len]


def lift_polytope(e_mat, q, c_mat, lower, upper) -> LiftedConstraint:
    """Lift {y : E y = q, l <= C y <= u} using one auxiliary block.

    The hyperplane is [[E, 0], [C, -I]] v = [q, 0] over v = (y, y_aux),
    K1 is free on y and K2 the box [l, u] on y_aux.
    """
    e_mat = np.atleast_2d(np.asarray(e_mat, dtype=np.float64))
    c_mat = np.atleast_2d(np.asarray(c_mat, dtype=np.float64))
    if e_mat.size == 0 and c_mat.size == 0:
        raise ValueError("polytope needs at least one equality or inequality")
    d = e_mat.shape[1] if e_mat.size else c_mat.shape[1]
    m_eq = e_mat.shape[0] if e_mat.size else 0
    m_in = c_mat.shape[0] if c_mat.size else 0
    e_mat = e_mat.reshape(m_eq, d)
    c_mat = c_mat.reshape(m_in, d)
    q = _as_vector(q, m_eq, "q") if m_eq else np.zeros(0)
    lower = _as_vector(lower, m_in, "lower") if m_in else np.zeros(0)
    upper = _as_vector(upper, m_in, "upper") if m_in else np.zeros(0)

    n = d + m_in
    a = np.zeros((m_eq + m_in, n))
    a[:m_eq, :d] = e_mat
    a[m_eq:, :d] = c_mat
    a[m_eq:, d:] = -np.eye(m_in)
    b = np.concatenate([q, np.zeros(m_in)])

    k1 = FactorSet([FreeSpace(d)])
    k2 = FactorSet([BoxSet(lower, upper)]) if m_in else FactorSet()
    raw = RawConstraint(
        d,
        eq=(e_mat, q) if m_eq else None,
        ineq=(c_mat, lower, upper) if m_in else None,
    )
    return LiftedConstraint(Hyperplane(a, b), k1, k2, raw=raw, eq_rhs_len=m_eq)


def lift_box_program(e_mat, q, lower, upper, c_mat=None, c_lower=None, c_upper=None) -> LiftedConstraint:
    """Lift {y : E y = q, lower <= y <= upper, cl <= C y <= cu}.

    Coordinate bounds live directly in K1 (no auxiliary variables); the
    optional general inequalities get an auxiliary block as in
    :func:`lift_polytope`.
    """
    e_mat = np.atleast_2d(np.asarray(e_mat, dtype=np.float64))
    m_eq, d = e_mat.shape
    q = _as_vector(q, m_eq, "q")
    lower = _as_vector(lower, d, "lower")
    upper = _as_vector(upper, d, "upper")
    if c_mat is None:
        c_mat = np.zeros((0, d))
        c_lower = np.zeros(0)
        c_upper = np.zeros(0)
    c_mat = np.asarray(c_mat, dtype=np.float64).reshape(-1, d)
    m_in = c_mat.shape[0]
    c_lower = _as_vector(c_lower, m_in, "c_lower")
    c_upper = _as_vector(c_upper, m_in, "c_upper")

    n = d + m_in
    a = np.zeros((m_eq + m_in, n))
    a[:m_eq, :d] = e_mat
    a[m_eq:, :d] = c_mat
    a[m_eq:, d:] = -np.eye(m_in)
    b = np.concatenate([q, np.zeros(m_in)])

    k1 = FactorSet([BoxSet(lower, upper)])
    k2 = FactorSet([BoxSet(c_lower, c_upper)]) if m_in else FactorSet()
    raw = RawConstraint(
        d,
        eq=(e_mat, q) if m_eq else None,
        ineq=(c_mat, c_lower, c_upper) if m_in else None,
        bounds=(lower, upper),
    )
    return LiftedConstraint(Hyperplane(a, b), k1, k2, raw=raw, eq_rhs_len=m_eq)


def lift_soc_program(a_mat, b_vec, d1: int, d2: int) -> LiftedConstraint:
    """Lift {(y1, y2) : A y1 + y2 = b, y2 in SOC} with y = (y1, y2) itself.

    No auxiliary variables: the hyperplane is [A I] y = b and
    K1 = R^d1 x SOC^d2 spans all coordinates.
    """
    a_mat = np.asarray(a_mat, dtype=np.float64)
    if a_mat.shape != (d2, d1):
        raise ValueError(f"A must be ({d2}, {d1}), got {a_mat.shape}")
    if d2 < 2:
        raise ValueError("cone block needs d2 >= 2")
    b_vec = _as_vector(b_vec, d2, "b")
    d = d1 + d2
    a = np.concatenate([a_mat, np.eye(d2)], axis=1)
    k1 = FactorSet([FreeSpace(d1), SecondOrderConeSet(d2)])

    f_mat = np.zeros((d2 - 1, d))
    f_mat[:, d1 : d1 + d2 - 1] = np.eye(d2 - 1)
    f_vec = np.zeros(d)
    f_vec[-1] = 1.0
    raw = RawConstraint(
        d,
        eq=(a, b_vec),
        soc=[(f_mat, np.zeros(d2 - 1), f_vec, 0.0)],
    )
    return LiftedConstraint(Hyperplane(a, b_vec), k1, FactorSet(), raw=raw, eq_rhs_len=d2)


def lift_intersection(e_mat, q, c_mat, lower, upper, soc_parts=()) -> LiftedConstraint:
    """Lift a polytope intersected with cones ||F y + c|| <= f . y + e.

    Each cone contributes auxiliary variables (y_c, y_t) pinned by
    y_c = F y + c and y_t = f . y + e, with (y_c, y_t) constrained to the
    second-order cone inside K2.
    """
    e_mat = np.atleast_2d(np.asarray(e_mat, dtype=np.float64))
    c_mat = np.atleast_2d(np.asarray(c_mat, dtype=np.float64))
    if e_mat.size == 0 and c_mat.size == 0 and not soc_parts:
        raise ValueError("empty intersection")
    if e_mat.size:
        d = e_mat.shape[1]
    elif c_mat.size:
        d = c_mat.shape[1]
    else:
        d = np.asarray(soc_parts[0][0]).shape[1]
    m_eq = e_mat.shape[0] if e_mat.size else 0
    m_in = c_mat.shape[0] if c_mat.size else 0
    e_mat = e_mat.reshape(m_eq, d)
    c_mat = c_mat.reshape(m_in, d)
    q = _as_vector(q, m_eq, "q") if m_eq else np.zeros(0)
    lower = _as_vector(lower, m_in, "lower") if m_in else np.zeros(0)
    upper = _as_vector(upper, m_in, "upper") if m_in else np.zeros(0)

    parts = []
    for f_mat, c_vec, f_vec, e_val in soc_parts:
        f_mat = np.asarray(f_mat, dtype=np.float64).reshape(-1, d)
        c_vec = _as_vector(c_vec, f_mat.shape[0], "c")
        f_vec = _as_vector(f_vec, d, "f")
        parts.append((f_mat, c_vec, f_vec, float(e_val)))

    n_aux = m_in + sum(p[0].shape[0] + 1 for p in parts)
    n = d + n_aux
    m = m_eq + n_aux
    a = np.zeros((m, n))
    b = np.zeros(m)
    a[:m_eq, :d] = e_mat
    b[:m_eq] = q
    row = m_eq
    col = d
    a[row : row + m_in, :d] = c_mat
    a[row : row + m_in, col : col + m_in] = -np.eye(m_in)
    row += m_in
    col += m_in
    k2_factors = [BoxSet(lower, upper)] if m_in else []
    for f_mat, c_vec, f_vec, e_val in parts:
        k = f_mat.shape[0]
        a[row : row + k, :d] = f_mat
        a[row : row + k, col : col + k] = -np.eye(k)
        b[row : row + k] = -c_vec
        a[row + k, :d] = f_vec
        a[row + k, col + k] = -1.0
        b[row + k] = -e_val
        row += k + 1
        col += k + 1
        k2_factors.append(SecondOrderConeSet(k + 1))

    k1 = FactorSet([FreeSpace(d)])
    raw = RawConstraint(
        d,
        eq=(e_mat, q) if m_eq else None,
        ineq=(c_mat, lower, upper) if m_in else None,
        soc=parts,
    )
    return LiftedConstraint(Hyperplane(a, b), k1, FactorSet(k2_factors), raw=raw, eq_rhs_len=m_eq)


def project_hyperplane(h: Hyperplane, s: np.ndarray) -> np.ndarray:
    return h.project(np.asarray(s, dtype=np.float64))


def project_box(box: BoxSet, x: np.ndarray) -> np.ndarray:
    return box.project_batch(np.asarray(x, dtype=np.float64)[None])[0]


def project_soc(soc: SecondOrderConeSet, x: np.ndarray) -> np.ndarray:
    return soc.project_batch(np.asarray(x, dtype=np.float64)[None])[0]


def project_simplex(s: SimplexSet, x: np.ndarray) -> np.ndarray:
    return s.project_batch(np.asarray(x, dtype=np.float64)[None])[0]


def project_l1_ball(s: L1BallSet, x: np.ndarray) -> np.ndarray:
    return s.project_batch(np.asarray(x, dtype=np.float64)[None])[0]


def project_factorset(fs: FactorSet, x: np.ndarray) -> np.ndarray:
    return fs.project_batch(np.asarray(x, dtype=np.float64)[None])[0].copy()
