"""Small dense LP/QP solver front end.

Programs are stated as

    minimise   0.5 x'Qx + c'x + offset
    subject to A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi

LPs go to the HiGHS dual simplex (vertex solutions, fixed pivoting).  QPs are
solved by a dense Mehrotra predictor-corrector interior-point method defined
below; the HiGHS active-set QP path misreports some strictly convex programs
as unbounded, so it is not used.  Infeasibility is decided here, not by the
backends: a Phase-I program
minimising the largest constraint violation is solved and the problem is
declared infeasible only when that violation exceeds
``infeasibility_tol * (1 + |b|_inf)``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import highspy
import numpy as np

from .errors import NumericalFailure

INF = highspy.kHighsInf


@dataclass(frozen=True)
class SolverConfig:
    feasibility_tol: float = 1e-7
    kkt_tol: float = 1e-6
    psd_tol: float = 1e-9
    infeasibility_tol: float = 1e-7
    highs_tol: float = 1e-9


DEFAULT_CONFIG = SolverConfig()


def _as_2d(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    return A.reshape(-1, n) if A.size else np.zeros((0, n))


@dataclass
class ConvexProgram:
    c: np.ndarray
    Q: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.Q = None if self.Q is None else np.asarray(self.Q, dtype=float)
        self.A_ub = _as_2d(self.A_ub, n)
        self.b_ub = np.asarray(self.b_ub if self.b_ub is not None else [], dtype=float).ravel()
        self.A_eq = _as_2d(self.A_eq, n)
        self.b_eq = np.asarray(self.b_eq if self.b_eq is not None else [], dtype=float).ravel()
        self.lo = np.full(n, -np.inf) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if self.Q is not None and self.Q.shape != (n, n):
            raise ValueError("Q must be n x n")
        if self.A_ub.shape[0] != self.b_ub.size or self.A_eq.shape[0] != self.b_eq.size:
            raise ValueError("constraint matrix / right-hand side size mismatch")
        if self.lo.size != n or self.hi.size != n:
            raise ValueError("bound vectors must have one entry per variable")

    @property
    def variable_count(self) -> int:
        return self.c.size

    @property
    def is_lp(self) -> bool:
        return self.Q is None or not np.any(self.Q)

    def objective(self, x: np.ndarray) -> float:
        val = float(self.c @ x) + self.offset
        if not self.is_lp:
            val += 0.5 * float(x @ self.Q @ x)
        return val

    def rhs_scale(self) -> float:
        parts = [self.b_ub, self.b_eq, self.lo[np.isfinite(self.lo)], self.hi[np.isfinite(self.hi)]]
        return max((float(np.max(np.abs(p))) for p in parts if p.size), default=0.0)

    def max_violation(self, x: np.ndarray) -> float:
        v = 0.0
        if self.b_ub.size:
            v = max(v, float(np.max(self.A_ub @ x - self.b_ub)))
        if self.b_eq.size:
            v = max(v, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        v = max(v, float(np.max(self.lo - x, initial=0.0)), float(np.max(x - self.hi, initial=0.0)))
        return max(v, 0.0)


@dataclass
class Solution:
    status: str
    x: np.ndarray
    objective_value: float
    max_kkt_residual: float
    phase1_violation: float = 0.0
    ineq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


_local = threading.local()


def _highs() -> highspy.Highs:
    h = getattr(_local, "highs", None)
    if h is None:
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("random_seed", 0)
        _local.highs = h
    return h


def _csc(A: np.ndarray):
    """Column-wise sparse triplet of a dense matrix."""
    mask = A != 0.0
    counts = mask.sum(axis=0)
    start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
    rows, cols = np.nonzero(mask.T)  # iterate column-major
    index = cols.astype(np.int32)
    value = A.T[mask.T]
    return start, index, value


def _run_highs(c, Q, A, row_lo, row_hi, lo, hi, config: SolverConfig):
    n = c.size
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = c
    lp.col_lower_ = np.where(np.isfinite(lo), lo, -INF)
    lp.col_upper_ = np.where(np.isfinite(hi), hi, INF)
    lp.row_lower_ = np.where(np.isfinite(row_lo), row_lo, -INF)
    lp.row_upper_ = np.where(np.isfinite(row_hi), row_hi, INF)
    start, index, value = _csc(A)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = start
    lp.a_matrix_.index_ = index
    lp.a_matrix_.value_ = value
    lp.a_matrix_.num_col_ = n
    lp.a_matrix_.num_row_ = A.shape[0]
    model = highspy.HighsModel()
    model.lp_ = lp
    if Q is not None and np.any(Q):
        low = np.tril(Q)
        hs, hi_idx, hv = _csc(low)
        hess = highspy.HighsHessian()
        hess.dim_ = n
        hess.format_ = highspy.HessianFormat.kTriangular
        hess.start_ = hs
        hess.index_ = hi_idx
        hess.value_ = hv
        model.hessian_ = hess
    h = _highs()
    h.clearModel()
    limit = int(min(10 * (n + A.shape[0]) ** 2, 2**31 - 1))
    h.setOptionValue("simplex_iteration_limit", max(limit, 1000))
    h.setOptionValue("qp_iteration_limit", max(limit, 1000))
    h.setOptionValue("primal_feasibility_tolerance", config.highs_tol)
    h.setOptionValue("dual_feasibility_tolerance", config.highs_tol)
    h.passModel(model)
    h.run()
    status = h.getModelStatus()
    sol = h.getSolution()
    x = np.array(sol.col_value, dtype=float) if sol.value_valid else np.full(n, np.nan)
    y = np.array(sol.row_dual, dtype=float) if sol.dual_valid else np.zeros(A.shape[0])
    z = np.array(sol.col_dual, dtype=float) if sol.dual_valid else np.zeros(n)
    return status, x, y, z


def _ipm_qp(p: ConvexProgram, max_iter: int = 200, tol: float = 1e-10):
    """Mehrotra predictor-corrector for a convex QP.

    Inequalities (rows and finite bounds) are stacked as ``G x <= h``.
    Returns ``(converged, x, y_rows, z_cols)`` with multipliers already in
    the sign convention of :func:`_kkt_residual`.
    """
    n = p.variable_count
    eye = np.eye(n)
    fl, fh = np.isfinite(p.lo), np.isfinite(p.hi)
    G = np.vstack([p.A_ub, eye[fh], -eye[fl]])
    h = np.concatenate([p.b_ub, p.hi[fh], -p.lo[fl]])
    A, b = p.A_eq, p.b_eq
    Q, c = p.Q, p.c
    mi, me = h.size, b.size

    scale_c = 1.0 + float(np.max(np.abs(c), initial=0.0)) + float(np.max(np.abs(Q), initial=0.0))
    scale_b = 1.0 + p.rhs_scale()

    # start: least-norm point of the box midpoints, then shift slacks positive
    x = np.zeros(n)
    both = fl & fh
    x[both] = 0.5 * (p.lo[both] + p.hi[both])
    x[fl & ~fh] = p.lo[fl & ~fh] + 1.0
    x[fh & ~fl] = p.hi[fh & ~fl] - 1.0
    s = h - G @ x
    s = np.maximum(s, 1.0) if mi else s
    lam = np.ones(mi)
    y = np.zeros(me)
    reg = 1e-13 * scale_c

    def kkt_solve(W, rhs_x, rhs_y):
        H = Q + (G.T * W) @ G + reg * eye
        K = np.block([[H, A.T], [A, -reg * np.eye(me)]]) if me else H
        rhs = np.concatenate([rhs_x, rhs_y])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        return sol[:n], sol[n:]

    def step_len(v, dv):
        neg = dv < 0
        if not np.any(neg):
            return 1.0
        return min(1.0, float(np.min(-v[neg] / dv[neg])))

    for _ in range(max_iter):
        r_d = Q @ x + c + G.T @ lam + A.T @ y
        r_p = A @ x - b
        r_i = G @ x + s - h
        mu = float(s @ lam) / mi if mi else 0.0
        worst_gap = float(np.max(s * lam)) if mi else 0.0
        if (
            np.max(np.abs(r_d), initial=0.0) <= tol * scale_c
            and np.max(np.abs(r_p), initial=0.0) <= tol * scale_b
            and np.max(np.abs(r_i), initial=0.0) <= tol * scale_b
            and worst_gap <= tol * scale_c * scale_b
        ):
            return True, x, lam, y, G, fl, fh
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > 1e14 * scale_b:
            break
        W = lam / s

        def direction(r_c):
            # ds = -r_i - G dx ;  dlam = (-r_c + lam*(r_i + G dx)) / s
            rx = -r_d - G.T @ ((-r_c + lam * r_i) / s)
            dx, dy = kkt_solve(W, rx, -r_p)
            ds = -r_i - G @ dx
            dlam = (-r_c - lam * ds) / s
            return dx, dy, ds, dlam

        dx, dy, ds, dlam = direction(s * lam)
        if mi:
            a_aff = min(step_len(s, ds), step_len(lam, dlam))
            mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dlam)) / mi
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            dx, dy, ds, dlam = direction(s * lam + ds * dlam - sigma * mu)
            alpha = min(1.0, 0.995 * min(step_len(s, ds), step_len(lam, dlam)))
        else:
            alpha = 1.0
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        lam = lam + alpha * dlam
    return False, x, lam, y, G, fl, fh


def _ipm_to_highs_duals(p: ConvexProgram, lam, y, fl, fh):
    k = p.b_ub.size
    rows = np.concatenate([-lam[:k], -y])
    z = np.zeros(p.variable_count)
    nh = int(fh.sum())
    z[fh] -= lam[k:k + nh]
    z[fl] += lam[k + nh:]
    return rows, z


def _kkt_residual(p: ConvexProgram, x, y, z) -> float:
    """Scaled max of primal violation, stationarity and complementarity."""
    A = np.vstack([p.A_ub, p.A_eq])
    grad = p.c.copy()
    if not p.is_lp:
        grad += p.Q @ x
    obj_scale = 1.0 + float(np.max(np.abs(grad), initial=0.0))
    rhs_scale = 1.0 + p.rhs_scale()
    stat = np.max(np.abs(grad - A.T @ y - z), initial=0.0) / obj_scale
    prim = p.max_violation(x) / rhs_scale

    act = A @ x
    row_lo = np.concatenate([np.full(p.b_ub.size, -np.inf), p.b_eq])
    row_hi = np.concatenate([p.b_ub, p.b_eq])

    def comp(mult, val, lower, upper):
        worst = 0.0
        pos = mult > 0
        neg = mult < 0
        for sel, bound, sign in ((pos, lower, 1.0), (neg, upper, -1.0)):
            if not np.any(sel):
                continue
            b = bound[sel]
            m = np.abs(mult[sel])
            finite = np.isfinite(b)
            if np.any(~finite):
                worst = max(worst, float(np.max(m[~finite])) / obj_scale)
            if np.any(finite):
                slack = sign * (val[sel][finite] - b[finite])
                worst = max(worst, float(np.max(m[finite] * np.abs(slack))) / (obj_scale * rhs_scale))
        return worst

    c_rows = comp(y, act, row_lo, row_hi) if y.size else 0.0
    c_cols = comp(z, x, p.lo, p.hi)
    return float(max(stat, prim, c_rows, c_cols))


def phase_one(p: ConvexProgram, config: SolverConfig = DEFAULT_CONFIG):
    """Smallest uniform relaxation ``s`` making the constraints feasible."""
    n = p.variable_count
    rows = []
    rhs = []
    for A, b in ((p.A_ub, p.b_ub),):
        if b.size:
            rows.append(np.hstack([A, -np.ones((b.size, 1))]))
            rhs.append(b)
    if p.b_eq.size:
        rows.append(np.hstack([p.A_eq, -np.ones((p.b_eq.size, 1))]))
        rhs.append(p.b_eq)
        rows.append(np.hstack([-p.A_eq, -np.ones((p.b_eq.size, 1))]))
        rhs.append(-p.b_eq)
    eye = np.eye(n)
    fl, fh = np.isfinite(p.lo), np.isfinite(p.hi)
    if fl.any():
        rows.append(np.hstack([-eye[fl], -np.ones((fl.sum(), 1))]))
        rhs.append(-p.lo[fl])
    if fh.any():
        rows.append(np.hstack([eye[fh], -np.ones((fh.sum(), 1))]))
        rhs.append(p.hi[fh])
    c = np.zeros(n + 1)
    c[-1] = 1.0
    if not rows:
        return 0.0, np.zeros(n)
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    lo = np.concatenate([np.full(n, -np.inf), [0.0]])
    hi = np.full(n + 1, np.inf)
    status, x, _, _ = _run_highs(c, None, A, np.full(b.size, -np.inf), b, lo, hi, config)
    if status != highspy.HighsModelStatus.kOptimal:
        raise NumericalFailure(f"phase-I program failed: {status}")
    return float(x[-1]), x[:n]


def solve(p: ConvexProgram, config: SolverConfig = DEFAULT_CONFIG) -> Solution:
    n = p.variable_count
    if not p.is_lp:
        sym = 0.5 * (p.Q + p.Q.T)
        if np.max(np.abs(sym - p.Q)) > 1e-12 * (1 + np.max(np.abs(p.Q))):
            raise ValueError("Q must be symmetric")
        if np.min(np.linalg.eigvalsh(sym)) < -config.psd_tol:
            raise ValueError("Q must be positive semidefinite")
    if not p.is_lp:
        return _solve_qp(p, config)

    A = np.vstack([p.A_ub, p.A_eq])
    row_lo = np.concatenate([np.full(p.b_ub.size, -np.inf), p.b_eq])
    row_hi = np.concatenate([p.b_ub, p.b_eq])
    Q = None
    status, x, y, z = _run_highs(p.c, Q, A, row_lo, row_hi, p.lo, p.hi, config)
    S = highspy.HighsModelStatus

    if status == S.kOptimal:
        return _package(p, x, y, z)
    if status in (S.kInfeasible, S.kUnboundedOrInfeasible, S.kUnbounded):
        viol, x1 = phase_one(p, config)
        threshold = config.infeasibility_tol * (1.0 + p.rhs_scale())
        if viol > threshold:
            return Solution("infeasible", x1, np.nan, np.inf, phase1_violation=viol)
        if status == S.kInfeasible:
            # feasible within tolerance: solve the uniformly relaxed program
            lo_r = np.where(np.isfinite(row_lo), row_lo - viol, row_lo)
            hi_r = row_hi + viol
            status, x, y, z = _run_highs(p.c, Q, A, lo_r, hi_r, p.lo - viol, p.hi + viol, config)
            if status == S.kOptimal:
                sol = _package(p, x, y, z)
                sol.phase1_violation = viol
                return sol
            raise NumericalFailure(f"relaxed program failed: {status}")
        return Solution("unbounded", x1, -np.inf, np.inf, phase1_violation=viol)
    raise NumericalFailure(f"solver stopped with status {status}")


def _solve_qp(p: ConvexProgram, config: SolverConfig) -> Solution:
    viol, x1 = phase_one(p, config)
    threshold = config.infeasibility_tol * (1.0 + p.rhs_scale())
    if viol > threshold:
        return Solution("infeasible", x1, np.nan, np.inf, phase1_violation=viol)
    q = p
    if viol > 0:
        # feasible within tolerance only: relax every constraint by viol
        q = ConvexProgram(
            p.c, p.Q,
            np.vstack([p.A_ub, p.A_eq, -p.A_eq]),
            np.concatenate([p.b_ub + viol, p.b_eq + viol, -p.b_eq + viol]),
            lo=p.lo - viol, hi=p.hi + viol, offset=p.offset,
        )
    ok, x, lam, y, _, fl, fh = _ipm_qp(q)
    if not ok:
        if np.all(np.isfinite(x)) and np.max(np.abs(x), initial=0.0) > 1e12 * (1 + p.rhs_scale()):
            return Solution("unbounded", x1, -np.inf, np.inf, phase1_violation=viol)
        raise NumericalFailure("interior-point QP did not converge")
    rows, z = _ipm_to_highs_duals(q, lam, y, fl, fh)
    sol = _package(q, x, rows, z)
    if q is not p:
        sol = Solution("optimal", x, p.objective(x), sol.max_kkt_residual, viol,
                       ineq_duals=rows[:p.b_ub.size], eq_duals=np.zeros(p.b_eq.size))
    return sol


def _package(p: ConvexProgram, x, y, z) -> Solution:
    k = p.b_ub.size
    return Solution(
        status="optimal",
        x=x,
        objective_value=p.objective(x),
        max_kkt_residual=_kkt_residual(p, x, y, z),
        ineq_duals=y[:k],
        eq_duals=y[k:],
    )
