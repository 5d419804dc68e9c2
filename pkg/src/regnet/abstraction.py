"""Microgrid abstractions: regulation capacity, ramp rate and cost.

Sign convention: regulation ``x = P - P0`` is the change in tie power, so
up regulation (more generation, less import) is negative.  The capacity
interval is ``[up, down]`` with ``up <= 0 <= down``.

Decision vectors handed to the solver are laid out as ``[g, gamma, w]``:
generation, loop circulation, and (only when some node cost has a linear
term) the auxiliary ``w >= |g - g0|``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .convexsolve import ConvexProgram, solve
from .errors import (
    EpsilonOutOfRange,
    InfeasibleAtConfidence,
    InfeasibleBaseline,
    InfeasibleOperatingPoint,
    RampInfeasible,
    RegulationOutOfRange,
)
from .netgraph import _reachable
from .powerflow import NetworkModel

FEAS_TOL = 1e-7
SQRT2 = math.sqrt(2.0)


# --- inverse error function ----------------------------------------------


def erfinv(y: float, tol: float = 1e-12) -> float:
    """Inverse of ``math.erf`` by bisection; the tails are bracketed via erfc."""
    y = float(y)
    if not -1.0 < y < 1.0:
        if y == 1.0:
            return math.inf
        if y == -1.0:
            return -math.inf
        raise ValueError("erfinv needs |y| <= 1")
    if y == 0.0:
        return 0.0
    sign = 1.0 if y > 0 else -1.0
    a = abs(y)
    lo, hi = 0.0, 1.0
    if a > 0.5:
        # erfc keeps relative precision where erf saturates at 1
        q = 1.0 - a
        while math.erfc(hi) > q:
            hi *= 2.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if math.erfc(mid) > q:
                lo = mid
            else:
                hi = mid
    else:
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if math.erf(mid) < a:
                lo = mid
            else:
                hi = mid
    return sign * 0.5 * (lo + hi)


# --- loads and costs -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class LoadDistribution:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.cov, dtype=float).reshape(mean.size, mean.size)
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("load covariance must be symmetric")
        if mean.size and np.min(np.linalg.eigvalsh(cov)) < -1e-9 * (1 + np.max(np.abs(cov))):
            raise ValueError("load covariance must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_diag(cls, mean, var) -> "LoadDistribution":
        return cls(mean, np.diag(np.asarray(var, dtype=float)))

    @classmethod
    def constant(cls, mean) -> "LoadDistribution":
        mean = np.asarray(mean, dtype=float).ravel()
        return cls(mean, np.zeros((mean.size, mean.size)))

    @property
    def is_degenerate(self) -> bool:
        return not np.any(self.cov)

    def total_std(self) -> float:
        return math.sqrt(max(float(np.sum(self.cov)), 0.0))

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        if self.is_degenerate:
            shape = (self.mean.size,) if size is None else (size, self.mean.size)
            return np.broadcast_to(self.mean, shape).copy()
        return rng.multivariate_normal(self.mean, self.cov, size=size, method="eigh")


@dataclass(frozen=True, eq=False)
class NodeCost:
    """``h_p(g) = quad_p (g - g0_p)^2 + lin_p |g - g0_p|`` per controllable node."""

    quad: np.ndarray
    lin: np.ndarray
    g0: np.ndarray

    def __post_init__(self):
        for attr in ("quad", "lin", "g0"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float).ravel())
        if not (self.quad.size == self.lin.size == self.g0.size):
            raise ValueError("cost coefficient vectors must have equal length")
        if np.any(self.quad < 0) or np.any(self.lin < 0):
            raise ValueError("cost coefficients must be nonnegative (convex h)")

    @classmethod
    def quadratic(cls, net: NetworkModel, quad=1.0, lin=0.0) -> "NodeCost":
        ng = net.n_g
        return cls(np.broadcast_to(quad, ng), np.broadcast_to(lin, ng), net.g0)

    def node_values(self, g) -> np.ndarray:
        d = np.asarray(g, dtype=float) - self.g0
        return self.quad * d * d + self.lin * np.abs(d)

    def __call__(self, g) -> float:
        return float(np.sum(self.node_values(g)))


@dataclass(frozen=True)
class AbstractionConfig:
    grid_size: int = 101
    respect_capacity_in_ramp: bool = False
    tie_break: float = 1e-9  # weight of the |g - g0|^2 term selecting a canonical g*


DEFAULT = AbstractionConfig()


# --- program assembly ----------------------------------------------------


def _flow_block(net: NetworkModel, l, limit, width: int, g_col: int = 0, gam_col: int | None = None):
    """Rows ``|A_g g + N gamma + A_l l| <= limit`` inside a ``width``-column program."""
    ng, k = net.n_g, net.n_loops
    gam_col = g_col + ng if gam_col is None else gam_col
    F = np.zeros((net.n_lines, width))
    F[:, g_col:g_col + ng] = net.A_g
    F[:, gam_col:gam_col + k] = net.loops
    w0 = net.A_l @ np.asarray(l, dtype=float)
    return np.vstack([F, -F]), np.concatenate([limit - w0, limit + w0])


def _limit(net: NetworkModel, limit):
    return net.flow_limit if limit is None else np.asarray(limit, dtype=float)


def _extreme_generation(net: NetworkModel, l, limit=None, sense: int = 1):
    """Largest (sense=+1) or smallest (-1) total generation with feasible flows."""
    ng, k = net.n_g, net.n_loops
    nv = ng + k
    A, b = _flow_block(net, l, _limit(net, limit), nv)
    c = np.zeros(nv)
    c[:ng] = -float(sense)
    lo = np.concatenate([net.g_min, np.full(k, -np.inf)])
    hi = np.concatenate([net.g_max, np.full(k, np.inf)])
    sol = solve(ConvexProgram(c, A_ub=A, b_ub=b, lo=lo, hi=hi))
    if not sol.optimal:
        return None
    return float(np.sum(sol.x[:ng])), sol.x[:ng]


def capacity_bounds_deterministic(net: NetworkModel, l) -> tuple[float, float]:
    """``(up, down)`` capacities at a fixed load vector."""
    l = np.asarray(l, dtype=float)
    hi = _extreme_generation(net, l, sense=1)
    lo = _extreme_generation(net, l, sense=-1)
    if hi is None or lo is None:
        raise InfeasibleBaseline("no generation profile keeps flows within limits at this load")
    total_l = float(np.sum(l))
    return total_l - hi[0] - net.p0, total_l - lo[0] - net.p0


def line_std(net: NetworkModel, dist: LoadDistribution) -> np.ndarray:
    """Standard deviation of each line flow induced by load uncertainty."""
    A = net.A_l
    var = np.einsum("ji,ik,jk->j", A, dist.cov, A)
    return np.sqrt(np.maximum(var, 0.0))


def _check_eps(eps, name, allow_one=False):
    ok = 0.0 < eps < 1.0 or (allow_one and eps == 1.0)
    if not ok:
        raise EpsilonOutOfRange(f"{name}={eps} must lie in (0, 1)")


def tightened_flow_limits(net: NetworkModel, dist: LoadDistribution, eps: float,
                          allow_boundary: bool = False) -> np.ndarray:
    """Flow limits shrunk so each line holds with probability at least 1 - eps."""
    _check_eps(eps, "epsilon", allow_one=allow_boundary)
    K = SQRT2 * erfinv(eps - 1.0) * line_std(net, dist)
    return net.flow_limit + K


def _chance_offset(dist: LoadDistribution, eps_prime: float) -> float:
    return SQRT2 * erfinv(2.0 * eps_prime - 1.0) * dist.total_std()


def capacity_bounds_chance(net: NetworkModel, dist: LoadDistribution, eps_prime: float,
                           eps: float) -> tuple[float, float]:
    up, down, _, _ = _chance_capacity(net, dist, eps_prime, eps)
    return up, down


def _chance_capacity(net, dist, eps_prime, eps):
    _check_eps(eps_prime, "epsilon_prime")
    _check_eps(eps, "epsilon")
    limit = tightened_flow_limits(net, dist, eps)
    if np.any(limit <= 0):
        raise InfeasibleAtConfidence("tightened flow limit is not positive on some line")
    hi = _extreme_generation(net, dist.mean, limit, sense=1)
    lo = _extreme_generation(net, dist.mean, limit, sense=-1)
    if hi is None or lo is None:
        raise InfeasibleAtConfidence("chance-tightened capacity program is infeasible")
    # min t  s.t.  t >= 1'l - 1'g - c sigma  (and the mirrored max for down)
    total = float(np.sum(dist.mean))
    c = _chance_offset(dist, eps_prime)
    up = total - hi[0] - c - net.p0
    down = total - lo[0] + c - net.p0
    return up, down, hi[1], limit


# --- ramp ----------------------------------------------------------------


def _check_operating_point(net, g, l, limit):
    scale = 1.0 + float(np.max(np.abs(g), initial=0.0))
    if np.any(g < net.g_min - FEAS_TOL * scale) or np.any(g > net.g_max + FEAS_TOL * scale):
        raise InfeasibleOperatingPoint("generation outside its bounds")
    k = net.n_loops
    w0 = net.A_l @ l + net.A_g @ g
    if k == 0:
        worst = float(np.max(np.abs(w0) - limit, initial=0.0))
    else:
        A, b = _flow_block(net, l, limit, net.n_g + k + 1)
        # min t over gamma with slack t on every row, g fixed
        Ag = A[:, :net.n_g]
        Ak = A[:, net.n_g:net.n_g + k]
        rows = np.hstack([Ak, -np.ones((A.shape[0], 1))])
        c = np.zeros(k + 1)
        c[-1] = 1.0
        sol = solve(ConvexProgram(c, A_ub=rows, b_ub=b - Ag @ g))
        worst = float(sol.x[-1])
    if worst > FEAS_TOL * (1.0 + float(np.max(limit))):
        raise InfeasibleOperatingPoint(f"operating point violates flow limits by {worst:.3e}")


def ramp_rate_at(net: NetworkModel, g, l=None, dist: LoadDistribution | None = None,
                 eps: float | None = None, config: AbstractionConfig = DEFAULT,
                 limit=None) -> float:
    """Largest total increase ``1'dg`` with ``dg <= r`` and post-ramp flows within limits."""
    g = np.asarray(g, dtype=float)
    if dist is not None:
        l = dist.mean
        if limit is None and eps is not None and not dist.is_degenerate:
            limit = tightened_flow_limits(net, dist, eps)
    l = np.zeros(net.n_l) if l is None else np.asarray(l, dtype=float)
    limit = _limit(net, limit)
    _check_operating_point(net, g, l, limit)
    ng, k = net.n_g, net.n_loops
    nv = ng + k
    A, b = _flow_block(net, l, limit, nv)
    b = b - A[:, :ng] @ g
    c = np.zeros(nv)
    c[:ng] = -1.0
    hi = np.concatenate([net.ramp, np.full(k, np.inf)])
    if config.respect_capacity_in_ramp:
        hi[:ng] = np.minimum(hi[:ng], net.g_max - g)
    sol = solve(ConvexProgram(c, A_ub=A, b_ub=b, hi=hi))
    if not sol.optimal:
        raise InfeasibleOperatingPoint(f"ramp program returned {sol.status}")
    return min(max(-sol.objective_value, 0.0), float(np.sum(net.ramp)))


def min_ramp_nonzero(net: NetworkModel, l=None, margin: float = 1e-7) -> bool:
    """Whether the ramp rate stays positive at the maximum up-regulation point.

    Lines strictly below their limit at that point are kept; the answer is
    true when a controllable bus with positive ramp limit still reaches the
    tie bus through them.
    """
    l = np.zeros(net.n_l) if l is None else np.asarray(l, dtype=float)
    res = _extreme_generation(net, l, sense=1)
    if res is None:
        raise InfeasibleBaseline("no feasible operating point")
    g_up = res[1]
    flows = _flows_at(net, g_up, l)
    keep = np.abs(flows) < net.flow_limit * (1.0 - margin)
    adj = [[] for _ in range(net.graph.n)]
    for j, (a, b) in enumerate(net.graph.edges):
        if keep[j]:
            adj[a - 1].append((b - 1, j))
            adj[b - 1].append((a - 1, j))
    seen = _reachable(adj, 0)
    return any(seen[v] and r > 0 for v, r in zip(net.gen_buses, net.ramp))


def _flows_at(net: NetworkModel, g, l, limit=None) -> np.ndarray:
    """A feasible flow vector at (g, l); loops take the least-violating circulation."""
    w0 = net.A_l @ l + net.A_g @ g
    if net.n_loops == 0:
        return w0
    from .powerflow import Injection, feasible_flow_exists
    chk = feasible_flow_exists(net, Injection(net.tie_power(g, l), g, l), limit)
    return chk.flows


# --- cost ----------------------------------------------------------------


def _cost_terms(cost: NodeCost, nv: int, g_col: int, w_col: int | None, tie_break: float = 0.0):
    """Quadratic objective pieces for h(g) (+ tie-break) on columns g_col.."""
    ng = cost.quad.size
    Q = np.zeros((nv, nv))
    c = np.zeros(nv)
    a = cost.quad + tie_break
    idx = np.arange(g_col, g_col + ng)
    Q[idx, idx] = 2.0 * a
    c[idx] = -2.0 * a * cost.g0
    offset = float(np.sum(a * cost.g0 ** 2))
    A = np.zeros((0, nv))
    b = np.zeros(0)
    if w_col is not None:
        c[w_col:w_col + ng] = cost.lin
        # w >= g - g0 and w >= g0 - g
        A = np.zeros((2 * ng, nv))
        A[np.arange(ng), idx] = 1.0
        A[np.arange(ng), w_col + np.arange(ng)] = -1.0
        A[ng + np.arange(ng), idx] = -1.0
        A[ng + np.arange(ng), w_col + np.arange(ng)] = -1.0
        b = np.concatenate([cost.g0, -cost.g0])
    return Q, c, offset, A, b


def dispatch(net: NetworkModel, cost: NodeCost, x: float, l, limit=None, tie_break: float = 0.0):
    """Cheapest generation profile delivering regulation x; returns ``(f, g)``.

    ``f`` is always the untouched cost ``h(g)``; ``tie_break`` only steers
    which minimiser is returned.
    """
    l = np.asarray(l, dtype=float)
    ng, k = net.n_g, net.n_loops
    has_lin = bool(np.any(cost.lin))
    nv = ng + k + (ng if has_lin else 0)
    A, b = _flow_block(net, l, _limit(net, limit), nv)
    Q, c, offset, Aw, bw = _cost_terms(cost, nv, 0, ng + k if has_lin else None, tie_break)
    E = np.zeros((1, nv))
    E[0, :ng] = -1.0
    d = [net.p0 + x - float(np.sum(l))]
    lo = np.concatenate([net.g_min, np.full(nv - ng, -np.inf)])
    hi = np.concatenate([net.g_max, np.full(nv - ng, np.inf)])
    if has_lin:
        lo[ng + k:] = 0.0
    sol = solve(ConvexProgram(c, Q, np.vstack([A, Aw]), np.concatenate([b, bw]), E, d, lo, hi, offset))
    if not sol.optimal:
        raise RegulationOutOfRange(f"regulation {x} is not deliverable ({sol.status})")
    g = np.clip(sol.x[:ng], net.g_min, net.g_max)
    return cost(g), g


def cost_of_regulation(net: NetworkModel, cost: NodeCost, x: float, l) -> float:
    return dispatch(net, cost, x, l)[0]


def ramp_rate_of_regulation(net: NetworkModel, cost: NodeCost, x: float, l,
                            config: AbstractionConfig = DEFAULT, limit=None) -> float:
    _, g = dispatch(net, cost, x, l, limit, tie_break=config.tie_break)
    return ramp_rate_at(net, g, l, config=config, limit=limit)


def cost_with_ramp(net: NetworkModel, cost: NodeCost, x: float, x_prev: float, l,
                   symmetric: bool = True) -> float:
    """Cost of x when the previous instant delivered x_prev.

    Both operating points are decision variables.  With ``symmetric`` the
    ramp limit bounds moves in both directions, ``|dg| <= r``.
    """
    l = np.asarray(l, dtype=float)
    ng, k = net.n_g, net.n_loops
    has_lin = bool(np.any(cost.lin))
    blk = ng + k
    nv = 2 * blk + (ng if has_lin else 0)
    # columns: [g_prev, gamma_prev, g, gamma, w]
    limit = net.flow_limit
    A1, b1 = _flow_block(net, l, limit, nv, 0)
    A2, b2 = _flow_block(net, l, limit, nv, blk)
    Q, c, offset, Aw, bw = _cost_terms(cost, nv, blk, 2 * blk if has_lin else None)
    R = np.zeros((ng, nv))
    R[:, blk:blk + ng] = np.eye(ng)
    R[:, :ng] = -np.eye(ng)
    rows = [A1, A2, Aw, R]
    rhs = [b1, b2, bw, net.ramp]
    if symmetric:
        rows.append(-R)
        rhs.append(net.ramp)
    E = np.zeros((2, nv))
    E[0, :ng] = -1.0
    E[1, blk:blk + ng] = -1.0
    total = float(np.sum(l))
    d = [net.p0 + x_prev - total, net.p0 + x - total]
    lo = np.full(nv, -np.inf)
    hi = np.full(nv, np.inf)
    for col in (0, blk):
        lo[col:col + ng] = net.g_min
        hi[col:col + ng] = net.g_max
    if has_lin:
        lo[2 * blk:] = 0.0
    sol = solve(ConvexProgram(c, Q, np.vstack(rows), np.concatenate(rhs), E, d, lo, hi, offset))
    if sol.optimal:
        return cost(np.clip(sol.x[blk:blk + ng], net.g_min, net.g_max))
    for val in (x, x_prev):
        dispatch(net, cost, val, l)  # raises RegulationOutOfRange when out of range
    raise RampInfeasible(f"ramp limits cannot move from {x_prev} to {x}")


# --- packaged abstraction ------------------------------------------------


def regulation_grid(up: float, down: float, size: int) -> np.ndarray:
    """Grid over [up, down] holding 0, uniform on each side of it."""
    if size < 3 or size % 2 == 0:
        raise ValueError("grid size must be odd and at least 3")
    half = (size + 1) // 2
    left = np.linspace(up, 0.0, half)
    right = np.linspace(0.0, down, half)
    return np.concatenate([left, right[1:]])


@dataclass(eq=False)
class MicrogridAbstraction:
    up: float
    down: float
    grid: np.ndarray
    f_values: np.ndarray
    r_values: np.ndarray
    g_up: np.ndarray
    ramp_up: float = 0.0  # ramp rate at g_up
    cost_up: float = 0.0  # h(g_up)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.f_values = np.asarray(self.f_values, dtype=float)
        self.r_values = np.asarray(self.r_values, dtype=float)
        self.g_up = np.asarray(self.g_up, dtype=float)
        self._slopes = _segment_slopes(self.grid, self.f_values)

    @property
    def capacity(self) -> tuple[float, float]:
        return self.up, self.down

    def f(self, x):
        """Piecewise-linear cost, extended linearly beyond the grid."""
        return _pwl_eval(self.grid, self.f_values, self._slopes, x)

    def R(self, x):
        return np.interp(x, self.grid, self.r_values)

    def slopes(self, x):
        """``(left, right)`` one-sided derivatives of the interpolant."""
        return _pwl_slopes(self.grid, self._slopes, x)

    def grad(self, x):
        left, right = self.slopes(x)
        return 0.5 * (left + right)

    def to_json(self) -> dict:
        return {
            "up": self.up,
            "down": self.down,
            "g_up": self.g_up.tolist(),
            "ramp_up": self.ramp_up,
            "cost_up": self.cost_up,
            "grid": [{"x": float(a), "f": float(b), "R": float(c)}
                     for a, b, c in zip(self.grid, self.f_values, self.r_values)],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, d: dict) -> "MicrogridAbstraction":
        pts = d["grid"]
        return cls(d["up"], d["down"], [p["x"] for p in pts], [p["f"] for p in pts],
                   [p["R"] for p in pts], d["g_up"], d.get("ramp_up", 0.0),
                   d.get("cost_up", 0.0), d.get("meta", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _segment_slopes(x, y):
    dx = np.diff(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(dx > 0, np.diff(y) / np.where(dx > 0, dx, 1.0), 0.0)
    return s


def _pwl_eval(xs, ys, slopes, x):
    x = np.asarray(x, dtype=float)
    if xs.size == 1:
        return np.full_like(x, ys[0]) if x.ndim else float(ys[0])
    out = np.interp(x, xs, ys)
    out = np.where(x < xs[0], ys[0] + slopes[0] * (x - xs[0]), out)
    out = np.where(x > xs[-1], ys[-1] + slopes[-1] * (x - xs[-1]), out)
    return out if out.ndim else float(out)


def _pwl_slopes(xs, slopes, x):
    x = np.asarray(x, dtype=float)
    if slopes.size == 0:
        z = np.zeros_like(x)
        return z, z
    # segment index to the left / right of x; grid points get both neighbours
    right_idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, slopes.size - 1)
    left_idx = np.clip(np.searchsorted(xs, x, side="left") - 1, 0, slopes.size - 1)
    return slopes[left_idx], slopes[right_idx]


def sample_cost_curve(net: NetworkModel, cost: NodeCost, l, grid, config: AbstractionConfig = DEFAULT):
    """f and R at each grid point for load l (nominal limits)."""
    f = np.empty(len(grid))
    R = np.empty(len(grid))
    for i, x in enumerate(grid):
        _, g = dispatch(net, cost, float(x), l, tie_break=config.tie_break)
        f[i] = cost(g)
        R[i] = ramp_rate_at(net, g, l, config=config)
    return f, R


def build_abstraction(net: NetworkModel, cost: NodeCost, dist: LoadDistribution | None = None,
                      eps_prime: float = 0.1, eps: float = 0.1,
                      config: AbstractionConfig = DEFAULT) -> MicrogridAbstraction:
    if dist is None:
        dist = LoadDistribution.constant(np.zeros(net.n_l))
    l = dist.mean
    det_up, det_down = capacity_bounds_deterministic(net, l)
    if dist.is_degenerate:
        up, down = det_up, det_down
        limit = net.flow_limit
        g_sum = _extreme_generation(net, l, sense=1)[0]
    else:
        up, down, _, limit = _chance_capacity(net, dist, eps_prime, eps)
        g_sum = _extreme_generation(net, l, limit, sense=1)[0]
    # f and R are sampled with nominal limits, so stay inside their domain
    up, down = max(up, det_up), min(down, det_down)
    if up > 0 or down < 0:
        warnings.warn("capacity interval excludes the baseline; clamping to include x = 0")
        up, down = min(up, 0.0), max(down, 0.0)
    grid = regulation_grid(up, down, config.grid_size)
    f, R = sample_cost_curve(net, cost, l, grid, config)
    # cheapest profile among those attaining the (possibly tightened) max generation
    x_gen = float(np.sum(l)) - g_sum - net.p0
    _, g_up = dispatch(net, cost, x_gen, l, limit, tie_break=config.tie_break)
    ramp_up = ramp_rate_at(net, g_up, l, config=config, limit=limit)
    meta = {"eps_prime": eps_prime, "eps": eps, "degenerate": dist.is_degenerate,
            "name": net.name}
    return MicrogridAbstraction(up, down, grid, f, R, g_up, ramp_up, cost(g_up), meta)
