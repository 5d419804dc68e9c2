"""Distributed disaggregation: exact penalty + gradient descent + average consensus.

Each aggregator i holds ``(x_i, z_i, v_i)``.  With the box penalty
``f^mu2(x) = sum f_i(x_i) + mu2 * sum([x_i - hi_i]^+ + [lo_i - x_i]^+)`` the
Euler-discretised dynamics are

    x' = -d f^mu2(x) + [mu]^+_z
    z' = -nu z - beta L z - v + nu (x_r e - x) + d f^mu2(x) - [mu]^+_z
    v' = nu beta L z

where ``e`` marks the aggregator that knows the requirement ``x_r`` and
``[mu]^+_z`` is ``mu`` where ``z_i > 0`` and 0 elsewhere.  ``z_i`` tracks
the share of the unmet requirement, so ``sum z = x_r - sum x`` is conserved.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from . import netgraph
from .convexsolve import ConvexProgram, solve
from .errors import GraphHypothesisViolated, NonFiniteState
from .netgraph import DiGraph

KINK_TOL = 1e-12


@dataclass(frozen=True)
class Gains:
    mu: float = 1000.0
    mu2: float = 1100.0
    nu: float = 400.0
    beta: float = 400.0

    def __post_init__(self):
        if min(self.mu, self.mu2, self.nu, self.beta) <= 0:
            raise ValueError("gains must be positive")


PAPER_GAINS = Gains()


# --- cost families ------------------------------------------------------


class QuadraticCosts:
    """``f_i(x) = a_i x^2 + b_i x``."""

    def __init__(self, a, b=None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.zeros_like(self.a) if b is None else np.asarray(b, dtype=float)
        if np.any(self.a < 0):
            raise ValueError("quadratic coefficients must be nonnegative")

    def __len__(self):
        return self.a.size

    def values(self, x):
        return self.a * x * x + self.b * x

    def grad(self, x):
        return 2.0 * self.a * x + self.b

    def max_grad(self, lo, hi) -> float:
        return float(np.max(np.maximum(np.abs(self.grad(lo)), np.abs(self.grad(hi)))))


class PWLCosts:
    """Convex piecewise-linear costs sampled on per-aggregator grids.

    Values beyond a grid continue the end segments linearly.  At a grid point
    the gradient is the average of the two adjacent slopes.
    """

    def __init__(self, grids, values):
        self.grids = [np.asarray(g, dtype=float) for g in grids]
        self.fvals = [np.asarray(v, dtype=float) for v in values]
        n = len(self.grids)
        lens = {g.size for g in self.grids}
        if len(lens) != 1 or min(lens) < 2:
            raise ValueError("PWL grids must share one length of at least 2")
        k = lens.pop()
        G = np.vstack(self.grids)
        F = np.vstack(self.fvals)
        if np.any(np.diff(G, axis=1) <= 0):
            raise ValueError("PWL grids must be strictly increasing")
        self._G, self._F = G, F
        self._S = np.diff(F, axis=1) / np.diff(G, axis=1)
        self._k = k
        self._rows = np.arange(n)
        # stacked keys: row r occupies [2r, 2r + 1] after normalising its grid
        lo, hi = G[:, 0], G[:, -1]
        self._lo, self._span = lo, hi - lo
        self._keys = (2.0 * self._rows[:, None] + (G - lo[:, None]) / self._span[:, None]).ravel()

    @classmethod
    def from_abstractions(cls, abstractions):
        return cls([a.grid for a in abstractions], [a.f_values for a in abstractions])

    def __len__(self):
        return len(self.grids)

    def _locate(self, x, side):
        t = (np.asarray(x, dtype=float) - self._lo) / self._span
        t = np.clip(t, 0.0, 1.0)
        pos = np.searchsorted(self._keys, 2.0 * self._rows + t, side=side) - self._rows * self._k
        return pos

    def values(self, x):
        x = np.asarray(x, dtype=float)
        seg = np.clip(self._locate(x, "right") - 1, 0, self._k - 2)
        r = self._rows
        return self._F[r, seg] + self._S[r, seg] * (x - self._G[r, seg])

    def grad(self, x):
        r = self._rows
        right = np.clip(self._locate(x, "right") - 1, 0, self._k - 2)
        left = np.clip(self._locate(x, "left") - 1, 0, self._k - 2)
        return 0.5 * (self._S[r, left] + self._S[r, right])

    def max_grad(self, lo=None, hi=None) -> float:
        return float(np.max(np.abs(self._S)))

    def segments(self, i):
        return self._G[i], self._F[i], self._S[i]


class MirroredCosts:
    """``x -> f(-x)``; turns a negative requirement into a positive one."""

    def __init__(self, base):
        self.base = base

    def __len__(self):
        return len(self.base)

    def values(self, x):
        return self.base.values(-np.asarray(x))

    def grad(self, x):
        return -self.base.grad(-np.asarray(x))

    def max_grad(self, lo, hi) -> float:
        return self.base.max_grad(-hi, -lo)


# --- problem and state ------------------------------------------------------


@dataclass
class CoordinationProblem:
    costs: object
    x_r: float
    lo: np.ndarray
    hi: np.ndarray
    graph: DiGraph
    gains: Gains = PAPER_GAINS
    informed: int = 0

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        n = len(self.costs)
        if self.lo.size != n or self.hi.size != n:
            raise ValueError("one box per aggregator required")
        if np.any(self.lo > self.hi):
            raise ValueError("empty effective box")
        if self.graph.n != n:
            raise ValueError("communication graph must have one vertex per aggregator")
        if not 0 <= self.informed < n:
            raise ValueError("informed aggregator out of range")
        self._L = netgraph.laplacian(self.graph)

    @property
    def n(self) -> int:
        return len(self.costs)

    @property
    def L(self) -> np.ndarray:
        return self._L

    def check_graph(self):
        if self.n == 1:
            return
        if not netgraph.is_strongly_connected(self.graph):
            raise GraphHypothesisViolated("communication graph is not strongly connected")
        if not netgraph.is_weight_balanced(self.graph):
            raise GraphHypothesisViolated("communication graph is not weight-balanced")

    def mirrored(self) -> "CoordinationProblem":
        return CoordinationProblem(MirroredCosts(self.costs), -self.x_r, -self.hi, -self.lo,
                                   self.graph, self.gains, self.informed)


@dataclass
class CoordinationState:
    x: np.ndarray
    z: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self) -> "CoordinationState":
        return CoordinationState(self.x.copy(), self.z.copy(), self.v.copy(), self.t)


def initial_state(prob: CoordinationProblem, x0=None) -> CoordinationState:
    """Start with ``v = 0`` and ``sum z = x_r - sum x``.

    Without ``x0`` the informed aggregator takes the whole requirement and
    ``z = 0``.  A warm start ``x0`` puts ``z = x_r e - x0``.
    """
    n = prob.n
    e = np.zeros(n)
    e[prob.informed] = 1.0
    if x0 is None:
        return CoordinationState(prob.x_r * e, np.zeros(n), np.zeros(n))
    x0 = np.asarray(x0, dtype=float).copy()
    return CoordinationState(x0, prob.x_r * e - x0, np.zeros(n))


# --- primitives -------------------------------------------------------------


def _lap(L, z):
    # row-wise product sums; the message-passing mode reproduces this bit for bit
    return (L * z).sum(axis=1)


def dac_step(z, v, u, u_dot, L, nu, beta, dt):
    """One Euler step of dynamic average consensus on inputs u."""
    Lz = _lap(L, z)
    z_new = z + dt * (u_dot - nu * (z - u) - beta * Lz - v)
    v_new = v + dt * (nu * beta * Lz)
    return z_new, v_new


def box_subgradient(x, lo, hi, mu2):
    """Subgradient of ``mu2 * ([x - hi]^+ + [lo - x]^+)``, 0 picked at kinks."""
    return mu2 * ((x - hi > KINK_TOL).astype(float) - (lo - x > KINK_TOL).astype(float))


def penalty_value(x, prob: CoordinationProblem, mu: float | None = None) -> float:
    g = prob.gains
    mu = g.mu if mu is None else mu
    x = np.asarray(x, dtype=float)
    box = np.maximum(x - prob.hi, 0.0) + np.maximum(prob.lo - x, 0.0)
    dx = prob.x_r - float(np.sum(x))
    return float(np.sum(prob.costs.values(x)) + g.mu2 * np.sum(box) + mu * max(dx, 0.0))


def _drift(prob: CoordinationProblem, x, z):
    g = prob.gains
    dfp = prob.costs.grad(x) + box_subgradient(x, prob.lo, prob.hi, g.mu2)
    push = np.where(z > KINK_TOL, g.mu, 0.0)
    return dfp, push


def gdac_step(state: CoordinationState, prob: CoordinationProblem, dt: float,
              e: np.ndarray | None = None) -> CoordinationState:
    g = prob.gains
    x, z, v = state.x, state.z, state.v
    if e is None:
        e = np.zeros(prob.n)
        e[prob.informed] = 1.0
    dfp, push = _drift(prob, x, z)
    Lz = _lap(prob.L, z)
    x_dot = push - dfp
    z_dot = -g.nu * z - g.beta * Lz - v + g.nu * (prob.x_r * e - x) + dfp - push
    v_dot = g.nu * g.beta * Lz
    new = CoordinationState(x + dt * x_dot, z + dt * z_dot, v + dt * v_dot, state.t + dt)
    if not (np.all(np.isfinite(new.x)) and np.all(np.isfinite(new.z)) and np.all(np.isfinite(new.v))):
        raise NonFiniteState("state diverged; reduce dt or gains")
    return new


def euler_spectral_radius(L: np.ndarray, gains: Gains, dt: float) -> float:
    """Spectral radius of the Euler map of the linear (z, v) consensus part.

    The common mode of v always contributes eigenvalue 1; values above 1
    mean the discretisation amplifies disagreement.
    """
    n = L.shape[0]
    I = np.eye(n)
    J = np.block([[I - dt * (gains.nu * I + gains.beta * L), -dt * I],
                  [dt * gains.nu * gains.beta * L, I]])
    return float(np.max(np.abs(np.linalg.eigvals(J))))


# --- solving one instant ----------------------------------------------------


@dataclass
class InstantResult:
    x: np.ndarray
    converged: bool
    steps: int
    dt: float
    trace: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    max_conservation_error: float = 0.0
    max_v_sum: float = 0.0
    final_state: CoordinationState | None = None

    @property
    def procured(self) -> float:
        return float(np.sum(self.x))


@dataclass(frozen=True)
class SolveConfig:
    dt: float = 1e-3
    max_steps: int = 20000
    tol: float = 1e-3
    window: int = 100  # averaging window of the stopping rule
    min_steps: int = 0
    trace_stride: int = 0  # 0 disables tracing
    reproject_every: int = 1  # remove the common mode of v every k steps
    chatter_guard: bool = True
    chatter_steps: int = 1000


def solve_instant(prob: CoordinationProblem, config: SolveConfig = SolveConfig(),
                  x0=None, observer=None) -> InstantResult:
    """Integrate the dynamics until the window-averaged velocity is small.

    Sliding-mode chattering keeps the instantaneous velocity near ``mu``, so
    the stopping test uses ``|mean x over the last window - mean over the
    window before| / (window dt)`` and the returned point is the last
    window's average.  ``observer(step, state)`` is called after each step.
    """
    prob.check_graph()
    if prob.x_r < 0:
        res = solve_instant(prob.mirrored(), config, None if x0 is None else -np.asarray(x0), observer)
        res.x = -res.x
        for row in res.trace:
            row["x"] = -row["x"]
            row["sum_x"] = -row["sum_x"]
            row["delta_x"] = -row["delta_x"]
        res.notes.append("mirrored negative requirement")
        return res
    if prob.n == 1:
        x = np.clip([prob.x_r], prob.lo, prob.hi)
        return InstantResult(x, True, 0, config.dt, [], ["single aggregator: clipped requirement"])

    dt = config.dt
    state = initial_state(prob, x0)
    e = np.zeros(prob.n)
    e[prob.informed] = 1.0
    W = config.window
    scale = config.tol * (1.0 + abs(prob.x_r))
    acc = np.zeros(prob.n)
    prev_avg = None
    last_avg = state.x.copy()
    notes: list[str] = []
    trace: list[dict] = []
    cons_err = 0.0
    vsum = 0.0
    fp_hist = [penalty_value(state.x, prob)] * 2
    alternations = 0
    halved = False
    rho = euler_spectral_radius(prob.L, prob.gains, dt)
    if rho > 1.0 + 1e-9:
        notes.append(f"Euler map of the consensus part has spectral radius {rho:.4f} > 1")
    converged = False
    step = 0
    for step in range(1, config.max_steps + 1):
        state = gdac_step(state, prob, dt, e)
        if config.reproject_every and step % config.reproject_every == 0:
            state.v -= math.fsum(state.v) / prob.n
        if observer is not None:
            observer(step, state)
        dx = prob.x_r - float(np.sum(state.x))
        cons_err = max(cons_err, abs(math.fsum(state.z) - dx))
        vsum = max(vsum, abs(math.fsum(state.v)))
        fp = None
        if config.trace_stride and step % config.trace_stride == 0:
            fp = penalty_value(state.x, prob)
            trace.append(dict(step=step, t=state.t, x=state.x.copy(), sum_x=float(np.sum(state.x)),
                              delta_x=dx, fp=fp))
        if config.chatter_guard and not halved:
            fp = penalty_value(state.x, prob) if fp is None else fp
            d1, d0 = fp - fp_hist[-1], fp_hist[-1] - fp_hist[-2]
            amp = config.tol * (1.0 + abs(fp))
            alternations = alternations + 1 if (d1 * d0 < 0 and abs(d1) > amp) else 0
            fp_hist = [fp_hist[-1], fp]
            if alternations >= config.chatter_steps:
                dt *= 0.5
                halved = True
                notes.append(f"period-2 chattering for {config.chatter_steps} steps at step {step}; dt halved to {dt:g}")
        acc += state.x
        if step % W == 0:
            avg = acc / W
            acc[:] = 0.0
            if prev_avg is not None and step >= config.min_steps:
                speed = float(np.max(np.abs(avg - prev_avg))) / (W * dt)
                if speed < scale:
                    last_avg = avg
                    converged = True
                    break
            prev_avg = avg
            last_avg = avg
    if not converged:
        notes.append("not converged within max_steps; returning last window average")
    return InstantResult(last_avg, converged, step, dt, trace, notes, cons_err, vsum, state)


# --- centralised reference --------------------------------------------------


def centralized_oracle(prob: CoordinationProblem, mu: float | None = None) -> np.ndarray:
    """Minimise ``sum f_i + mu [x_r - 1'x]^+`` over the effective boxes."""
    mu = prob.gains.mu if mu is None else mu
    if prob.x_r < 0 and not isinstance(prob.costs, MirroredCosts):
        # same orientation as solve_instant: a negative requirement is met from below
        return -centralized_oracle(prob.mirrored(), mu)
    n = prob.n
    costs = prob.costs
    sign = 1.0
    if isinstance(costs, MirroredCosts):
        costs, sign = costs.base, -1.0
    if sign < 0:
        lo, hi, x_r = -prob.hi, -prob.lo, -prob.x_r
    else:
        lo, hi, x_r = prob.lo, prob.hi, prob.x_r
    # deficit s >= sign * (x_r - 1'x) in the original orientation
    if isinstance(costs, QuadraticCosts):
        nv = n + 1
        Q = np.zeros((nv, nv))
        Q[np.arange(n), np.arange(n)] = 2.0 * costs.a
        c = np.concatenate([costs.b, [mu]])
        A = np.concatenate([-sign * np.ones(n), [-1.0]])[None, :]
        b = [-sign * x_r]
        sol = solve(ConvexProgram(c, Q, A, b, lo=np.concatenate([lo, [0.0]]),
                                  hi=np.concatenate([hi, [np.inf]])))
        return sign * sol.x[:n]
    if isinstance(costs, PWLCosts):
        # epigraph: t_i >= f_k + s_k (x_i - x_k) for every segment k
        nv = 2 * n + 1
        rows, rhs = [], []
        for i in range(n):
            G, F, S = costs.segments(i)
            for k in range(S.size):
                r = np.zeros(nv)
                r[i] = S[k]
                r[n + i] = -1.0
                rows.append(r)
                rhs.append(S[k] * G[k] - F[k])
        r = np.zeros(nv)
        r[:n] = -sign
        r[-1] = -1.0
        rows.append(r)
        rhs.append(-sign * x_r)
        c = np.concatenate([np.zeros(n), np.ones(n), [mu]])
        lo_v = np.concatenate([lo, np.full(n, -np.inf), [0.0]])
        hi_v = np.concatenate([hi, np.full(n, np.inf), [np.inf]])
        sol = solve(ConvexProgram(c, A_ub=np.array(rows), b_ub=np.array(rhs), lo=lo_v, hi=hi_v))
        return sign * sol.x[:n]
    raise TypeError("centralized_oracle supports QuadraticCosts and PWLCosts")


def effective_mu(prob: CoordinationProblem) -> float:
    """Penalty weight: the configured mu, raised to 2 max|f'| + 1 if needed."""
    return max(prob.gains.mu, 2.0 * prob.costs.max_grad(prob.lo, prob.hi) + 1.0)


# --- message passing ------------------------------------------------------


def run_message_passing(prob: CoordinationProblem, steps: int, dt: float = 1e-3,
                        x0=None) -> CoordinationState:
    """Run the dynamics with one thread per aggregator.

    Each agent owns its row of the dynamics and learns z only from its
    out-neighbours, through a per-step mailbox guarded by barriers.
    """
    prob.check_graph()
    n = prob.n
    start = initial_state(prob, x0)
    g = prob.gains
    L = prob.L
    nbrs = [[j for j in range(n) if j != i and L[i, j] != 0.0] for i in range(n)]
    mailbox = start.z.copy()  # published z values
    xs, zs, vs = start.x.copy(), start.z.copy(), start.v.copy()
    barrier = threading.Barrier(n)
    errors: list[BaseException] = []

    def agent(i):
        x, z, v = xs[i], zs[i], vs[i]
        lo, hi = prob.lo[i:i + 1], prob.hi[i:i + 1]
        e_i = 1.0 if i == prob.informed else 0.0
        row = L[i]
        try:
            for _ in range(steps):
                view = np.zeros(n)
                view[i] = z
                for j in nbrs[i]:
                    view[j] = mailbox[j]
                Lz = (row * view).sum()
                grad = _single_grad(prob.costs, i, x)
                dfp = grad + box_subgradient(np.array([x]), lo, hi, g.mu2)[0]
                push = g.mu if z > KINK_TOL else 0.0
                x_dot = push - dfp
                z_dot = -g.nu * z - g.beta * Lz - v + g.nu * (prob.x_r * e_i - x) + dfp - push
                v_dot = g.nu * g.beta * Lz
                x, z, v = x + dt * x_dot, z + dt * z_dot, v + dt * v_dot
                barrier.wait()  # everyone has read the mailbox
                mailbox[i] = z
                barrier.wait()  # everyone has published
        except BaseException as exc:  # pragma: no cover - surfaced below
            errors.append(exc)
            barrier.abort()
        xs[i], zs[i], vs[i] = x, z, v

    threads = [threading.Thread(target=agent, args=(i,)) for i in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return CoordinationState(xs, zs, vs, steps * dt)


def _single_grad(costs, i, xi):
    """Gradient of f_i alone, computed the way the vectorised path does."""
    x = np.zeros(len(costs))
    x[i] = xi
    return costs.grad(x)[i]
