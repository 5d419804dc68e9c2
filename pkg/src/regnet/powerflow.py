"""Lossless linear power flow on a microgrid graph.

Bus 1 is the tie bus.  Injections are stacked by bus id as ``[P, g, -l]``
(tie power, controllable generation, load consumption) and satisfy
``inj = M @ omega``.  With the tie absorbing the imbalance,
``P = 1'l - 1'g`` and every flow solution is

    omega = A_l @ l + A_g @ g + N @ gamma

where ``gamma`` parameterises circulation around the fundamental loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import netgraph
from .convexsolve import ConvexProgram, solve
from .errors import NotATree, TopologyRejected, UnbalancedInjection
from .netgraph import DiGraph, TreeCertificate

BALANCE_TOL = 1e-9
KINDS = ("tie", "gen", "load")


@dataclass(frozen=True, eq=False)
class NetworkModel:
    graph: DiGraph
    bus_kind: tuple[str, ...]
    g_min: np.ndarray
    g_max: np.ndarray
    g0: np.ndarray
    ramp: np.ndarray
    flow_limit: np.ndarray
    p0: float = 0.0
    name: str = ""

    def __post_init__(self):
        kinds = tuple(self.bus_kind)
        object.__setattr__(self, "bus_kind", kinds)
        for attr in ("g_min", "g_max", "g0", "ramp", "flow_limit"):
            arr = np.array(getattr(self, attr), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "p0", float(self.p0))
        g = self.graph
        if len(kinds) != g.n:
            raise ValueError("one bus kind per vertex required")
        if g.n < 2:
            raise ValueError("a microgrid needs at least two buses")
        if kinds[0] != "tie" or any(k not in KINDS[1:] for k in kinds[1:]):
            raise ValueError("bus 1 must be the only tie bus; others are gen or load")
        ng = self.n_g
        for attr in ("g_min", "g_max", "g0", "ramp"):
            if getattr(self, attr).size != ng:
                raise ValueError(f"{attr} needs one entry per controllable bus")
        if self.flow_limit.size != g.m:
            raise ValueError("flow_limit needs one entry per line")
        if np.any(self.g_min > self.g_max):
            raise ValueError("g_min must not exceed g_max")
        if np.any(self.g0 < self.g_min) or np.any(self.g0 > self.g_max):
            raise ValueError("baseline g0 must lie within [g_min, g_max]")
        if np.any(self.flow_limit <= 0):
            raise ValueError("flow limits must be positive")
        if np.any(self.ramp < 0):
            raise ValueError("ramp limits must be nonnegative")
        if not netgraph.is_connected(g):
            raise netgraph.DisconnectedGraph("network graph is not connected")
        if not netgraph.has_non_overlapping_loops(g):
            raise TopologyRejected("network has overlapping loops")

    # --- index sets --------------------------------------------------------
    @cached_property
    def gen_buses(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.bus_kind) if k == "gen"], dtype=int)

    @cached_property
    def load_buses(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.bus_kind) if k == "load"], dtype=int)

    @property
    def n_g(self) -> int:
        return sum(k == "gen" for k in self.bus_kind)

    @property
    def n_l(self) -> int:
        return sum(k == "load" for k in self.bus_kind)

    @property
    def n_lines(self) -> int:
        return self.graph.m

    @property
    def is_tree(self) -> bool:
        return self.graph.m == self.graph.n - 1

    # --- cached matrices ---------------------------------------------------
    @cached_property
    def incidence(self) -> np.ndarray:
        return netgraph.incidence_matrix(self.graph)

    @cached_property
    def pinv(self) -> np.ndarray:
        return np.linalg.pinv(self.incidence)

    @cached_property
    def loops(self) -> np.ndarray:
        return netgraph.fundamental_loop_matrix(self.graph)

    @cached_property
    def n_loops(self) -> int:
        return self.loops.shape[1]

    @cached_property
    def split(self):
        P = self.pinv
        return P[:, 0], P[:, self.gen_buses], P[:, self.load_buses]

    @cached_property
    def A_l(self) -> np.ndarray:
        M1, _, M3 = self.split
        return np.outer(M1, np.ones(self.n_l)) - M3

    @cached_property
    def A_g(self) -> np.ndarray:
        M1, M2, _ = self.split
        return M2 - np.outer(M1, np.ones(self.n_g))

    @cached_property
    def path_matrix(self) -> np.ndarray:
        if not self.is_tree:
            raise NotATree("path matrix needs a tree network")
        return netgraph.path_matrix(TreeCertificate(self.graph, 1))

    def tie_power(self, g, l) -> float:
        return float(np.sum(l) - np.sum(g))

    def baseline_injection(self, l) -> "Injection":
        return Injection(self.tie_power(self.g0, l), self.g0, l)

    def flow_rows(self, l):
        """``(F, w0)`` with flows ``omega = F @ [g, gamma] + w0`` at load l."""
        F = np.hstack([self.A_g, self.loops])
        return F, self.A_l @ np.asarray(l, dtype=float)

    def with_flow_limit(self, limit) -> "NetworkModel":
        return NetworkModel(self.graph, self.bus_kind, self.g_min, self.g_max, self.g0,
                            self.ramp, limit, self.p0, self.name)


@dataclass(frozen=True, eq=False)
class Injection:
    tie: float
    gen: np.ndarray
    load: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "tie", float(self.tie))
        object.__setattr__(self, "gen", np.asarray(self.gen, dtype=float).ravel())
        object.__setattr__(self, "load", np.asarray(self.load, dtype=float).ravel())

    def imbalance(self) -> float:
        return self.tie + float(np.sum(self.gen)) - float(np.sum(self.load))

    def scale(self) -> float:
        return max(abs(self.tie), float(np.max(np.abs(self.gen), initial=0.0)),
                   float(np.max(np.abs(self.load), initial=0.0)))

    def vector(self, net: NetworkModel) -> np.ndarray:
        """Per-bus injection ``[P, g, -l]`` ordered by bus id."""
        if self.gen.size != net.n_g or self.load.size != net.n_l:
            raise ValueError("injection dimensions do not match the network")
        v = np.zeros(net.graph.n)
        v[0] = self.tie
        v[net.gen_buses] = self.gen
        v[net.load_buses] = -self.load
        return v


def _check_balance(inj: Injection):
    if abs(inj.imbalance()) > BALANCE_TOL * max(1.0, inj.scale()):
        raise UnbalancedInjection(f"injection imbalance {inj.imbalance():.3e}")


def tree_flows(net: NetworkModel, inj: Injection) -> np.ndarray:
    """Unique line flows of a tree, ``P_ref' @ inj[2:]``."""
    if not net.is_tree:
        raise NotATree("tree_flows needs a tree network")
    _check_balance(inj)
    return net.path_matrix.T @ inj.vector(net)[1:]


@dataclass(frozen=True)
class FlowCheck:
    feasible: bool
    gamma: np.ndarray
    flows: np.ndarray
    margin: float  # largest |omega_j| / limit_j - 1 at the best gamma

    def __bool__(self):
        return self.feasible


def feasible_flow_exists(net: NetworkModel, inj: Injection, limit=None) -> FlowCheck:
    """Is some loop circulation able to keep every line within its limit?"""
    _check_balance(inj)
    wbar = net.flow_limit if limit is None else np.asarray(limit, dtype=float)
    base = net.pinv @ inj.vector(net)
    k = net.n_loops
    if k == 0:
        margin = float(np.max(np.abs(base) / wbar - 1.0))
        return FlowCheck(margin <= BALANCE_TOL, np.zeros(0), base, margin)
    # min t  s.t.  +-(base + N gamma) / wbar - 1 <= t
    Nw = net.loops / wbar[:, None]
    bw = base / wbar
    ones = np.ones((net.n_lines, 1))
    A = np.vstack([np.hstack([Nw, -ones]), np.hstack([-Nw, -ones])])
    b = np.concatenate([1.0 - bw, 1.0 + bw])
    c = np.zeros(k + 1)
    c[-1] = 1.0
    sol = solve(ConvexProgram(c, A_ub=A, b_ub=b))
    gamma = sol.x[:k]
    flows = base + net.loops @ gamma
    margin = float(sol.x[-1])
    return FlowCheck(margin <= BALANCE_TOL, gamma, flows, margin)


def pseudoinverse_split(net: NetworkModel):
    """Columns of ``pinv(M)`` for the tie, controllable and load buses."""
    return net.split
