"""Tracking experiment: clear the market, then disaggregate a signal instant by instant.

Signal values use the tie-power convention of the rest of the package:
positive values ask the fleet to raise its net consumption (down
regulation), negative values ask for up regulation.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import netgraph
from .abstraction import (
    AbstractionConfig,
    LoadDistribution,
    NodeCost,
    build_abstraction,
    capacity_bounds_deterministic,
    regulation_grid,
    sample_cost_curve,
)
from .coordination import CoordinationProblem, Gains, PWLCosts, SolveConfig, solve_instant
from .errors import InfeasibleBaseline, MismatchedScenarios, ParseError, ValueOutOfRange
from .market import MarketAward, clear_market, make_bid
from .netgraph import DiGraph
from .netio import NetworkBundle, load_network
from .powerflow import Injection, NetworkModel, feasible_flow_exists, tree_flows

# --- signal ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegulationSignal:
    t: np.ndarray
    value: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.value, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ParseError("signal needs matching 1-d time and value columns")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ParseError("signal times must be strictly increasing")
        if np.any(np.abs(v) > 1.0):
            raise ValueOutOfRange("normalised signal values must lie in [-1, 1]")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "value", v)

    def __len__(self):
        return self.t.size

    def required(self) -> np.ndarray:
        return self.scale * self.value

    def head(self, n: int) -> "RegulationSignal":
        return RegulationSignal(self.t[:n], self.value[:n], self.scale)


def load_signal(path, scale: float = 1.0) -> RegulationSignal:
    """Read a ``t,value`` CSV with header."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read signal {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
        raise ParseError("signal CSV must start with the header 't,value'")
    t, v = [], []
    for k, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"line {k}: expected two columns")
        try:
            t.append(float(row[0]))
            v.append(float(row[1]))
        except ValueError as exc:
            raise ParseError(f"line {k}: {exc}") from exc
    return RegulationSignal(t, v, scale)


def write_signal(path, signal: RegulationSignal):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for a, b in zip(signal.t, signal.value):
            w.writerow([repr(float(a)), repr(float(b))])


def synthetic_regd(n: int, seed: int = 0, period: float = 2.0) -> RegulationSignal:
    """A RegD-like normalised test signal: fast mean-reverting, zero-mean, clipped."""
    rng = np.random.default_rng(seed)
    v = np.zeros(n)
    for k in range(1, n):
        v[k] = 0.9 * v[k - 1] + 0.12 * rng.standard_normal() + 0.05 * math.sin(2 * math.pi * k / 150)
    v = np.clip(v, -1.0, 1.0)
    return RegulationSignal(period * np.arange(n), np.round(v, 6))


# --- synthetic fleet ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FleetMember:
    bundle: NetworkBundle
    eps_prime: float
    eps: float
    group: int
    name: str


SCENARIOS = ((None, None), (1e-1, 4.2e-5), (2e-1, 8.4e-5))


def _random_tree(n: int, rng) -> list[tuple[int, int]]:
    """Radial feeder: each bus hangs off one of the few most recent buses."""
    edges = [(1, 2)]
    for v in range(3, n + 1):
        parent = int(rng.integers(max(2, v - 4), v))
        edges.append((parent, v))
    return edges


def _synth_group(rng, n_bus=48, n_gen=10):
    edges = _random_tree(n_bus, rng)
    gen_buses = sorted(int(b) for b in rng.choice(np.arange(3, n_bus + 1), n_gen, replace=False))
    kinds = ["tie"] + ["gen" if b in gen_buses else "load" for b in range(2, n_bus + 1)]
    n_l = kinds.count("load")
    mean = np.round(rng.uniform(15.0, 90.0, n_l), 1)
    # two gas turbines, one steam turbine, PV on the rest
    gmax = np.concatenate([rng.uniform(900, 1300, 2), rng.uniform(500, 800, 1), rng.uniform(60, 200, n_gen - 3)])
    gmin = np.concatenate([0.2 * gmax[:3], np.zeros(n_gen - 3)])
    g0 = np.concatenate([rng.uniform(0.45, 0.6, 3) * gmax[:3], rng.uniform(0.7, 0.9, n_gen - 3) * gmax[3:]])
    ramp = np.concatenate([rng.uniform(80, 120, 2), rng.uniform(40, 60, 1), rng.uniform(20, 40, n_gen - 3)])
    quad = np.concatenate([rng.uniform(0.04, 0.08, 2), rng.uniform(0.08, 0.12, 1), rng.uniform(0.15, 0.3, n_gen - 3)])
    order = rng.permutation(n_gen)  # machine types land on random buses
    return edges, kinds, mean, gmin[order], np.round(gmax[order], 1), g0[order], ramp[order], quad[order]


def _limits(net_edges, kinds, mean, g0, gmin, gmax, rng):
    """Line limits: baseline flow plus room for 4.5 sigma and some regulation."""
    n = len(kinds)
    proto = NetworkModel(DiGraph(n, tuple(net_edges)), tuple(kinds), gmin, gmax, g0,
                         np.zeros(len(g0)), np.ones(n - 1), float(np.sum(mean) - np.sum(g0)))
    w0 = tree_flows(proto, Injection(proto.p0, g0, mean))
    sigma = np.sqrt(np.einsum("ji,i,ji->j", proto.A_l, 0.25 * mean ** 2, proto.A_l))
    swing = np.abs(proto.A_g) @ (gmax - gmin)
    lim = np.abs(w0) + 4.5 * sigma + rng.uniform(0.25, 0.6, n - 1) * swing + 5.0
    return np.round(lim, 1)


def synth_fleet(group_count: int = 4, per_group: int = 3, seed: int = 0) -> list[FleetMember]:
    """Synthetic 48-bus radial microgrids; members of a group share one baseline.

    Member ``k`` of a group uses scenario ``k % 3``: constant load, then
    variable load (variance 0.25 mean^2) at (eps', eps) = (1e-1, 4.2e-5) and
    (2e-1, 8.4e-5).
    """
    if group_count < 1 or per_group < 1:
        raise ValueError("counts must be positive")
    rng = np.random.default_rng(seed)
    members = []
    for gi in range(group_count):
        while True:
            edges, kinds, mean, gmin, gmax, g0, ramp, quad = _synth_group(rng)
            limit = _limits(edges, kinds, mean, g0, gmin, gmax, rng)
            net = NetworkModel(DiGraph(len(kinds), tuple(edges)), tuple(kinds), gmin, gmax, g0, ramp,
                               limit, float(np.sum(mean) - np.sum(g0)))
            if feasible_flow_exists(net, net.baseline_injection(mean)):
                break
        cost = NodeCost(quad, np.zeros_like(quad), g0)
        for k in range(per_group):
            eps_p, eps = SCENARIOS[k % 3]
            name = f"g{gi + 1}m{k + 1}"
            named = NetworkModel(net.graph, net.bus_kind, net.g_min, net.g_max, net.g0, net.ramp,
                                 net.flow_limit, net.p0, name)
            dist = (LoadDistribution.constant(mean) if eps_p is None
                    else LoadDistribution.from_diag(mean, 0.25 * mean ** 2))
            members.append(FleetMember(NetworkBundle(named, cost, dist), eps_p or 0.5, eps or 0.5, gi, name))
    return members


# --- scenario -------------------------------------------------------------


@dataclass
class Scenario:
    fleet: list
    signal: RegulationSignal
    gains: Gains = field(default_factory=Gains)
    dt: float = 1e-3
    topology: DiGraph | None = None
    k: float = 1.0
    requirement: float | None = None  # capacity to procure per market; default max |x_r|
    seed: int = 0
    grid_size: int = 101
    recompute_stride: int = 25
    instants: int | None = None
    max_steps: int = 6000
    tol: float = 1e-3
    trace_stride: int = 0
    warm_start: bool = False  # start each instant from the previous setpoints
    name: str = "scenario"
    awards: tuple | None = None  # pre-cleared (up, down) MarketAwards

    def __post_init__(self):
        n = len(self.fleet)
        if self.topology is None:
            self.topology = netgraph.ring_with_chords(n)
        if self.topology.n != n:
            raise ValueError("topology size does not match the fleet")

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.name.encode())
        h.update(np.asarray(self.signal.required()[: self.horizon]).tobytes())
        h.update(str(len(self.fleet)).encode())
        h.update(str(self.seed).encode())
        return h.hexdigest()[:16]

    @property
    def horizon(self) -> int:
        return len(self.signal) if self.instants is None else min(self.instants, len(self.signal))


def _topology_from(spec, n: int) -> DiGraph:
    kind = spec.get("kind", "ring_chords")
    if kind == "ring":
        return netgraph.ring(n, directed=bool(spec.get("directed", False)))
    if kind == "ring_chords":
        return netgraph.ring_with_chords(n)
    if kind == "complete":
        return netgraph.complete(n)
    if kind == "edges":
        return DiGraph(n, tuple(tuple(e) for e in spec["edges"]))
    raise ParseError(f"unknown topology kind '{kind}'")


_SCENARIO_KEYS = {"fleet", "signal", "gains", "dt", "topology", "epsilon_prime", "epsilon", "k",
                  "requirement", "seed", "grid_size", "recompute_stride", "instants", "max_steps",
                  "tol", "trace_stride", "warm_start", "name", "awards"}


def load_scenario(path, seed_override: int | None = None) -> Scenario:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read scenario {path}: {exc}") from exc
    extra = set(d) - _SCENARIO_KEYS
    if extra:
        raise ParseError(f"unknown scenario field(s) {sorted(extra)}")
    base = path.parent
    seed = int(d.get("seed", 0)) if seed_override is None else seed_override
    fleet_spec = d.get("fleet", {"synthetic": {"groups": 4, "per_group": 3}})
    if "synthetic" in fleet_spec:
        s = fleet_spec["synthetic"]
        fleet = synth_fleet(int(s.get("groups", 4)), int(s.get("per_group", 3)), int(s.get("seed", seed)))
    elif "files" in fleet_spec:
        eps_p = float(d.get("epsilon_prime", 0.1))
        eps = float(d.get("epsilon", 0.1))
        fleet = []
        for i, f in enumerate(fleet_spec["files"]):
            b = load_network(base / f)
            fleet.append(FleetMember(b, eps_p, eps, i, Path(f).stem))
    else:
        raise ParseError("fleet needs 'synthetic' or 'files'")
    sig = d.get("signal")
    if not sig or "path" not in sig:
        raise ParseError("scenario needs signal.path")
    signal = load_signal(base / sig["path"], float(sig.get("scale", 1.0)))
    g = d.get("gains", {})
    gains = Gains(float(g.get("mu", 1000)), float(g.get("mu2", 1100)), float(g.get("nu", 400)),
                  float(g.get("beta", 400)))
    topo = _topology_from(d.get("topology", {"kind": "ring_chords"}), len(fleet))
    awards = None
    if "awards" in d:
        try:
            awards = tuple(MarketAward.from_json(json.loads((base / d["awards"][k]).read_text(encoding="utf-8")))
                           for k in ("up", "down"))
        except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read awards: {exc}") from exc
    return Scenario(fleet, signal, gains, float(d.get("dt", 1e-3)), topo, float(d.get("k", 1.0)),
                    d.get("requirement"), seed, int(d.get("grid_size", 101)),
                    int(d.get("recompute_stride", 25)), d.get("instants"), int(d.get("max_steps", 6000)),
                    float(d.get("tol", 1e-3)), int(d.get("trace_stride", 0)), bool(d.get("warm_start", False)),
                    str(d.get("name", path.stem)), awards)


# --- market stage ---------------------------------------------------------


@dataclass
class MarketOutcome:
    abstractions: list
    up: MarketAward
    down: MarketAward


def run_market(scn: Scenario) -> MarketOutcome:
    if scn.awards is not None:
        return MarketOutcome([], *scn.awards)
    cfg = AbstractionConfig(grid_size=scn.grid_size)
    absx = [build_abstraction(m.bundle.net, m.bundle.cost, m.bundle.loads, m.eps_prime, m.eps, cfg)
            for m in scn.fleet]
    req = scn.requirement
    if req is None:
        req = float(np.max(np.abs(scn.signal.required()[: scn.horizon]), initial=0.0))
    up_bids = [make_bid(a, m.bundle.cost, scn.k, i, "up") for i, (a, m) in enumerate(zip(absx, scn.fleet))]
    down_bids = [make_bid(a, m.bundle.cost, scn.k, i, "down") for i, (a, m) in enumerate(zip(absx, scn.fleet))]
    return MarketOutcome(absx, clear_market(up_bids, req), clear_market(down_bids, req))


# --- tracking -------------------------------------------------------------


@dataclass
class TrackingResult:
    method: str
    scenario: str
    t: np.ndarray
    x_r: np.ndarray
    x: np.ndarray  # instants x aggregators
    cost: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    notes: list = field(default_factory=list)

    @property
    def procured(self) -> np.ndarray:
        return self.x.sum(axis=1)

    @property
    def residual(self) -> np.ndarray:
        return self.x_r - self.procured

    @property
    def cumulative_cost(self) -> np.ndarray:
        return np.cumsum(self.cost)

    @property
    def total_cost(self) -> float:
        return float(np.sum(self.cost))

    def mileage(self) -> np.ndarray:
        """Per-aggregator realised mileage, starting from x = 0."""
        prev = np.vstack([np.zeros((1, self.x.shape[1])), self.x[:-1]])
        return np.abs(self.x - prev).sum(axis=0)

    def saturated(self) -> np.ndarray:
        """Instants where the requirement lies outside the sum of the boxes."""
        if self.lo is None:
            return np.zeros(self.t.size, dtype=bool)
        tol = 1e-9 * (1.0 + np.abs(self.x_r))
        return (self.x_r > self.hi.sum(axis=1) + tol) | (self.x_r < self.lo.sum(axis=1) - tol)

    def to_csv(self, path):
        n = self.x.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["# method", self.method, "scenario", self.scenario])
            head = ["instant", "t", "x_r"] + [f"x_{i + 1}" for i in range(n)]
            head += ["procured", "residual", "cost", "cum_cost"]
            if self.lo is not None:
                head += [f"lo_{i + 1}" for i in range(n)] + [f"hi_{i + 1}" for i in range(n)]
            w.writerow(head)
            cum = self.cumulative_cost
            for k in range(self.t.size):
                row = [k, self.t[k], self.x_r[k], *self.x[k], self.procured[k], self.residual[k],
                       self.cost[k], cum[k]]
                if self.lo is not None:
                    row += [*self.lo[k], *self.hi[k]]
                w.writerow([_fmt(v) for v in row])

    @classmethod
    def from_csv(cls, path) -> "TrackingResult":
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
            meta, head, body = rows[0], rows[1], rows[2:]
            method, scenario = meta[1], meta[3]
            n = sum(1 for h in head if h.startswith("x_") and h != "x_r")
            data = np.array([[float(c) for c in r] for r in body if r]).reshape(-1, len(head))
        except (OSError, IndexError, ValueError) as exc:
            raise ParseError(f"cannot read tracking result {path}: {exc}") from exc
        col = {h: i for i, h in enumerate(head)}
        x = data[:, [col[f"x_{i + 1}"] for i in range(n)]]
        lo = hi = None
        if "lo_1" in col:
            lo = data[:, [col[f"lo_{i + 1}"] for i in range(n)]]
            hi = data[:, [col[f"hi_{i + 1}"] for i in range(n)]]
        return cls(method, scenario, data[:, col["t"]], data[:, col["x_r"]], x, data[:, col["cost"]], lo, hi)


def _fmt(v) -> str:
    return repr(float(v)) if not isinstance(v, int) else str(v)


def proportional_fill(weights, lo, hi, total: float):
    """``x_i = clip(lam * w_i, lo_i, hi_i)`` with ``sum x = total`` when attainable.

    With ``lo = 0`` and ``hi`` the capacities this is the fixed point of the
    capped proportional redistribution.  Outside ``[sum lo, sum hi]`` the
    boxes saturate and the shortfall is left unallocated.
    """
    w = np.asarray(weights, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if total >= np.sum(hi):
        return hi.copy()
    if total <= np.sum(lo):
        return lo.copy()
    rest = np.clip(0.0, lo, hi)
    if np.sum(rest) == total:
        return rest
    sign = 1.0 if total >= 0 else -1.0
    ww = np.where(w > 0, w, 0.0)

    def fill(lam):
        return np.clip(sign * lam * ww, lo, hi)

    a, b = 0.0, 1.0
    while np.sum(fill(b)) * sign < abs(total) and b < 1e300:
        b *= 2.0
    if np.sum(fill(b)) * sign < abs(total):
        # zero-weight resources must take up the rest; spread it evenly
        x = fill(b)
        free = ww == 0
        return _spread(x, lo, hi, free, total)
    for _ in range(200):
        m = 0.5 * (a + b)
        if np.sum(fill(m)) * sign < abs(total):
            a = m
        else:
            b = m
    return fill(b)


def _spread(x, lo, hi, free, total):
    x = x.copy()
    for _ in range(x.size + 1):
        gap = total - np.sum(x)
        idx = free & (x < hi if gap > 0 else x > lo)
        if abs(gap) < 1e-12 or not np.any(idx):
            break
        x[idx] = np.clip(x[idx] + gap / np.sum(idx), lo[idx], hi[idx])
    return x


def _realised_loads(scn: Scenario) -> list[np.ndarray]:
    """Per-member (instants x loads) arrays, identical for every method."""
    rng = np.random.default_rng(scn.seed)
    T = scn.horizon
    return [m.bundle.loads.sample(rng, T) if T else np.zeros((0, m.bundle.net.n_l)) for m in scn.fleet]


class _CostBook:
    """Per-aggregator f and R at the load of the latest recompute instant."""

    def __init__(self, scn: Scenario):
        self.scn = scn
        self.cfg = AbstractionConfig(grid_size=scn.grid_size)
        self.costs = None
        self.R = None

    def refresh(self, loads):
        grids, fvals, rvals = [], [], []
        for m, l in zip(self.scn.fleet, loads):
            net, cost = m.bundle.net, m.bundle.cost
            try:
                up, down = capacity_bounds_deterministic(net, l)
            except InfeasibleBaseline:
                up, down = -1e-6, 1e-6
            up, down = min(up, -1e-6), max(down, 1e-6)
            grid = regulation_grid(up, down, self.scn.grid_size)
            f, R = sample_cost_curve(net, cost, l, grid, self.cfg)
            grids.append(grid)
            fvals.append(f)
            rvals.append((grid, R))
        self.costs = PWLCosts(grids, fvals)
        self.R = rvals

    def ramp(self, x_prev):
        return np.array([np.interp(x, g, r) for x, (g, r) in zip(x_prev, self.R)])


def run_tracking(scn: Scenario, method: str, market: MarketOutcome | None = None,
                 trace_dir=None) -> TrackingResult:
    if method not in ("proposed", "current"):
        raise ValueError("method must be 'proposed' or 'current'")
    market = run_market(scn) if market is None else market
    T, N = scn.horizon, len(scn.fleet)
    loads = _realised_loads(scn)
    x_req = scn.signal.required()[:T]
    cap_up = np.zeros(N)
    cap_down = np.zeros(N)
    cap_up[list(market.up.aggregators)] = market.up.cleared_capacity
    cap_down[list(market.down.aggregators)] = market.down.cleared_capacity
    book = _CostBook(scn)
    x_prev = np.zeros(N)
    X = np.zeros((T, N))
    LO = np.zeros((T, N))
    HI = np.zeros((T, N))
    cost = np.zeros(T)
    notes = []
    cfg = SolveConfig(dt=scn.dt, max_steps=scn.max_steps, tol=scn.tol, trace_stride=scn.trace_stride)
    for k in range(T):
        l_now = [L[k] for L in loads]
        if k % scn.recompute_stride == 0:
            book.refresh(l_now)
        real = []
        for m, l in zip(scn.fleet, l_now):
            try:
                real.append(capacity_bounds_deterministic(m.bundle.net, l))
            except InfeasibleBaseline:
                real.append((0.0, 0.0))
        real = np.array(real)
        R = book.ramp(x_prev)
        lo = np.maximum.reduce([-cap_up, real[:, 0], x_prev - R])
        hi = np.minimum.reduce([cap_down, real[:, 1], x_prev + R])
        empty = lo > hi
        if np.any(empty):
            # nothing reachable inside the awarded range: stay as close as possible
            stay = np.clip(x_prev, real[:, 0], real[:, 1])
            lo[empty] = hi[empty] = stay[empty]
        xr = float(x_req[k])
        if method == "proposed":
            prob = CoordinationProblem(book.costs, xr, lo, hi, scn.topology, scn.gains)
            res = solve_instant(prob, cfg, np.clip(x_prev, lo, hi) if scn.warm_start else None)
            x = np.clip(res.x, lo, hi)
            if not res.converged:
                notes.append(f"instant {k}: solver hit max_steps")
            if trace_dir is not None and res.trace:
                _write_trace(Path(trace_dir) / f"instant_{k:04d}.csv", res.trace)
        else:
            award = market.down if xr >= 0 else market.up
            w = np.zeros(N)
            w[list(award.aggregators)] = award.cleared_mileage
            if not np.any(w > 0):
                w = np.ones(N)
                notes.append(f"instant {k}: no cleared mileage, equal split")
            x = proportional_fill(w, lo, hi, xr)
        X[k], LO[k], HI[k] = x, lo, hi
        cost[k] = float(np.sum(book.costs.values(x)))
        x_prev = x
    return TrackingResult(method, scn.fingerprint(), scn.signal.t[:T].copy(), x_req.copy(), X, cost, LO, HI, notes)


def _write_trace(path: Path, trace):
    path.parent.mkdir(parents=True, exist_ok=True)
    n = trace[0]["x"].size
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t"] + [f"x_{i + 1}" for i in range(n)] + ["sum_x", "delta_x", "fp"])
        for r in trace:
            w.writerow([r["step"], _fmt(r["t"]), *[_fmt(v) for v in r["x"]], _fmt(r["sum_x"]),
                        _fmt(r["delta_x"]), _fmt(r["fp"])])


# --- comparison -----------------------------------------------------------


@dataclass
class Comparison:
    residual_a: np.ndarray
    residual_b: np.ndarray
    cost_a: float
    cost_b: float
    mileage_a: np.ndarray
    mileage_b: np.ndarray
    rms_a: float
    rms_b: float
    method_a: str
    method_b: str

    @property
    def cost_delta(self) -> float:
        return self.cost_a - self.cost_b

    def summary(self) -> str:
        lines = [
            f"methods: {self.method_a} vs {self.method_b}",
            f"total cost: {self.cost_a:.6f} vs {self.cost_b:.6f} (delta {self.cost_delta:+.6f})",
            f"rms tracking error (kW): {self.rms_a:.6f} vs {self.rms_b:.6f}",
            "realised mileage (kW) per aggregator:",
        ]
        for i, (a, b) in enumerate(zip(self.mileage_a, self.mileage_b)):
            lines.append(f"  {i + 1:3d}  {a:14.6f}  {b:14.6f}")
        lines.append("note: the current-practice baseline is clipped to the same per-instant ramp boxes")
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["instant", f"residual_{self.method_a}", f"residual_{self.method_b}"])
            for k, (a, b) in enumerate(zip(self.residual_a, self.residual_b)):
                w.writerow([k, _fmt(a), _fmt(b)])


def compare(a: TrackingResult, b: TrackingResult) -> Comparison:
    if a.scenario != b.scenario or a.x.shape != b.x.shape or not np.array_equal(a.x_r, b.x_r):
        raise MismatchedScenarios("results come from different scenarios or signals")
    ra, rb = a.residual, b.residual
    return Comparison(ra, rb, a.total_cost, b.total_cost, a.mileage(), b.mileage(),
                      float(np.sqrt(np.mean(ra ** 2))) if ra.size else 0.0,
                      float(np.sqrt(np.mean(rb ** 2))) if rb.size else 0.0, a.method, b.method)


def write_outputs(out_dir, result: TrackingResult):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / f"result_{result.method}.csv")
    other = out / ("result_current.csv" if result.method == "proposed" else "result_proposed.csv")
    if other.exists():
        cmp = compare(*sorted([result, TrackingResult.from_csv(other)], key=lambda r: r.method != "proposed"))
        (out / "summary.txt").write_text(cmp.summary(), encoding="utf-8")
