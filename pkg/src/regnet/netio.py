"""Network JSON reader/writer.

Schema (kW throughout)::

    {"buses": [{"id": 1, "kind": "tie"},
               {"id": 2, "kind": "gen", "gmin": -5, "gmax": 5, "g0": 0, "ramp": 10,
                "cost": {"quad": 1.0, "lin": 0.0}},
               {"id": 3, "kind": "load"}],
     "lines": [{"from": 1, "to": 2, "limit": 3.0}],
     "p0": 0.0,
     "loads": {"mean": [...], "cov_diag": [...]}}

``loads`` is optional (zero constant loads); ``cov`` may replace ``cov_diag``.
``p0`` is optional and otherwise derived from the baseline balance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .abstraction import LoadDistribution, NodeCost
from .errors import ParseError, UnbalancedInjection
from .netgraph import DiGraph
from .powerflow import BALANCE_TOL, NetworkModel

_TOP = {"buses", "lines", "p0", "loads", "name"}
_BUS = {"tie": {"id", "kind"},
        "gen": {"id", "kind", "gmin", "gmax", "g0", "ramp", "cost"},
        "load": {"id", "kind"}}
_LINE = {"from", "to", "limit"}
_COST = {"quad", "lin"}
_LOADS = {"mean", "cov_diag", "cov", "distribution"}


@dataclass(frozen=True, eq=False)
class NetworkBundle:
    net: NetworkModel
    cost: NodeCost
    loads: LoadDistribution


def _unknown(d: dict, allowed: set, where: str):
    extra = set(d) - allowed
    if extra:
        raise ParseError(f"unknown field(s) {sorted(extra)} in {where}")


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ParseError(f"missing field '{key}' in {where}")
    return d[key]


def parse_network(d: dict) -> NetworkBundle:
    if not isinstance(d, dict):
        raise ParseError("network document must be a JSON object")
    _unknown(d, _TOP, "network")
    buses = sorted(_need(d, "buses", "network"), key=lambda b: _need(b, "id", "bus"))
    n = len(buses)
    if [b["id"] for b in buses] != list(range(1, n + 1)):
        raise ParseError("bus ids must be 1..n without gaps")
    kinds, gmin, gmax, g0, ramp, quad, lin = [], [], [], [], [], [], []
    for b in buses:
        kind = _need(b, "kind", f"bus {b['id']}")
        if kind not in _BUS:
            raise ParseError(f"bus {b['id']}: unknown kind '{kind}'")
        _unknown(b, _BUS[kind], f"bus {b['id']}")
        kinds.append(kind)
        if kind == "gen":
            where = f"bus {b['id']}"
            gmin.append(float(_need(b, "gmin", where)))
            gmax.append(float(_need(b, "gmax", where)))
            g0.append(float(b.get("g0", 0.0)))
            ramp.append(float(_need(b, "ramp", where)))
            cst = b.get("cost", {"quad": 1.0, "lin": 0.0})
            _unknown(cst, _COST, f"cost of {where}")
            quad.append(float(cst.get("quad", 0.0)))
            lin.append(float(cst.get("lin", 0.0)))
    edges, limits = [], []
    for ln in _need(d, "lines", "network"):
        _unknown(ln, _LINE, "line")
        edges.append((int(_need(ln, "from", "line")), int(_need(ln, "to", "line"))))
        limits.append(float(_need(ln, "limit", "line")))
    n_l = kinds.count("load")
    loads = d.get("loads", {"mean": [0.0] * n_l})
    _unknown(loads, _LOADS, "loads")
    if loads.get("distribution", "normal") != "normal":
        raise ParseError("only normal load distributions are supported")
    mean = np.asarray(loads.get("mean", [0.0] * n_l), dtype=float)
    if mean.size != n_l:
        raise ParseError(f"loads.mean has {mean.size} entries, expected {n_l}")
    if "cov" in loads and "cov_diag" in loads:
        raise ParseError("give either loads.cov or loads.cov_diag, not both")
    try:
        if "cov" in loads:
            dist = LoadDistribution(mean, loads["cov"])
        elif "cov_diag" in loads:
            dist = LoadDistribution.from_diag(mean, loads["cov_diag"])
        else:
            dist = LoadDistribution.constant(mean)
        p0_balance = float(np.sum(mean) - np.sum(g0))
        p0 = float(d.get("p0", p0_balance))
        if abs(p0 - p0_balance) > BALANCE_TOL * max(1.0, abs(p0_balance), float(np.max(np.abs(mean), initial=0))):
            raise UnbalancedInjection(
                f"p0={p0} does not balance baseline generation and mean load ({p0_balance})")
        net = NetworkModel(DiGraph(n, tuple(edges)), tuple(kinds), gmin, gmax, g0, ramp,
                           limits, p0, str(d.get("name", "")))
        cost = NodeCost(quad, lin, g0)
    except (ValueError, TypeError) as exc:
        raise ParseError(str(exc)) from exc
    return NetworkBundle(net, cost, dist)


def load_network(path) -> NetworkBundle:
    try:
        text = Path(path).read_text(encoding="utf-8")
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_network(doc)


def network_to_dict(bundle: NetworkBundle) -> dict:
    net, cost, dist = bundle.net, bundle.cost, bundle.loads
    buses = []
    gi = 0
    for i, kind in enumerate(net.bus_kind):
        b = {"id": i + 1, "kind": kind}
        if kind == "gen":
            b.update(gmin=float(net.g_min[gi]), gmax=float(net.g_max[gi]), g0=float(net.g0[gi]),
                     ramp=float(net.ramp[gi]),
                     cost={"quad": float(cost.quad[gi]), "lin": float(cost.lin[gi])})
            gi += 1
        buses.append(b)
    lines = [{"from": a, "to": b, "limit": float(w)}
             for (a, b), w in zip(net.graph.edges, net.flow_limit)]
    loads = {"mean": dist.mean.tolist()}
    if not dist.is_degenerate:
        if np.count_nonzero(dist.cov - np.diag(np.diag(dist.cov))):
            loads["cov"] = dist.cov.tolist()
        else:
            loads["cov_diag"] = np.diag(dist.cov).tolist()
    out = {"buses": buses, "lines": lines, "p0": net.p0, "loads": loads}
    if net.name:
        out["name"] = net.name
    return out
