import numpy as np
import pytest

from regnet.abstraction import NodeCost
from regnet.netgraph import DiGraph
from regnet.powerflow import NetworkModel


def random_tree(rng, n):
    """Random labelled tree on 1..n with random edge orientations."""
    edges = []
    for v in range(2, n + 1):
        u = int(rng.integers(1, v))
        edges.append((u, v) if rng.random() < 0.5 else (v, u))
    order = rng.permutation(len(edges))
    return DiGraph(n, tuple(edges[i] for i in order))


def random_connected(rng, n, extra):
    g = random_tree(rng, n)
    edges = list(g.edges)
    have = set(edges) | {(b, a) for a, b in edges}
    tries = 0
    while extra and tries < 200:
        tries += 1
        a, b = (int(v) for v in rng.integers(1, n + 1, 2))
        if a != b and (a, b) not in have:
            edges.append((a, b))
            have |= {(a, b), (b, a)}
            extra -= 1
    return DiGraph(n, tuple(edges))


def two_bus(limit=3.0, gmax=5.0, ramp=10.0):
    return NetworkModel(DiGraph(2, ((1, 2),)), ("tie", "gen"), [-gmax], [gmax], [0.0], [ramp], [limit], 0.0)


def three_bus(limits=(3.0, 3.0), gmin=0.0, gmax=6.0, g0=2.0, load=2.0, ramp=10.0):
    """Path tie(1) - gen(2) - load(3)."""
    return NetworkModel(DiGraph(3, ((1, 2), (2, 3))), ("tie", "gen", "load"), [gmin], [gmax], [g0],
                        [ramp], list(limits), load - g0)


def random_tree_network(rng, n=8, n_gen=3, headroom=1.5):
    """Tree microgrid whose baseline is strictly inside every limit."""
    from regnet.powerflow import Injection, tree_flows
    g = random_tree(rng, n)
    # re-root so vertex 1 is the tie and keep orientation
    kinds = ["tie"] + ["load"] * (n - 1)
    for b in rng.choice(np.arange(2, n + 1), n_gen, replace=False):
        kinds[int(b) - 1] = "gen"
    n_l = kinds.count("load")
    gmax = rng.uniform(3.0, 8.0, n_gen)
    gmin = np.zeros(n_gen)
    g0 = gmax * rng.uniform(0.3, 0.6, n_gen)
    ramp = rng.uniform(0.5, 3.0, n_gen)
    mean = rng.uniform(0.5, 2.0, n_l)
    proto = NetworkModel(g, tuple(kinds), gmin, gmax, g0, ramp, np.ones(g.m), float(mean.sum() - g0.sum()))
    w0 = tree_flows(proto, Injection(proto.p0, g0, mean))
    limit = np.abs(w0) + headroom * rng.uniform(0.3, 1.0, g.m) + 0.2
    net = NetworkModel(g, tuple(kinds), gmin, gmax, g0, ramp, limit, proto.p0)
    cost = NodeCost(rng.uniform(0.5, 2.0, n_gen), rng.uniform(0.0, 0.5, n_gen), g0)
    return net, cost, mean


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
