import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tree, three_bus
from regnet.errors import NotATree, TopologyRejected, UnbalancedInjection
from regnet.netgraph import DiGraph, incidence_matrix
from regnet.powerflow import Injection, NetworkModel, feasible_flow_exists, pseudoinverse_split, tree_flows


def _tree_net(g, rng, n_gen=2):
    n = g.n
    kinds = ["tie"] + ["load"] * (n - 1)
    for b in rng.choice(np.arange(2, n + 1), n_gen, replace=False):
        kinds[int(b) - 1] = "gen"
    return NetworkModel(g, tuple(kinds), np.zeros(n_gen), np.full(n_gen, 10.0), np.ones(n_gen),
                        np.ones(n_gen), np.full(g.m, 100.0))


def _balanced(net, rng):
    g = rng.uniform(-2, 2, net.n_g)
    l = rng.uniform(-2, 2, net.n_l)
    return Injection(float(l.sum() - g.sum()), g, l)


def test_tree_flows_examples():
    net = three_bus(limits=(3, 3))
    assert tree_flows(net, Injection(-1.0, [3.0], [2.0])).tolist() == [-1.0, 2.0]
    assert tree_flows(net, Injection(0.0, [2.0], [2.0])).tolist() == [0.0, 2.0]


def test_tree_flows_reproduce_injection(rng):
    for _ in range(10):
        net = _tree_net(random_tree(rng, 8), rng)
        inj = _balanced(net, rng)
        w = tree_flows(net, inj)
        np.testing.assert_allclose(incidence_matrix(net.graph) @ w, inj.vector(net), atol=1e-12)


def test_tree_flows_rejects_loops_and_imbalance():
    tri = NetworkModel(DiGraph(3, ((1, 2), (2, 3), (1, 3))), ("tie", "gen", "load"), [0], [5], [1], [1],
                       [5, 5, 5])
    with pytest.raises(NotATree):
        tree_flows(tri, Injection(1.0, [1.0], [2.0]))
    with pytest.raises(UnbalancedInjection):
        tree_flows(three_bus(), Injection(0.0, [1.0], [2.0]))


def test_feasible_flow_examples():
    inj = Injection(-1.0, [3.0], [2.0])
    assert feasible_flow_exists(three_bus(limits=(3, 3)), inj)
    assert not feasible_flow_exists(three_bus(limits=(3, 1)), inj)


def test_loop_network_needs_split():
    # triangle tie(1)-gen(2)-load(3); load of 4 served by the tie through both paths
    g = DiGraph(3, ((1, 2), (2, 3), (1, 3)))
    net = NetworkModel(g, ("tie", "gen", "load"), [0.0], [5.0], [0.0], [1.0], [2.5, 2.5, 2.5])
    inj = Injection(4.0, [0.0], [4.0])
    chk = feasible_flow_exists(net, inj)
    assert chk.feasible
    assert np.all(np.abs(chk.flows) <= net.flow_limit + 1e-9)
    # independent witness search over the single loop variable
    base = net.pinv @ inj.vector(net)
    gam = np.arange(-7.5, 7.5, 0.01)
    flows = base[:, None] + net.loops @ gam[None, :]
    assert np.any(np.all(np.abs(flows) <= net.flow_limit[:, None] + 1e-9, axis=0))
    tight = net.with_flow_limit([1.9, 1.9, 1.9])
    assert not feasible_flow_exists(tight, inj)


def test_overlapping_loops_rejected():
    g = DiGraph(4, ((1, 2), (2, 3), (1, 3), (3, 4), (4, 1)))
    with pytest.raises(TopologyRejected):
        NetworkModel(g, ("tie", "gen", "load", "load"), [0], [1], [0], [1], [1] * 5)


def test_pseudoinverse_split_single_edge():
    net = NetworkModel(DiGraph(2, ((1, 2),)), ("tie", "gen"), [-1], [1], [0], [1], [1])
    M1, M2, M3 = pseudoinverse_split(net)
    np.testing.assert_allclose(M1, [0.5])
    np.testing.assert_allclose(M2, [[-0.5]])
    assert M3.shape == (1, 0)
    # independent pseudoinverse via eigendecomposition of M M'
    M = incidence_matrix(net.graph)
    w, V = np.linalg.eigh(M @ M.T)
    inv = np.where(w > 1e-12, 1 / np.where(w > 1e-12, w, 1), 0.0)
    np.testing.assert_allclose(net.pinv, M.T @ (V * inv) @ V.T, atol=1e-12)


def test_pseudoinverse_matches_tree_flows(rng):
    net = three_bus()
    for _ in range(20):
        inj = _balanced(net, rng)
        np.testing.assert_allclose(net.pinv @ inj.vector(net), tree_flows(net, inj), atol=1e-10)


@given(st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_flow_superposition_and_range(seed):
    rng = np.random.default_rng(seed)
    net = _tree_net(random_tree(rng, int(rng.integers(3, 9))), rng)
    a, b = _balanced(net, rng), _balanced(net, rng)
    ab = Injection(a.tie + b.tie, a.gen + b.gen, a.load + b.load)
    np.testing.assert_allclose(tree_flows(net, ab), tree_flows(net, a) + tree_flows(net, b), atol=1e-12)
    M = incidence_matrix(net.graph)
    np.testing.assert_allclose(M @ net.pinv @ a.vector(net), a.vector(net), atol=1e-10)
    w = tree_flows(net, a)
    lim = np.abs(w) + 0.1
    assert feasible_flow_exists(net, a, lim)
    lim[0] = max(abs(w[0]) - 0.05, 1e-3) if abs(w[0]) > 0.06 else lim[0]
    assert bool(feasible_flow_exists(net, a, lim)) == bool(np.all(np.abs(w) <= lim + 1e-9))


def test_validation():
    with pytest.raises(ValueError):
        NetworkModel(DiGraph(2, ((1, 2),)), ("gen", "tie"), [0], [1], [0], [1], [1])
    with pytest.raises(ValueError):
        NetworkModel(DiGraph(2, ((1, 2),)), ("tie", "gen"), [0], [1], [2], [1], [1])
    with pytest.raises(ValueError):
        NetworkModel(DiGraph(2, ((1, 2),)), ("tie", "gen"), [0], [1], [0], [1], [0.0])
