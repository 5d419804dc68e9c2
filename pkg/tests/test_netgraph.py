import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_connected, random_tree
from regnet import netgraph
from regnet.netgraph import DiGraph, TreeCertificate


def test_incidence_examples():
    path = DiGraph(3, ((1, 2), (2, 3)))
    assert netgraph.incidence_matrix(path).tolist() == [[1, 0], [-1, 1], [0, -1]]
    assert netgraph.incidence_matrix(DiGraph(2, ((1, 2),))).tolist() == [[1], [-1]]
    tri = DiGraph(3, ((1, 2), (2, 3), (1, 3)))
    assert netgraph.incidence_matrix(tri).tolist() == [[1, 0, 1], [-1, 1, 0], [0, -1, -1]]


def test_loop_matrix_examples():
    assert netgraph.fundamental_loop_matrix(DiGraph(3, ((1, 2), (2, 3)))).shape == (2, 0)
    tri = DiGraph(3, ((1, 2), (2, 3), (1, 3)))
    N = netgraph.fundamental_loop_matrix(tri)
    assert N.shape == (3, 1)
    assert abs(N[:, 0]).tolist() == [1, 1, 1]
    assert N[0, 0] == N[1, 0] == -N[2, 0]
    assert not np.any(netgraph.incidence_matrix(tri) @ N)


def test_loop_matrix_two_triangles_bridge():
    g = DiGraph(6, ((1, 2), (2, 3), (3, 1), (3, 4), (4, 5), (5, 6), (6, 4)))
    N = netgraph.fundamental_loop_matrix(g)
    assert N.shape == (7, 2)
    assert not np.any(netgraph.incidence_matrix(g) @ N)
    assert netgraph.has_non_overlapping_loops(g)


def test_overlapping_loops_detected():
    # two triangles sharing edge 1-3
    g = DiGraph(4, ((1, 2), (2, 3), (1, 3), (3, 4), (4, 1)))
    assert not netgraph.has_non_overlapping_loops(g)


def test_path_matrix_examples():
    path = TreeCertificate(DiGraph(3, ((1, 2), (2, 3))))
    assert netgraph.path_matrix(path).tolist() == [[-1, 0], [-1, -1]]
    star = TreeCertificate(DiGraph(3, ((1, 2), (1, 3))))
    assert netgraph.path_matrix(star).tolist() == [[-1, 0], [0, -1]]


def test_path_matrix_inverts_reduced_incidence(rng):
    g = random_tree(rng, 6)
    P = netgraph.path_matrix(TreeCertificate(g))
    Mref = netgraph.reduced_incidence(g)
    np.testing.assert_allclose(P.T, np.linalg.inv(Mref), atol=1e-12)


@pytest.mark.parametrize("ref", [1, 2, 5])
def test_path_matrix_any_reference(ref, rng):
    g = random_tree(rng, 7)
    P = netgraph.path_matrix(TreeCertificate(g, ref))
    Mref = netgraph.reduced_incidence(g, ref)
    assert (P.T.astype(int) @ Mref.astype(int) == np.eye(6, dtype=int)).all()


def test_tree_certificate_rejects_cycle():
    with pytest.raises(netgraph.NotATree):
        TreeCertificate(DiGraph(3, ((1, 2), (2, 3), (3, 1))))


def test_laplacian_examples():
    ring3 = DiGraph(3, ((1, 2), (2, 3), (3, 1)))
    assert netgraph.laplacian(ring3).tolist() == [[1, -1, 0], [0, 1, -1], [-1, 0, 1]]
    assert netgraph.is_weight_balanced(ring3)
    assert netgraph.is_strongly_connected(ring3)
    assert not netgraph.is_strongly_connected(DiGraph(2, ((1, 2),)))
    chord = DiGraph(3, ((1, 2), (2, 3), (3, 1), (1, 3)))
    assert not netgraph.is_weight_balanced(chord)


@pytest.mark.parametrize("n", [2, 3, 5, 12])
def test_standard_topologies_satisfy_hypotheses(n):
    for g in (netgraph.ring(n), netgraph.ring(n, directed=True), netgraph.complete(n),
              netgraph.ring_with_chords(n)):
        assert netgraph.is_strongly_connected(g)
        assert netgraph.is_weight_balanced(g)


def test_digraph_validation():
    with pytest.raises(ValueError):
        DiGraph(2, ((1, 1),))
    with pytest.raises(ValueError):
        DiGraph(2, ((1, 2), (1, 2)))
    with pytest.raises(ValueError):
        DiGraph(2, ((1, 3),))


def test_matrix_rank():
    g = DiGraph(4, ((1, 2), (2, 3), (3, 4), (4, 1)))
    assert netgraph.matrix_rank(netgraph.incidence_matrix(g)) == 3


@st.composite
def digraphs(draw):
    n = draw(st.integers(2, 9))
    seed = draw(st.integers(0, 2**31))
    extra = draw(st.integers(0, 4))
    return random_connected(np.random.default_rng(seed), n, extra)


@given(digraphs())
@settings(max_examples=60, deadline=None)
def test_incidence_identities(g):
    M = netgraph.incidence_matrix(g)
    assert not np.any(np.ones(g.n) @ M)
    N = netgraph.fundamental_loop_matrix(g)
    assert N.shape[1] == g.m - g.n + 1
    assert not np.any(M.astype(int) @ N.astype(int))
    L = netgraph.laplacian(g)
    assert np.allclose(L.sum(axis=1), 0.0)
    assert netgraph.is_weight_balanced(g) == (np.max(np.abs(L.sum(axis=0))) < 1e-12)
