import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regnet.convexsolve import ConvexProgram, SolverConfig, phase_one, solve


def test_trivial_lp():
    s = solve(ConvexProgram([1.0], A_ub=[[-1.0]], b_ub=[-2.0]))
    assert s.status == "optimal"
    assert s.x[0] == pytest.approx(2.0, abs=1e-9)
    assert s.objective_value == pytest.approx(2.0, abs=1e-9)


def test_trivial_qp():
    s = solve(ConvexProgram([0.0], Q=[[2.0]], lo=[1.0], hi=[3.0]))
    assert s.status == "optimal"
    assert s.x[0] == pytest.approx(1.0, abs=1e-7)
    assert s.objective_value == pytest.approx(1.0, abs=1e-7)


def test_lp_matches_grid_enumeration():
    s = solve(ConvexProgram([1.0, 1.0], A_ub=[[-1.0, -1.0]], b_ub=[-1.0], lo=[0, 0]))
    grid = np.arange(0, 1.5 + 1e-9, 0.001)
    X1, X2 = np.meshgrid(grid, grid)
    ok = X1 + X2 >= 1 - 1e-12
    assert s.objective_value == pytest.approx(float(np.min((X1 + X2)[ok])), abs=1e-3)


def test_infeasible_and_unbounded():
    assert solve(ConvexProgram([1.0], A_ub=[[1.0], [-1.0]], b_ub=[0.0, -1.0])).status == "infeasible"
    assert solve(ConvexProgram([-1.0], lo=[0.0])).status == "unbounded"


def test_nonconvex_q_rejected():
    with pytest.raises(ValueError):
        solve(ConvexProgram([0.0, 0.0], Q=[[1.0, 0.0], [0.0, -1.0]]))


def test_phase_one_reports_violation():
    viol, _ = phase_one(ConvexProgram([0.0], A_ub=[[1.0], [-1.0]], b_ub=[0.0, -1.0]))
    assert viol == pytest.approx(0.5, abs=1e-7)


def _random_lp(rng, n, m):
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0, 1, n)
    b = A @ x0 + rng.uniform(0.1, 1.0, m)
    c = rng.uniform(0.1, 1.0, n)
    return A, b, c


@given(st.integers(0, 2**31), st.integers(2, 6), st.integers(1, 8))
@settings(max_examples=40, deadline=None)
def test_lp_strong_duality(seed, n, m):
    rng = np.random.default_rng(seed)
    A, b, c = _random_lp(rng, n, m)
    # min c'x, Ax <= b, x >= 0   vs   max -b'y, A'y >= -c, y >= 0
    primal = solve(ConvexProgram(c, A_ub=A, b_ub=b, lo=np.zeros(n)))
    dual = solve(ConvexProgram(b, A_ub=-A.T, b_ub=c, lo=np.zeros(m)))
    assert primal.optimal and dual.optimal
    assert abs(primal.objective_value + dual.objective_value) <= 1e-6 * (1 + abs(primal.objective_value))


@given(st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_redundant_constraint_and_scaling(seed):
    rng = np.random.default_rng(seed)
    A, b, c = _random_lp(rng, 4, 5)
    base = solve(ConvexProgram(c, A_ub=A, b_ub=b, lo=np.zeros(4)))
    red = solve(ConvexProgram(c, A_ub=np.vstack([A, 2 * A[:1]]), b_ub=np.append(b, 2 * b[0] + 1.0), lo=np.zeros(4)))
    assert abs(red.objective_value - base.objective_value) <= 1e-7 * (1 + abs(base.objective_value))
    lam = float(rng.uniform(0.1, 10.0))
    sc = solve(ConvexProgram(lam * c, A_ub=A, b_ub=b, lo=np.zeros(4)))
    assert sc.objective_value == pytest.approx(lam * base.objective_value, rel=1e-7, abs=1e-9)
    assert np.allclose(sc.x, base.x, atol=1e-7)


def _active_set_oracle(Q, c, G, h):
    """Enumerate active sets of min 1/2 x'Qx + c'x s.t. Gx <= h; return the KKT point."""
    n, m = Q.shape[0], G.shape[0]
    for k in range(0, min(n, m) + 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            K = np.block([[Q, G[S].T], [G[S], np.zeros((k, k))]])
            rhs = np.concatenate([-c, h[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.all(G @ x <= h + 1e-9) and np.all(lam >= -1e-9):
                return x
    raise AssertionError("no KKT point found")


@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_qp_matches_active_set_enumeration(seed, n, m):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    Q = B @ B.T + 0.5 * np.eye(n)
    c = rng.normal(size=n)
    G = rng.normal(size=(m, n))
    h = G @ rng.normal(size=n) + rng.uniform(0.1, 1.0, m)
    s = solve(ConvexProgram(c, Q=Q, A_ub=G, b_ub=h))
    assert s.optimal
    np.testing.assert_allclose(s.x, _active_set_oracle(Q, c, G, h), atol=1e-6)
    assert s.max_kkt_residual <= SolverConfig().kkt_tol


def test_qp_equality_and_bounds():
    # min x1^2 + x2^2 s.t. x1 + x2 = 1, x1 <= 0.2
    s = solve(ConvexProgram([0, 0], Q=2 * np.eye(2), A_eq=[[1, 1]], b_eq=[1], hi=[0.2, np.inf]))
    np.testing.assert_allclose(s.x, [0.2, 0.8], atol=1e-7)


def test_deterministic():
    rng = np.random.default_rng(3)
    A, b, c = _random_lp(rng, 5, 6)
    p = ConvexProgram(c, A_ub=A, b_ub=b, lo=np.zeros(5))
    assert solve(p).x.tobytes() == solve(p).x.tobytes()
