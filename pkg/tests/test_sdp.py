import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfisac import sdp
from cfisac.hermitian import hermitian, is_psd
from cfisac.sdp import SdpConstraint, SdpProblem

cp = pytest.importorskip("cvxpy")


def rand_herm(rng, n, complex_=True):
    a = rng.standard_normal((n, n)) + (1j * rng.standard_normal((n, n)) if complex_ else 0)
    return hermitian(a) if complex_ else 0.5 * (a + a.T)


def lam_max_problem(A):
    n = A.shape[0]
    return SdpProblem((n,), (A,), (SdpConstraint((np.eye(n),), "==", 1.0),))


@pytest.mark.parametrize("complex_", [False, True])
def test_largest_eigenvalue(complex_):
    rng = np.random.default_rng(0)
    A = rand_herm(rng, 5, complex_)
    sol = sdp.solve(lam_max_problem(A), tol=1e-10)
    assert sol.status == sdp.OPTIMAL
    assert sol.objective_value == pytest.approx(np.linalg.eigvalsh(A).max(), abs=1e-8)
    assert sol.gap <= 1e-10
    assert sdp.verify_certificate(lam_max_problem(A), sol).passed


def random_feasible_problem(rng, dims, m, complex_=True):
    """Random block SDP with a known strictly feasible point and a trace cap."""
    X0 = []
    for n in dims:
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        X0.append(hermitian(a @ a.conj().T / n + np.eye(n)) if complex_ else (a.real @ a.real.T / n + np.eye(n)))
    C = tuple(rand_herm(rng, n, complex_) for n in dims)
    cons = []
    for i in range(m):
        coeffs = tuple(rand_herm(rng, n, complex_) if rng.uniform() < 0.8 else None for n in dims)
        val = sum(np.real(np.trace(a @ x)) for a, x in zip(coeffs, X0) if a is not None)
        sense = ("<=", ">=", "==")[i % 3]
        rhs = val + (rng.uniform(0.1, 1.0) if sense == "<=" else -rng.uniform(0.1, 1.0) if sense == ">=" else 0.0)
        cons.append(SdpConstraint(coeffs, sense, rhs))
    cap = sum(np.real(np.trace(x)) for x in X0) * 2
    cons.append(SdpConstraint(tuple(np.eye(n) for n in dims), "<=", cap))
    return SdpProblem(tuple(dims), C, tuple(cons))


def cvxpy_value(problem):
    Xs = [cp.Variable((n, n), hermitian=True) for n in problem.block_dims]
    expr = lambda coeffs: sum(cp.real(cp.trace(a @ x)) for a, x in zip(coeffs, Xs) if a is not None)
    cons = [x >> 0 for x in Xs]
    for c in problem.constraints:
        lhs = expr(c.coeffs)
        cons.append({"<=": lhs <= c.rhs, ">=": lhs >= c.rhs, "==": lhs == c.rhs}[c.sense])
    prob = cp.Problem(cp.Maximize(expr(problem.objective)), cons)
    prob.solve(solver="CLARABEL")
    return prob.value


@settings(max_examples=15)
@given(st.integers(0, 2 ** 31), st.lists(st.integers(1, 4), min_size=1, max_size=3), st.integers(1, 4),
       st.booleans())
def test_matches_independent_solver(seed, dims, m, complex_):
    rng = np.random.default_rng(seed)
    prob = random_feasible_problem(rng, dims, m, complex_)
    sol = sdp.solve(prob, tol=1e-9)
    assert sol.status == sdp.OPTIMAL
    ref = cvxpy_value(prob)
    assert sol.objective_value == pytest.approx(ref, rel=1e-5, abs=1e-5)
    assert all(is_psd(x, 1e-7) for x in sol.X)
    assert sdp.verify_certificate(prob, sol, tol=1e-6).passed


def test_embedding_choice_does_not_change_real_problems():
    rng = np.random.default_rng(4)
    prob = random_feasible_problem(rng, (3, 2), 3, complex_=False)
    a = sdp.solve(prob, tol=1e-9, use_embedding=False)
    b = sdp.solve(prob, tol=1e-9, use_embedding=True)
    assert a.objective_value == pytest.approx(b.objective_value, rel=1e-7, abs=1e-8)


def test_infeasible_gives_farkas_ray():
    I = np.eye(2)
    prob = SdpProblem((2,), (I,), (SdpConstraint((I,), "<=", 1.0), SdpConstraint((I,), ">=", 2.0)))
    sol = sdp.solve(prob)
    assert sol.status == sdp.INFEASIBLE
    cert = sol.certificate
    assert cert["kind"] == "dual-ray"
    y = np.asarray(cert["y"])
    s = np.array([1.0, -1.0])                  # <= rows count positive, >= rows negative
    assert np.all(y >= -1e-9)
    assert np.dot(y * s, [1.0, 2.0]) == pytest.approx(-1.0, rel=1e-6)
    M = sum(yi * si * I for yi, si in zip(y, s))
    assert np.linalg.eigvalsh(M).min() >= -1e-7


def test_unbounded_gives_primal_ray():
    E11 = np.diag([1.0, 0.0])
    prob = SdpProblem((2,), (np.eye(2),), (SdpConstraint((E11,), ">=", 1.0),))
    sol = sdp.solve(prob)
    assert sol.status == sdp.UNBOUNDED
    R = sol.certificate["X"][0]
    assert is_psd(R, 1e-7)
    assert np.real(np.trace(R)) > 0


def test_certificate_detects_tampering():
    rng = np.random.default_rng(5)
    prob = random_feasible_problem(rng, (3,), 2)
    sol = sdp.solve(prob, tol=1e-9)
    assert sdp.verify_certificate(prob, sol).passed
    sol.X = [1.05 * x for x in sol.X]
    assert not sdp.verify_certificate(prob, sol).passed


def test_problem_validation():
    I = np.eye(2)
    with pytest.raises(ValueError, match="sense"):
        SdpConstraint((I,), "<", 1.0)
    with pytest.raises(ValueError, match="shape"):
        SdpProblem((3,), (I,), (SdpConstraint((np.eye(3),), "==", 1.0),))
    with pytest.raises(ValueError, match="at least one"):
        SdpProblem((2,), (I,), ())
    with pytest.raises(ValueError, match="one coefficient per block"):
        SdpProblem((2, 2), (I, I), (SdpConstraint((I,), "==", 1.0),))
    with pytest.raises(ValueError, match="tol"):
        sdp.solve(lam_max_problem(I), tol=0.5)


def test_dump_and_load_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    prob = random_feasible_problem(rng, (2, 3), 3)
    path = tmp_path / "p.txt"
    sdp.dump_problem(prob, path)
    assert "np.float64" not in path.read_text()
    back = sdp.load_problem(path)
    assert back.block_dims == prob.block_dims
    for a, b in zip(back.objective, prob.objective):
        np.testing.assert_array_equal(a, b)
    for c1, c2 in zip(back.constraints, prob.constraints):
        assert (c1.sense, c1.rhs) == (c2.sense, c2.rhs)
        for a, b in zip(c1.coeffs, c2.coeffs):
            assert (a is None) == (b is None)
            if a is not None:
                np.testing.assert_array_equal(a, b)


@settings(max_examples=20)
@given(st.integers(0, 2 ** 31), st.lists(st.integers(2, 5), min_size=1, max_size=3), st.integers(1, 4))
def test_reduce_rank_keeps_constraint_values(seed, dims, m):
    rng = np.random.default_rng(seed)
    cons = tuple(SdpConstraint(tuple(rand_herm(rng, n) for n in dims), "==", 0.0) for _ in range(m))
    prob = SdpProblem(tuple(dims), tuple(np.zeros((n, n)) for n in dims), cons)
    X = []
    for n in dims:
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        X.append(a @ a.conj().T)
    red = sdp.reduce_rank(prob, X)
    for c in cons:
        before = sum(np.real(np.trace(a @ x)) for a, x in zip(c.coeffs, X))
        after = sum(np.real(np.trace(a @ x)) for a, x in zip(c.coeffs, red.X))
        assert after == pytest.approx(before, rel=1e-8, abs=1e-8 * sum(np.trace(x).real for x in X))
    assert all(is_psd(x, 1e-8) for x in red.X)
    assert sum(r * r for r in red.ranks_after) <= m


def test_reduce_rank_reaches_rank_one_with_one_constraint():
    prob = SdpProblem((4,), (np.zeros((4, 4)),), (SdpConstraint((np.eye(4),), "==", 1.0),))
    X = np.eye(4) / 4
    red = sdp.reduce_rank(prob, [X])
    assert red.ranks_after == [1]
    assert np.trace(red.X[0]).real == pytest.approx(1.0)


def test_empty_rows_are_settled_before_the_solve():
    I = np.eye(2)
    ok = SdpProblem((2,), (-I,), (SdpConstraint((None,), "==", 0.0), SdpConstraint((I,), "<=", 1.0)))
    sol = sdp.solve(ok)
    assert sol.status == sdp.OPTIMAL
    assert sol.dual_values.shape == (2,) and sol.dual_values[0] == 0.0
    assert sdp.verify_certificate(ok, sol).passed
    bad = SdpProblem((2,), (I,), (SdpConstraint((np.zeros((2, 2)),), ">=", 3.0),))
    sol = sdp.solve(bad)
    assert sol.status == sdp.INFEASIBLE
    assert sol.certificate["y"][0] * -1 * 3.0 == pytest.approx(-1.0)
    free = SdpProblem((2,), (I,), (SdpConstraint((None,), "<=", 1.0),))
    assert sdp.solve(free).status == sdp.UNBOUNDED
    assert sdp.solve(SdpProblem((2,), (-I,), (SdpConstraint((None,), "<=", 1.0),))).status == sdp.OPTIMAL
