import numpy as np
import pytest

from ris_icsc.qcqp import ConvexQuadraticProgram, QuadConstraint, solve


def psd(rng, n, rank=None):
    rank = n if rank is None else rank
    G = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return G @ G.conj().T


def sensing_instance(rng, K=2, N=2, d=1, margin=0.1):
    """Random program shaped like the precoder step, feasible at a random start."""
    a = [psd(rng, N) for _ in range(K)]
    b = [rng.standard_normal((N, d)) + 1j * rng.standard_normal((N, d)) for _ in range(K)]
    caps = rng.uniform(0.5, 2.0, K)
    start = []
    for P in caps:
        x = rng.standard_normal((N, d)) + 1j * rng.standard_normal((N, d))
        start.append(x * np.sqrt(0.5 * P) / np.linalg.norm(x))
    rows = []
    for k in range(K):
        quad = {i: 0.1 * psd(rng, N, 1) for i in range(K) if i != k}
        lin = {k: rng.standard_normal((N, d)) + 1j * rng.standard_normal((N, d))}
        row = QuadConstraint(quad=quad, lin=lin)
        row.const = -row.value(start) - margin
        rows.append(row)
    return ConvexQuadraticProgram(a=a, b=b, power_caps=caps, constraints=rows), start


def cvxpy_optimum(qp):
    """Optimum via cvxpy on the real composite ``[Re x; Im x]``."""
    cp = pytest.importorskip("cvxpy")
    X = [cp.Variable(2 * B.size) for B in qp.b]

    def quad(x, M):
        d = x.shape[0] // (2 * M.shape[0])
        M = np.kron(np.eye(d), 0.5 * (M + M.conj().T))
        R = np.block([[M.real, -M.imag], [M.imag, M.real]])
        return cp.quad_form(x, cp.psd_wrap(0.5 * (R + R.T)))

    def lin(L, x):
        v = L.reshape(-1, order="F")
        return np.concatenate([v.real, v.imag]) @ x

    obj = sum(quad(x, A) - 2 * lin(B, x) for x, A, B in zip(X, qp.a, qp.b))
    cons = [cp.sum_squares(x) <= P for x, P in zip(X, qp.power_caps)]
    for r in qp.constraints:
        expr = r.const
        for i, Q in r.quad.items():
            expr = expr + quad(X[i], Q)
        for i, L in r.lin.items():
            expr = expr - 2 * lin(L, X[i])
        cons.append(expr <= 0)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def test_unconstrained_recovers_center(rng):
    x0 = [rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))]
    qp = ConvexQuadraticProgram(a=[np.eye(3)], b=[x0[0]])
    X, cert = solve(qp, [np.zeros((3, 2))])
    assert np.allclose(X[0], x0[0], atol=1e-7)
    assert cert.converged


def test_ball_projection(rng):
    b = rng.standard_normal((4, 1)) + 1j * rng.standard_normal((4, 1))
    P = 0.25 * np.linalg.norm(b) ** 2
    qp = ConvexQuadraticProgram(a=[np.eye(4)], b=[b], power_caps=np.array([P]))
    X, cert = solve(qp, [np.zeros((4, 1))])
    assert np.allclose(X[0], b * np.sqrt(P) / np.linalg.norm(b), atol=1e-7)
    # Inside the ball the cap is slack.
    qp = ConvexQuadraticProgram(a=[np.eye(4)], b=[b], power_caps=np.array([4 * np.linalg.norm(b) ** 2]))
    X, _ = solve(qp, [np.zeros((4, 1))])
    assert np.allclose(X[0], b, atol=1e-7)


def test_start_block_count_checked():
    qp = ConvexQuadraticProgram(a=[np.eye(2)], b=[np.ones((2, 1))])
    with pytest.raises(ValueError, match="blocks"):
        solve(qp, [np.zeros((2, 1)), np.zeros((2, 1))])


@pytest.mark.parametrize("seed", range(6))
def test_matches_cvxpy_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    qp, start = sensing_instance(rng)
    X, cert = solve(qp, start)
    ref = cvxpy_optimum(qp)
    got = qp.objective(X)
    assert np.all(qp.violation(X) <= 1e-9 * max(qp.power_caps))
    assert got <= qp.objective(start)
    assert abs(got - ref) <= 1e-4 * max(abs(ref), 1.0)


def test_multi_stream_against_oracle():
    rng = np.random.default_rng(7)
    qp, start = sensing_instance(rng, K=3, N=3, d=2)
    X, cert = solve(qp, start)
    ref = cvxpy_optimum(qp)
    assert abs(qp.objective(X) - ref) <= 1e-4 * max(abs(ref), 1.0)
    assert cert.kkt_residual <= 1e-6


def test_complementary_slackness_and_warm_start():
    rng = np.random.default_rng(3)
    qp, start = sensing_instance(rng)
    X, cert = solve(qp, start)
    assert np.all(cert.multipliers >= 0)
    # Normalized rows: multiplier times row value is tiny at the solution.
    assert cert.kkt_residual <= 1e-7
    X2, cert2 = solve(qp, start, y0=cert.multipliers)
    assert cert2.iterations <= cert.iterations
    assert qp.objective(X2) == pytest.approx(qp.objective(X), rel=1e-9, abs=1e-12)
    # Malformed warm starts fall back to the default.
    X3, _ = solve(qp, start, y0=np.array([np.nan]))
    assert qp.objective(X3) == pytest.approx(qp.objective(X), rel=1e-9, abs=1e-12)


def test_never_worse_than_start():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        qp, start = sensing_instance(rng, margin=1e-9)
        X, _ = solve(qp, start, max_iter=3)
        assert qp.objective(X) <= qp.objective(start) + 1e-12
        assert np.all(qp.violation(X) <= 1e-9)
