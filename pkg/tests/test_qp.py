import numpy as np
import pytest

from esbid.market.qp import solve_qp


def test_bound_active_scalar():
    # min 0.5 x^2 - x  s.t. x <= 0.5: x = 0.5, multiplier 0.5
    s = solve_qp([[1.0]], [-1.0], G=[[1.0]], h=[0.5])
    assert s.optimal
    assert s.x[0] == pytest.approx(0.5, abs=1e-10)
    assert s.z[0] == pytest.approx(0.5, abs=1e-9)
    assert s.objective == pytest.approx(-0.375, abs=1e-10)


def test_equality_multiplier_sign():
    # min 0.5 (x1^2 + x2^2)  s.t. x1 + x2 = 2: x = (1, 1); Qx + A^T y = 0 -> y = -1
    s = solve_qp(np.eye(2), np.zeros(2), A=[[1.0, 1.0]], b=[2.0])
    np.testing.assert_allclose(s.x, [1, 1], atol=1e-10)
    assert s.y[0] == pytest.approx(-1.0, abs=1e-9)


def test_linear_program():
    # min -x1 - 2 x2  s.t. x1 + x2 <= 4, 0 <= x <= 3
    s = solve_qp(np.zeros((2, 2)), [-1.0, -2.0], G=[[1.0, 1.0]], h=[4.0], lb=[0, 0], ub=[3, 3])
    np.testing.assert_allclose(s.x, [1, 3], atol=1e-9)
    assert s.objective == pytest.approx(-7.0, abs=1e-9)


def test_fixed_variables_substituted():
    s = solve_qp(np.eye(3), [0.0, -4.0, 1.0], A=[[1.0, 1.0, 1.0]], b=[3.0], lb=[2.0, -10, -10], ub=[2.0, 10, 10])
    assert s.x[0] == 2.0
    np.testing.assert_allclose(s.x[1:], [3.0, -2.0], atol=1e-9)


@pytest.mark.parametrize(
    "kw",
    [
        dict(G=[[-1.0]], h=[-1.0], ub=[0.0]),  # x >= 1 and x <= 0
        dict(A=[[1.0], [1.0]], b=[0.0, 1.0]),  # contradictory equalities
        dict(lb=[1.0], ub=[0.0]),
        dict(A=[[1.0]], b=[3.0], lb=[2.0], ub=[2.0]),  # fixed variable violates the row
    ],
)
def test_infeasible(kw):
    assert solve_qp([[1.0]], [0.0], **kw).status == "infeasible"


def _random_qp(rng):
    n = int(rng.integers(3, 25))
    me = int(rng.integers(0, n // 2))
    mi = int(rng.integers(0, 2 * n))
    M = rng.normal(size=(n, n))
    Q = M @ M.T * (rng.random() < 0.7) + np.diag(rng.random(n) * (rng.random() < 0.5))
    c = rng.normal(size=n)
    x0 = rng.normal(size=n)
    A = rng.normal(size=(me, n))
    G = rng.normal(size=(mi, n))
    return dict(
        Q=Q, c=c, A=A, b=A @ x0, G=G, h=G @ x0 + rng.random(mi),
        lb=x0 - 3 * rng.random(n), ub=x0 + 3 * rng.random(n),
    )


def _kkt_residual(p, s):
    """Stationarity with the implied bound multipliers, complementarity and feasibility."""
    Q, c, A, b, G, h, lb, ub = (p[k] for k in ("Q", "c", "A", "b", "G", "h", "lb", "ub"))
    x = s.x
    g = Q @ x + c + A.T @ s.y + G.T @ s.z
    scale = 1 + np.abs(Q @ x).max() + np.abs(c).max()
    # remaining gradient must be absorbed by active bounds with the right sign
    at_lb = x <= lb + 1e-7
    at_ub = x >= ub - 1e-7
    stat = np.where(at_lb, np.minimum(g, 0.0), np.where(at_ub, np.maximum(g, 0.0), g))
    comp = np.abs(s.z * (G @ x - h)).max(initial=0.0)
    feas = max(
        np.abs(A @ x - b).max(initial=0.0),
        np.maximum(G @ x - h, 0).max(initial=0.0),
        np.maximum(lb - x, 0).max(),
        np.maximum(x - ub, 0).max(),
    )
    return np.abs(stat).max() / scale, comp, feas, s.z.min(initial=0.0)


def test_kkt_conditions_on_random_problems():
    rng = np.random.default_rng(7)
    for _ in range(60):
        p = _random_qp(rng)
        s = solve_qp(p["Q"], p["c"], p["A"], p["b"], p["G"], p["h"], p["lb"], p["ub"])
        assert s.optimal
        stat, comp, feas, zmin = _kkt_residual(p, s)
        assert stat < 1e-7
        assert comp < 1e-7
        assert feas < 1e-8
        assert zmin > -1e-9


def test_agrees_with_cvxopt():
    cvxopt = pytest.importorskip("cvxopt")
    opts = cvxopt.solvers.options
    opts.update(show_progress=False, abstol=1e-12, reltol=1e-12, feastol=1e-12)
    m = cvxopt.matrix
    rng = np.random.default_rng(0)
    for _ in range(60):
        p = _random_qp(rng)
        n = p["c"].size
        s = solve_qp(p["Q"], p["c"], p["A"], p["b"], p["G"], p["h"], p["lb"], p["ub"])
        GG = np.vstack([p["G"], -np.eye(n), np.eye(n)])
        hh = np.concatenate([p["h"], -p["lb"], p["ub"]])
        eq = p["A"].shape[0] > 0
        ref = cvxopt.solvers.qp(m(p["Q"]), m(p["c"]), m(GG), m(hh), m(p["A"]) if eq else None, m(p["b"]) if eq else None)
        f_ref = ref["primal objective"]
        assert abs(s.objective - f_ref) <= 1e-6 * (1 + abs(f_ref))
