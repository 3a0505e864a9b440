"""Dense primal-dual interior-point solver for small convex QPs.

Solves

    minimize    0.5 x^T Q x + c^T x
    subject to  A x = b          (multipliers y)
                G x <= h         (multipliers z >= 0)
                lb <= x <= ub

with Mehrotra's predictor-corrector method. Variables with
``ub - lb`` below ``fix_tol`` are substituted out before iterating, and
finite bounds are folded into ``G``. Returned multipliers follow the
Lagrangian ``f(x) + y^T (A x - b) + z^T (G x - h)``, so the sensitivity
of the optimal value to ``b`` is ``-y``.

When the iteration fails to converge, primal feasibility is settled
with an LP feasibility problem (HiGHS via scipy) so that infeasible
problems are reported as such rather than as numerical failures.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

log = logging.getLogger(__name__)


ACCEPTABLE_TOL = 1e-8


class QPError(ArithmeticError):
    """The interior-point iteration failed on a feasible problem."""


@dataclass
class QPSolution:
    status: str  # "optimal" or "infeasible"
    x: np.ndarray | None = None
    y: np.ndarray | None = None  # equality multipliers
    z: np.ndarray | None = None  # multipliers of the G rows
    objective: float = np.nan
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _lp_feasible(A, b, G, h, lb, ub) -> bool:
    n = lb.size
    res = linprog(
        np.zeros(n),
        A_ub=G if G.shape[0] else None,
        b_ub=h if G.shape[0] else None,
        A_eq=A if A.shape[0] else None,
        b_eq=b if A.shape[0] else None,
        bounds=list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None))),
        method="highs",
    )
    return res.status == 0


def solve_qp(
    Q,
    c,
    A=None,
    b=None,
    G=None,
    h=None,
    lb=None,
    ub=None,
    *,
    tol: float = 1e-10,
    max_iter: int = 100,
    fix_tol: float = 1e-12,
    polish: bool = True,
) -> QPSolution:
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.size
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
    G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float).reshape(-1, n)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).reshape(-1)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)

    if np.any(lb > ub + fix_tol):
        return QPSolution("infeasible")

    # substitute fixed variables
    fixed = (ub - lb) <= fix_tol
    free = ~fixed
    xf = np.zeros(n)
    xf[fixed] = 0.5 * (lb[fixed] + ub[fixed])
    Qr = Q[np.ix_(free, free)]
    cr = c[free] + Q[np.ix_(free, fixed)] @ xf[fixed]
    const = 0.5 * xf[fixed] @ Q[np.ix_(fixed, fixed)] @ xf[fixed] + c[fixed] @ xf[fixed]
    Ar = A[:, free]
    br = b - A[:, fixed] @ xf[fixed]
    Gr = G[:, free]
    hr = h - G[:, fixed] @ xf[fixed]

    # rows left without free variables must already hold
    scale_b = 1.0 + np.abs(b)
    eq_keep = np.any(Ar != 0, axis=1)
    if np.any(np.abs(br[~eq_keep]) > 1e-9 * scale_b[~eq_keep]):
        return QPSolution("infeasible")
    in_keep = np.any(Gr != 0, axis=1)
    if np.any(hr[~in_keep] < -1e-9 * (1.0 + np.abs(h[~in_keep]))):
        return QPSolution("infeasible")

    lbr, ubr = lb[free], ub[free]
    nf = int(free.sum())
    eye = np.eye(nf)
    has_lb = np.isfinite(lbr)
    has_ub = np.isfinite(ubr)
    G_all = np.vstack([Gr[in_keep], -eye[has_lb], eye[has_ub]])
    h_all = np.concatenate([hr[in_keep], -lbr[has_lb], ubr[has_ub]])
    A_k, b_k = Ar[eq_keep], br[eq_keep]

    # iterates can blow up on infeasible problems; the status check below handles it
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        sol = _ipm(Qr, cr, A_k, b_k, G_all, h_all, tol=tol, max_iter=max_iter)
    if sol is None:
        if not _lp_feasible(A_k, b_k, Gr[in_keep], hr[in_keep], lbr, ubr):
            return QPSolution("infeasible")
        raise QPError("interior-point iteration did not converge on a feasible QP")
    xr, y_k, z_all, iters = sol
    if polish:
        xr, y_k, z_all = _polish(Qr, cr, A_k, b_k, G_all, h_all, xr, y_k, z_all)

    x = xf.copy()
    x[free] = xr
    y = np.zeros(A.shape[0])
    y[eq_keep] = y_k
    z = np.zeros(G.shape[0])
    z[in_keep] = z_all[: int(in_keep.sum())]
    objective = float(0.5 * x @ Q @ x + c @ x)
    return QPSolution("optimal", x=x, y=y, z=z, objective=objective, iterations=iters)


def _polish(Q, c, A, b, G, h, x, y, z):
    """Re-solve the KKT system on the identified active set.

    Returns the polished iterate when it is primal feasible, dual feasible
    and no worse than the interior-point one; otherwise the input.
    """
    n, me = c.size, b.size
    slack = h - G @ x
    active = np.flatnonzero(slack < z)
    Ga, ha = G[active], h[active]
    ma = active.size
    K = np.block(
        [
            [Q, A.T, Ga.T],
            [A, np.zeros((me, me)), np.zeros((me, ma))],
            [Ga, np.zeros((ma, me)), np.zeros((ma, ma))],
        ]
    )
    rhs = np.concatenate([-c, b, ha])
    try:
        sol = np.linalg.lstsq(K, rhs, rcond=1e-13)[0]
    except np.linalg.LinAlgError:
        return x, y, z
    xp, yp, za = sol[:n], sol[n : n + me], sol[n + me :]
    if not np.all(np.isfinite(sol)):
        return x, y, z
    scale = 1.0 + np.max(np.abs(x), initial=0.0)
    zscale = 1.0 + np.max(np.abs(z), initial=0.0) + np.max(np.abs(y), initial=0.0)
    if np.any(G @ xp > h + 1e-9 * (1.0 + np.abs(h))):
        return x, y, z
    if me and np.max(np.abs(A @ xp - b)) > 1e-9 * (1.0 + np.max(np.abs(b))):
        return x, y, z
    if np.any(za < -1e-9 * zscale):
        return x, y, z
    r_d = Q @ xp + c + A.T @ yp + Ga.T @ za
    if np.max(np.abs(r_d), initial=0.0) > 1e-9 * zscale:
        return x, y, z
    f_old = 0.5 * x @ Q @ x + c @ x
    f_new = 0.5 * xp @ Q @ xp + c @ xp
    if f_new > f_old + 1e-9 * (1.0 + abs(f_old)) or np.max(np.abs(xp - x)) > 1e-2 * scale:
        return x, y, z
    zp = np.zeros_like(z)
    zp[active] = np.maximum(za, 0.0)
    return xp, yp, zp


def _initial_point(Q, c, A, b, G, h, reg):
    """Least-squares start shifted into the positive orthant."""
    n, me, mi = c.size, b.size, h.size
    K = np.block([[Q + G.T @ G + reg * np.eye(n), A.T], [A, -reg * np.eye(me)]])
    try:
        sol = linalg.solve(K, np.concatenate([-c + G.T @ h, b]), check_finite=False)
        x, y = sol[:n], sol[n:]
    except (linalg.LinAlgError, ValueError):
        x, y = np.zeros(n), np.zeros(me)
    if not np.all(np.isfinite(x)):
        x, y = np.zeros(n), np.zeros(me)
    if mi == 0:
        return x, y, np.zeros(0), np.zeros(0)
    s = h - G @ x
    z = -s.copy()
    shift = max(0.0, -np.min(s)) + 1.0
    s = s + shift
    z = z + max(0.0, -np.min(z)) + 1.0
    # balance complementarity
    dp = 0.5 * (s @ z) / np.sum(z)
    dd = 0.5 * (s @ z) / np.sum(s)
    return x, y, s + dp, z + dd


def _ipm(Q, c, A, b, G, h, *, tol, max_iter):
    n, me, mi = c.size, b.size, h.size
    if n == 0:
        return np.zeros(0), np.zeros(me), np.zeros(mi), 0

    reg = 1e-13 * (1.0 + max(np.max(np.abs(c), initial=0.0), np.max(np.abs(Q), initial=0.0)))
    x, y, s, z = _initial_point(Q, c, A, b, G, h, reg)
    sc_p = 1.0 + np.max(np.abs(b), initial=0.0)
    sc_i = 1.0 + np.max(np.abs(h), initial=0.0)
    best, best_err, stall = None, np.inf, 0

    for it in range(1, max_iter + 1):
        Qx, Aty, Gtz = Q @ x, A.T @ y, G.T @ z
        r_d = Qx + c + Aty + Gtz
        r_p = A @ x - b
        r_i = G @ x + s - h
        gap = s @ z
        mu = gap / mi if mi else 0.0
        obj = 0.5 * x @ Qx + c @ x
        sc_d = 1.0 + max(np.max(np.abs(v), initial=0.0) for v in (Qx, c, Aty, Gtz))
        err = max(
            np.max(np.abs(r_d), initial=0.0) / sc_d,
            np.max(np.abs(r_p), initial=0.0) / sc_p,
            np.max(np.abs(r_i), initial=0.0) / sc_i,
            10.0 * gap / (1.0 + abs(obj)),
        )
        if err <= tol:
            return x, y, z, it
        if err < 0.5 * best_err:
            best, best_err, stall = (x, y, z, it), err, 0
        else:
            stall += 1
        if (stall >= 5 and best_err < 1e-6) or not np.all(np.isfinite(x)):
            break

        w = z / s
        H = Q + (G.T * w) @ G + reg * np.eye(n)
        K = np.block([[H, A.T], [A, -reg * np.eye(me)]])
        try:
            lu = linalg.lu_factor(K, check_finite=False)
        except (linalg.LinAlgError, ValueError):
            break

        def direction(r_c):
            rhs_x = -r_d - G.T @ ((-r_c + z * r_i) / s)
            sol = linalg.lu_solve(lu, np.concatenate([rhs_x, -r_p]), check_finite=False)
            dx, dy = sol[:n], sol[n:]
            ds = -r_i - G @ dx
            dz = (-r_c - z * ds) / s
            return dx, dy, ds, dz

        def max_step(v, dv):
            neg = dv < 0
            return min(1.0, np.min(-v[neg] / dv[neg], initial=np.inf))

        # predictor
        dx, dy, ds, dz = direction(s * z)
        a_aff = min(max_step(s, ds), max_step(z, dz))
        if mi:
            mu_aff = (s + a_aff * ds) @ (z + a_aff * dz) / mi
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        else:
            sigma = 0.0
        # corrector
        dx, dy, ds, dz = direction(s * z + ds * dz - sigma * mu)
        step = min(1.0, 0.995 * min(max_step(s, ds), max_step(z, dz)))
        if not np.all(np.isfinite(dx)):
            break
        x = x + step * dx
        y = y + step * dy
        s = s + step * ds
        z = z + step * dz
        if mi:
            # keep strictly interior
            s = np.maximum(s, 1e-300)
            z = np.maximum(z, 1e-300)
    if best is not None and best_err <= ACCEPTABLE_TOL:
        log.debug("interior point stalled at error %.3g; accepting", best_err)
        return best
    return None
