"""Storage-aware DC market clearing solved exactly by branch-and-bound.

The operator minimizes quadratic generation cost subject to nodal power
balance, DC line limits, generator ramping, and the storage limits
implied by the bid ``(e_m, p_m)``. The binary charge/discharge
indicators make the problem a mixed-integer QP; it is solved by
best-first branch-and-bound over the indicators with convex QP
relaxations. Locational marginal prices are the multipliers of the
nodal balance rows in the QP with the optimal indicators fixed.

The state of charge is tracked for periods ``1..T+1`` and the terminal
state is bounded like the others, so energy discharged in the last
period must have been stored earlier. The initial state is the
storage's ``y_init``, capped at the bid energy ``e_m``.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from ..errors import InfeasibleError, UsageError
from .model import Bid, MarketInstance, screen_capacity
from .qp import QPSolution, solve_qp

log = logging.getLogger(__name__)

INT_TOL = 1e-6
PRUNE_TOL = 1e-9
BALANCE_TOL = 1e-6
ACTIVE_TOL = 1e-8
INACTIVE_TOL = 1e-4


class Mode(IntEnum):
    """Per-period storage indicator assignment.

    ``FREE`` relaxes both indicators to ``[0, 1]`` with ``zc + zd <= 1``.
    """

    FREE = -1
    IDLE = 0  # zc = zd = 0
    CHARGE = 1  # zc = 1, zd = 0
    DISCHARGE = 2  # zc = 0, zd = 1


@dataclass
class ClearingResult:
    p: np.ndarray  # (I, T) MW
    pc: np.ndarray  # (T,) MW
    pd: np.ndarray  # (T,) MW
    zc: np.ndarray  # (T,) {0, 1}
    zd: np.ndarray  # (T,) {0, 1}
    y: np.ndarray  # (T+1,) MWh, y[0] is the initial state
    theta: np.ndarray  # (I, T) rad
    lmp: np.ndarray  # (I, T) $/MWh
    total_cost: float
    node_count: int = 0
    bid: Bid | None = None
    ramp_duals: np.ndarray | None = field(default=None, repr=False)
    line_duals: np.ndarray | None = field(default=None, repr=False)
    activity: tuple[int, ...] = field(default=(), repr=False)

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(int(Mode.CHARGE if c else Mode.DISCHARGE if d else Mode.IDLE)
                     for c, d in zip(self.zc, self.zd))

    def flows(self, instance: MarketInstance) -> np.ndarray:
        lines = instance.network.lines
        if not lines:
            return np.zeros((0, self.theta.shape[1]))
        return np.array([ln.b * (self.theta[ln.from_bus] - self.theta[ln.to_bus]) for ln in lines])


class _Layout:
    """Column and row bookkeeping for one (instance, bid) QP family."""

    def __init__(self, instance: MarketInstance, bid: Bid):
        I, T = instance.bus_count, instance.horizon
        self.I, self.T = I, T
        k = 0

        def block(size):
            nonlocal k
            idx = np.arange(k, k + size)
            k += size
            return idx

        self.p = block(I * T).reshape(I, T)
        self.pc = block(T)
        self.pd = block(T)
        self.y = block(T + 1)
        self.theta = block(I * T).reshape(I, T)
        self.zc = block(T)
        self.zd = block(T)
        n = self.n = k

        st = instance.storage
        e_m, p_m = float(bid.e_m), float(bid.p_m)
        self.p_m = p_m

        Q = np.zeros((n, n))
        c = np.zeros(n)
        lb = np.zeros(n)
        ub = np.zeros(n)
        for i in range(I):
            g = instance.generator_at(i)
            Q[self.p[i], self.p[i]] = 2.0 * g.c
            c[self.p[i]] = g.o
            ub[self.p[i]] = g.P
        ub[self.pc] = p_m
        ub[self.pd] = p_m
        ub[self.y] = e_m
        y0 = min(st.y_init, e_m)
        lb[self.y[0]] = ub[self.y[0]] = y0
        lb[self.theta] = -np.inf
        ub[self.theta] = np.inf
        ref = instance.network.reference_bus
        lb[self.theta[ref]] = ub[self.theta[ref]] = 0.0
        ub[self.zc] = 1.0
        ub[self.zd] = 1.0

        # equalities: nodal balance (I*T rows) then SoC dynamics (T rows)
        A = np.zeros((I * T + T, n))
        b = np.zeros(I * T + T)
        self.balance_rows = np.arange(I * T).reshape(I, T)
        for i in range(I):
            for t in range(T):
                r = self.balance_rows[i, t]
                A[r, self.p[i, t]] = 1.0
                b[r] = instance.loads[i, t]
        for t in range(T):
            A[self.balance_rows[st.bus, t], self.pc[t]] = -1.0
            A[self.balance_rows[st.bus, t], self.pd[t]] = 1.0
        for ln in instance.network.lines:
            f, to = ln.from_bus, ln.to_bus
            for t in range(T):
                A[self.balance_rows[f, t], self.theta[f, t]] -= ln.b
                A[self.balance_rows[f, t], self.theta[to, t]] += ln.b
                A[self.balance_rows[to, t], self.theta[to, t]] -= ln.b
                A[self.balance_rows[to, t], self.theta[f, t]] += ln.b
        for t in range(T):
            r = I * T + t
            A[r, self.y[t + 1]] = 1.0
            A[r, self.y[t]] = -1.0
            A[r, self.pc[t]] = -st.eta_c
            A[r, self.pd[t]] = 1.0 / st.eta_d

        # inequalities: ramps, line limits, indicator links
        G_rows, h_vals = [], []
        self.ramp_rows = []
        for i in range(I):
            g = instance.generator_at(i)
            if not np.isfinite(g.K) or g.P == 0:
                continue
            for t in range(T - 1):
                for sign in (1.0, -1.0):
                    row = np.zeros(n)
                    row[self.p[i, t + 1]] = sign
                    row[self.p[i, t]] = -sign
                    self.ramp_rows.append((i, t, sign, len(G_rows)))
                    G_rows.append(row)
                    h_vals.append(g.K)
        self.line_rows = []
        for j, ln in enumerate(instance.network.lines):
            if not np.isfinite(ln.F):
                continue
            for t in range(T):
                for sign in (1.0, -1.0):
                    row = np.zeros(n)
                    row[self.theta[ln.from_bus, t]] = sign * ln.b
                    row[self.theta[ln.to_bus, t]] = -sign * ln.b
                    self.line_rows.append((j, t, sign, len(G_rows)))
                    G_rows.append(row)
                    h_vals.append(ln.F)
        for t in range(T):
            for pcol, zcol in ((self.pc[t], self.zc[t]), (self.pd[t], self.zd[t])):
                row = np.zeros(n)
                row[pcol] = 1.0
                row[zcol] = -p_m
                G_rows.append(row)
                h_vals.append(0.0)
            row = np.zeros(n)
            row[self.zc[t]] = row[self.zd[t]] = 1.0
            G_rows.append(row)
            h_vals.append(1.0)

        self.Q, self.c, self.A, self.b = Q, c, A, b
        self.G = np.array(G_rows).reshape(-1, n)
        self.h = np.array(h_vals, dtype=float)
        self.lb, self.ub = lb, ub

    def bounds_for(self, modes) -> tuple[np.ndarray, np.ndarray]:
        lb, ub = self.lb.copy(), self.ub.copy()
        for t, m in enumerate(modes):
            if m == Mode.FREE:
                continue
            zc = 1.0 if m == Mode.CHARGE else 0.0
            zd = 1.0 if m == Mode.DISCHARGE else 0.0
            lb[self.zc[t]] = ub[self.zc[t]] = zc
            lb[self.zd[t]] = ub[self.zd[t]] = zd
            if zc == 0.0:
                ub[self.pc[t]] = 0.0
            if zd == 0.0:
                ub[self.pd[t]] = 0.0
        return lb, ub

    def solve(self, modes) -> QPSolution:
        lb, ub = self.bounds_for(modes)
        return solve_qp(self.Q, self.c, self.A, self.b, self.G, self.h, lb, ub)


def _check_modes(modes, T):
    modes = tuple(Mode(int(m)) for m in modes)
    if len(modes) != T:
        raise UsageError(f"need one indicator mode per period ({T}), got {len(modes)}")
    return modes


def _check_bid(instance: MarketInstance, bid: Bid):
    st = instance.storage
    tol = 1e-9
    if not (-tol <= bid.e_m <= st.E_max + tol and -tol <= bid.p_m <= st.P_max + tol):
        raise UsageError(
            f"bid (e_m={bid.e_m}, p_m={bid.p_m}) outside [0, {st.E_max}] x [0, {st.P_max}]"
        )
    return Bid(min(max(bid.e_m, 0.0), st.E_max), min(max(bid.p_m, 0.0), st.P_max))


def solve_qp_fixed_binaries(instance: MarketInstance, bid: Bid, modes) -> QPSolution:
    """Solve the clearing QP with indicators fixed or relaxed per period.

    ``modes`` holds one :class:`Mode` per period. The returned solution's
    ``y`` field starts with the nodal balance multipliers laid out
    bus-major (``I * T`` entries); :func:`lmps_from` converts them to
    prices. Infeasible subproblems come back with ``status == "infeasible"``.
    """
    bid = _check_bid(instance, bid)
    layout = _Layout(instance, bid)
    return layout.solve(_check_modes(modes, instance.horizon))


def lmps_from(sol: QPSolution, instance: MarketInstance) -> np.ndarray:
    I, T = instance.bus_count, instance.horizon
    return -sol.y[: I * T].reshape(I, T)


def _fractional(layout: _Layout, x: np.ndarray, modes) -> list[tuple[float, int, int]]:
    """Branching candidates as (distance from 0.5, period, 0=charge/1=discharge)."""
    if layout.p_m <= 0:
        return []
    out = []
    for t, m in enumerate(modes):
        if m != Mode.FREE:
            continue
        zc = x[layout.pc[t]] / layout.p_m
        zd = x[layout.pd[t]] / layout.p_m
        if min(zc, zd) > INT_TOL:
            out.append((abs(zc - 0.5), t, 0))
            out.append((abs(zd - 0.5), t, 1))
    return out


def _integral_modes(layout: _Layout, x: np.ndarray) -> tuple[Mode, ...]:
    tol = INT_TOL * max(layout.p_m, 1.0)
    modes = []
    for t in range(layout.T):
        if x[layout.pc[t]] > tol:
            modes.append(Mode.CHARGE)
        elif x[layout.pd[t]] > tol:
            modes.append(Mode.DISCHARGE)
        else:
            modes.append(Mode.IDLE)
    return tuple(modes)


def _branch_and_bound(layout: _Layout) -> tuple[tuple[Mode, ...] | None, float, int]:
    T = layout.T
    incumbent, best = None, np.inf
    nodes = 0
    heap: list = []
    seq = 0

    def visit(modes):
        nonlocal incumbent, best, nodes, seq
        sol = layout.solve(modes)
        nodes += 1
        if not sol.optimal or sol.objective >= best - PRUNE_TOL:
            return
        cands = _fractional(layout, sol.x, modes)
        if not cands:
            incumbent, best = _integral_modes(layout, sol.x), sol.objective
            return
        heapq.heappush(heap, (sol.objective, seq, modes, min(cands)))
        seq += 1

    visit((Mode.FREE,) * T)
    while heap:
        bound, _, modes, (_, t, _) = heapq.heappop(heap)
        if bound >= best - PRUNE_TOL:
            continue
        for child in (Mode.CHARGE, Mode.DISCHARGE):
            visit(modes[:t] + (child,) + modes[t + 1 :])
    return incumbent, best, nodes


def clear_market(instance: MarketInstance, bid: Bid, *, check: bool = True) -> ClearingResult:
    """Clear the market for one storage bid.

    Raises:
        InfeasibleError: when no dispatch serves the load; names the first
            period failing the capacity screen when there is one.
    """
    bid = _check_bid(instance, bid)
    layout = _Layout(instance, bid)
    T = instance.horizon
    if bid.e_m <= 1e-12 or bid.p_m <= 1e-12:
        # no usable storage: every integral assignment forces zero storage power
        modes, nodes = (Mode.IDLE,) * T, 0
    else:
        modes, _, nodes = _branch_and_bound(layout)
    if modes is None:
        raise InfeasibleError(_infeasible_message(instance))
    final = layout.solve(modes)
    nodes += 1
    if not final.optimal:
        raise InfeasibleError(_infeasible_message(instance))
    result = _result_from(layout, final, modes, instance, bid, nodes)
    if check:
        problems = check_result(result, instance, bid)
        if problems:
            raise ArithmeticError("clearing result violates invariants: " + "; ".join(problems))
    return result


def _infeasible_message(instance: MarketInstance) -> str:
    screen = screen_capacity(instance)
    if screen:
        return f"market clearing infeasible: {screen[0]}"
    return "market clearing infeasible (ramp or line limits cannot serve the load)"


def _result_from(layout, sol, modes, instance, bid, nodes) -> ClearingResult:
    x = sol.x
    zc = np.array([1 if m == Mode.CHARGE else 0 for m in modes], dtype=int)
    zd = np.array([1 if m == Mode.DISCHARGE else 0 for m in modes], dtype=int)
    pc = np.clip(x[layout.pc], 0.0, bid.p_m) * zc
    pd = np.clip(x[layout.pd], 0.0, bid.p_m) * zd
    ramp = np.zeros((instance.bus_count, max(instance.horizon - 1, 0)))
    for i, t, sign, r in layout.ramp_rows:
        ramp[i, t] += sign * sol.z[r]
    lines = np.zeros((len(instance.network.lines), instance.horizon))
    for j, t, sign, r in layout.line_rows:
        lines[j, t] += sign * sol.z[r]
    lb, ub = layout.bounds_for(modes)
    slack = np.concatenate([layout.h - layout.G @ x, x - lb, ub - x])
    scale = 1.0 + np.concatenate([np.abs(layout.h), np.abs(lb), np.abs(ub)])
    scale[~np.isfinite(scale)] = 1.0
    rel = slack / scale
    fixed = np.concatenate([np.zeros(layout.h.size, bool), ub - lb <= 1e-12, ub - lb <= 1e-12])
    # 0 = inactive, 1 = active, 2 = too close to call
    activity = np.where(rel <= ACTIVE_TOL, 1, np.where(rel >= INACTIVE_TOL, 0, 2))
    activity[fixed] = 1
    return ClearingResult(
        p=x[layout.p].copy(),
        pc=pc,
        pd=pd,
        zc=zc,
        zd=zd,
        y=np.clip(x[layout.y], 0.0, bid.e_m),
        theta=x[layout.theta].copy(),
        lmp=lmps_from(sol, instance),
        total_cost=sol.objective,
        node_count=nodes,
        bid=bid,
        ramp_duals=ramp,
        line_duals=lines,
        activity=tuple(int(a) for a in activity),
    )


def check_result(result: ClearingResult, instance: MarketInstance, bid: Bid, tol: float = BALANCE_TOL) -> list[str]:
    """List violated clearing invariants (empty when all hold)."""
    out = []
    st = instance.storage
    T = instance.horizon
    pc, pd, y = result.pc, result.pd, result.y
    if np.any(pc * pd > tol):
        out.append("simultaneous charge and discharge")
    if np.any(pc < -tol) or np.any(pc > result.zc * bid.p_m + tol):
        out.append("charging power outside [0, zc * p_m]")
    if np.any(pd < -tol) or np.any(pd > result.zd * bid.p_m + tol):
        out.append("discharging power outside [0, zd * p_m]")
    if np.any(y < -tol) or np.any(y > bid.e_m + tol):
        out.append("state of charge outside [0, e_m]")
    soc = y[:-1] + st.eta_c * pc - pd / st.eta_d
    if np.any(np.abs(y[1:] - soc) > tol * (1 + np.abs(y[1:]))):
        out.append("state of charge dynamics violated")
    for i in range(instance.bus_count):
        g = instance.generator_at(i)
        if np.any(result.p[i] < -tol) or np.any(result.p[i] > g.P + tol):
            out.append(f"generation at bus {i} outside [0, {g.P}]")
        if T > 1 and np.isfinite(g.K) and np.any(np.abs(np.diff(result.p[i])) > g.K + tol):
            out.append(f"ramp limit violated at bus {i}")
    flows = result.flows(instance)
    for j, ln in enumerate(instance.network.lines):
        if np.any(np.abs(flows[j]) > ln.F + tol):
            out.append(f"line {j} flow exceeds {ln.F}")
    inj = result.p - instance.loads
    inj[st.bus] -= pc - pd
    net = np.zeros_like(inj)
    for j, ln in enumerate(instance.network.lines):
        net[ln.from_bus] += flows[j]
        net[ln.to_bus] -= flows[j]
    if np.any(np.abs(inj - net) > tol):
        out.append(f"nodal balance violated by {np.max(np.abs(inj - net)):.3g} MW")
    if np.any(np.abs(result.theta[instance.network.reference_bus]) > 1e-12):
        out.append("reference angle is not zero")
    return out


def storage_profit(result: ClearingResult, instance: MarketInstance) -> float:
    """Storage revenue at its own bus price: sum of lmp * (discharge - charge)."""
    lam = result.lmp[instance.storage.bus]
    return float(np.sum(lam * (result.pd - result.pc)))


def enumerate_patterns(instance: MarketInstance, bid: Bid) -> tuple[float, tuple[Mode, ...] | None]:
    """Brute-force minimum over all ``3**T`` integral indicator patterns."""
    from itertools import product

    bid = _check_bid(instance, bid)
    layout = _Layout(instance, bid)
    best, arg = np.inf, None
    for modes in product((Mode.IDLE, Mode.CHARGE, Mode.DISCHARGE), repeat=instance.horizon):
        sol = layout.solve(modes)
        if sol.optimal and sol.objective < best:
            best, arg = sol.objective, modes
    return best, arg
