"""Reflected BSDEs by backward regression Monte Carlo.

The discrete scheme at node ``k`` (Euler, explicit in N, fixed point in Y)::

    C_k = E[Y_{k+1} | x_k]
    N_k = E[Y_{k+1} dW_k / dt | x_k]
    Y~_k = C_k + f(k, x_k, Y~_k, N_k) dt        (fixed-point iterations from C_k)
    Y_k = max(Y~_k, L_k),  A_k = Y_k - Y~_k

Regressions at node ``k`` run over the paths still alive at ``k``; defaulted
paths carry the problem's default value from their default node on.

For the two-regime switching system the obstacles are the other regime's
same-node value less the cost of leaving the current regime, applied
simultaneously; a second pass must leave both values unchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .csa import CsaSpec
from .errors import InvalidArgument, NumericalFailure
from .market import ScenarioPanel
from .regression import NodeRegression, RegressionSpec

Generator = Callable[[int, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

REGIME_Z = 1  # uncollateralized
REGIME_ZETA = 0  # collateralized


@dataclass(frozen=True, eq=False)
class RbsdeProblem:
    """Terminal condition, generator and obstacle of one reflected BSDE.

    ``generator(k, state, y, n)`` returns the per-year driver for all paths;
    ``None`` means a zero driver. ``obstacle`` has shape ``(P, N + 1)``, or is
    ``None`` for no reflection. Paths with ``default_node[p] <= N`` hold
    ``default_value[p]`` from that node on.
    """

    terminal: np.ndarray
    generator: Generator | None = None
    obstacle: np.ndarray | None = None
    default_node: np.ndarray | None = None
    default_value: np.ndarray | None = None
    lipschitz: float | None = None
    label: str = ""

    def driver(self, k, state, y, n) -> np.ndarray:
        if self.generator is None:
            return np.zeros_like(y)
        return np.asarray(self.generator(k, state, y, n), dtype=float)

    def alive_from(self, P: int, N: int) -> np.ndarray:
        if self.default_node is None:
            return np.full(P, N + 1, dtype=np.int64)
        return np.asarray(self.default_node, dtype=np.int64)

    def dead_value(self, P: int) -> np.ndarray:
        return np.zeros(P) if self.default_value is None else np.asarray(self.default_value, dtype=float)


def check_lipschitz(problem: RbsdeProblem, panel: ScenarioPanel, samples: int = 256, seed: int = 0) -> float:
    """Largest sampled ratio |f(y1,n1) - f(y2,n2)| / (|y1-y2| + |n1-n2|).

    Raises when it exceeds the problem's declared constant.
    """
    if problem.generator is None:
        return 0.0
    rng = np.random.default_rng(seed)
    P, d = panel.path_count, panel.noise_dim
    worst = 0.0
    scale = max(1.0, float(np.abs(problem.terminal).max()))
    for k in rng.integers(0, panel.steps, size=min(samples, 8)):
        x = panel.state(int(k))
        y1, y2 = rng.normal(0, scale, (2, P))
        n1, n2 = rng.normal(0, scale, (2, P, d))
        num = np.abs(problem.driver(int(k), x, y1, n1) - problem.driver(int(k), x, y2, n2))
        den = np.abs(y1 - y2) + np.abs(n1 - n2).sum(axis=1)
        worst = max(worst, float(np.max(num / np.maximum(den, 1e-300))))
    if problem.lipschitz is not None and worst > problem.lipschitz * (1 + 1e-9):
        raise InvalidArgument(f"generator violates Lipschitz bound {problem.lipschitz}: sampled ratio {worst:.6g}")
    return worst


@dataclass(eq=False)
class RbsdeSolution:
    """Solved triple on the panel.

    ``Y`` and ``A`` have shape ``(P, N + 1)``, ``N`` has shape ``(P, N + 1, d)``
    (zero in the last column). ``continuation`` is the pre-reflection value
    ``Y~`` and ``obstacle`` the obstacle actually applied (``-inf`` where none).
    """

    Y: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    continuation: np.ndarray
    obstacle: np.ndarray
    problem: RbsdeProblem
    alive_from: np.ndarray
    stderr_0: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def N(self) -> np.ndarray:
        return self.Z

    @property
    def value_0(self) -> float:
        return float(self.Y[:, 0].mean())

    def alive_mask(self) -> np.ndarray:
        n1 = self.Y.shape[1]
        return np.arange(n1)[None, :] < self.alive_from[:, None]

    def tolerance(self, rel: float = 1e-8) -> float:
        return rel * max(1.0, float(np.abs(self.Y).max()))

    def obstacle_violation(self) -> float:
        """Largest amount by which Y falls below the obstacle on alive nodes."""
        gap = np.where(self.alive_mask(), self.obstacle - self.Y, -np.inf)
        return max(0.0, float(gap.max()))

    def complementarity_residual(self, rel: float = 1e-8) -> float:
        tol = self.tolerance(rel)
        slack = np.maximum(self.Y - self.obstacle - tol, 0.0)
        slack = np.where(np.isfinite(slack), slack, 0.0)
        return float((self.A * slack).sum())

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics, sort_keys=True, indent=2)


def _node_fit(regression, state, alive, Y_next, dW, dt):
    """Continuation ``E[Y_{k+1} | x]`` and loading ``E[(Y_{k+1} - C) dW / dt | x]`` per target.

    ``Y_next`` is a list of arrays, one per regime, sharing one projector.
    Centring on the continuation before multiplying by the increment leaves
    the expectation unchanged and removes its noise for flat targets.
    Returns ``(C, N)`` pairs, the condition number and the standard error
    of the first target on alive paths.
    """
    P, d = dW.shape
    out = [(np.zeros(P), np.zeros((P, d))) for _ in Y_next]
    if not alive.any():
        return out, float("nan"), 0.0
    reg = NodeRegression(regression, state[alive])
    dWa = dW[alive]
    # one target at a time keeps the arithmetic identical to a standalone solve
    for y_next, (c, n) in zip(Y_next, out):
        ya = y_next[alive]
        ca = reg.fit(ya)
        c[alive] = ca
        n[alive] = reg.fit((ya - ca)[:, None] * dWa / dt)
    y = Y_next[0][alive]
    se = float(y.std(ddof=1) / math.sqrt(len(y))) if len(y) > 1 else 0.0
    return out, reg.condition_number, se


def _check_shapes(problem: RbsdeProblem, panel: ScenarioPanel):
    P, N = panel.path_count, panel.steps
    if np.shape(problem.terminal) != (P,):
        raise InvalidArgument(f"terminal condition must have shape ({P},)")
    if problem.obstacle is not None and np.shape(problem.obstacle) != (P, N + 1):
        raise InvalidArgument(f"obstacle must have shape ({P}, {N + 1})")


def solve_single_rbsde(
    problem: RbsdeProblem,
    panel: ScenarioPanel,
    regression: RegressionSpec,
    fixed_point_iterations: int = 1,
) -> RbsdeSolution:
    """Backward regression scheme for one reflected BSDE."""
    _check_shapes(problem, panel)
    P, N, dt, d = panel.path_count, panel.steps, panel.grid.dt, panel.noise_dim
    alive_from = problem.alive_from(P, N)
    dead_val = problem.dead_value(P)
    L = np.full((P, N + 1), -np.inf) if problem.obstacle is None else np.asarray(problem.obstacle, float)
    xi = np.asarray(problem.terminal, float)
    live_T = alive_from > N
    if np.any(xi[live_T] < L[live_T, N] - 1e-12 * max(1.0, float(np.abs(xi).max()))):
        raise InvalidArgument("terminal condition lies below the obstacle at maturity")

    Y = np.empty((P, N + 1))
    Zn = np.zeros((P, N + 1, d))
    A = np.zeros((P, N + 1))
    Yt = np.empty((P, N + 1))
    Y[:, N] = np.where(live_T, xi, dead_val)
    Yt[:, N] = Y[:, N]
    cond = [None] * N
    se0 = 0.0
    dW = panel.brownian_increments
    for k in range(N - 1, -1, -1):
        alive = alive_from > k
        [(C, Zk)], cond[k], se = _node_fit(regression, panel.state(k), alive, [Y[:, k + 1]], dW[:, k], dt)
        x = panel.state(k)
        y = C
        for _ in range(fixed_point_iterations):
            y = C + problem.driver(k, x, y, Zk) * dt
        Yk = np.maximum(y, L[:, k])
        Y[:, k] = np.where(alive, Yk, dead_val)
        Yt[:, k] = np.where(alive, y, dead_val)
        A[:, k] = np.where(alive, Yk - y, 0.0)
        Zn[:, k] = np.where(alive[:, None], Zk, 0.0)
        if k == 0:
            se0 = se
    sol = RbsdeSolution(Y, Zn, A, Yt, L, problem, alive_from, se0)
    sol.diagnostics = {
        "label": problem.label,
        "condition_numbers": [None if c is None or not math.isfinite(c) else float(c) for c in cond],
        "complementarity_residual": sol.complementarity_residual(),
        "obstacle_violation": sol.obstacle_violation(),
        "value_0": sol.value_0,
        "stderr_0": se0,
    }
    return sol


def solve_switching_system(
    problem_z: RbsdeProblem,
    problem_zeta: RbsdeProblem,
    csa: CsaSpec,
    panel: ScenarioPanel,
    regression: RegressionSpec,
    fixed_point_iterations: int = 1,
    literal_cross_generator: bool = False,
) -> tuple[RbsdeSolution, RbsdeSolution]:
    """Joint backward sweep of the two regimes with interconnected obstacles.

    ``problem_z`` and ``problem_zeta`` must share default nodes. Their
    ``obstacle`` fields are ignored: the obstacle of each regime is the
    other's same-node value less ``csa.cost_z`` (leaving z) or
    ``csa.cost_zeta`` (leaving zeta). With ``literal_cross_generator`` each
    regime's driver is evaluated at the other regime's (Y, N).
    """
    csa.check_round_trip()
    for p in (problem_z, problem_zeta):
        _check_shapes(p, panel)
    P, N, dt, d = panel.path_count, panel.steps, panel.grid.dt, panel.noise_dim
    alive_from = problem_z.alive_from(P, N)
    if not np.array_equal(alive_from, problem_zeta.alive_from(P, N)):
        raise InvalidArgument("both regimes must share the same default nodes")
    cz, cq = csa.cost_z, csa.cost_zeta
    dead_z, dead_q = problem_z.dead_value(P), problem_zeta.dead_value(P)
    live_T = alive_from > N

    def alloc():
        return np.empty((P, N + 1)), np.zeros((P, N + 1, d)), np.zeros((P, N + 1)), np.empty((P, N + 1))

    Yz, Nz, Az, Tz = alloc()
    Yq, Nq, Aq, Tq = alloc()
    Lz = np.full((P, N + 1), -np.inf)
    Lq = np.full((P, N + 1), -np.inf)
    Yz[:, N] = Tz[:, N] = np.where(live_T, problem_z.terminal, dead_z)
    Yq[:, N] = Tq[:, N] = np.where(live_T, problem_zeta.terminal, dead_q)
    cond = [None] * N
    switches_z = np.zeros(N + 1, dtype=np.int64)
    switches_q = np.zeros(N + 1, dtype=np.int64)
    se = {"z": 0.0, "zeta": 0.0}
    dW = panel.brownian_increments
    for k in range(N - 1, -1, -1):
        alive = alive_from > k
        x = panel.state(k)
        [(Cz, Zz), (Cq, Zq)], cond[k], _ = _node_fit(regression, x, alive, [Yz[:, k + 1], Yq[:, k + 1]], dW[:, k], dt)
        yz, yq = Cz, Cq
        for _ in range(fixed_point_iterations):
            if literal_cross_generator:
                yz, yq = Cz + problem_z.driver(k, x, yq, Zq) * dt, Cq + problem_zeta.driver(k, x, yz, Zz) * dt
            else:
                yz, yq = Cz + problem_z.driver(k, x, yz, Zz) * dt, Cq + problem_zeta.driver(k, x, yq, Zq) * dt
        # interconnected reflection: simultaneous update, then a confirming pass
        rz, rq = yz, yq
        for it in range(3):
            nz = np.maximum(yz, rq - cz)
            nq = np.maximum(yq, rz - cq)
            if it > 0 and np.array_equal(nz, rz) and np.array_equal(nq, rq):
                break
            if it == 2:
                raise NumericalFailure(f"interconnected reflection did not settle at node {k}")
            rz, rq = nz, nq
        if k == 0 and alive.any():
            for key, c in (("z", Yz[alive, 1]), ("zeta", Yq[alive, 1])):
                se[key] = float(c.std(ddof=1) / math.sqrt(len(c))) if len(c) > 1 else 0.0
        Yz[:, k] = np.where(alive, rz, dead_z)
        Yq[:, k] = np.where(alive, rq, dead_q)
        Tz[:, k] = np.where(alive, yz, dead_z)
        Tq[:, k] = np.where(alive, yq, dead_q)
        Az[:, k] = np.where(alive, rz - yz, 0.0)
        Aq[:, k] = np.where(alive, rq - yq, 0.0)
        Nz[:, k] = np.where(alive[:, None], Zz, 0.0)
        Nq[:, k] = np.where(alive[:, None], Zq, 0.0)
        Lz[:, k] = rq - cz
        Lq[:, k] = rz - cq
        switches_z[k] = int((alive & (Az[:, k] > 0)).sum())
        switches_q[k] = int((alive & (Aq[:, k] > 0)).sum())

    sol_z = RbsdeSolution(Yz, Nz, Az, Tz, Lz, problem_z, alive_from, se["z"])
    sol_q = RbsdeSolution(Yq, Nq, Aq, Tq, Lq, problem_zeta, alive_from, se["zeta"])
    cond_list = [None if c is None or not math.isfinite(c) else float(c) for c in cond]
    for sol, counts, name in ((sol_z, switches_z, "z"), (sol_q, switches_q, "zeta")):
        sol.diagnostics = {
            "label": name,
            "condition_numbers": cond_list,
            "complementarity_residual": sol.complementarity_residual(),
            "obstacle_violation": sol.obstacle_violation(),
            "reflection_counts": counts.tolist(),
            "value_0": sol.value_0,
            "stderr_0": sol.stderr_0,
        }
    return sol_z, sol_q


@dataclass(frozen=True)
class SnellResult:
    """Realized-cashflow optimal stopping estimate.

    ``values[p, k]`` is ``max(L, E[continue])`` (the continuation estimate
    where there is no obstacle), ``value_0`` the mean realized value at t_0.
    """

    values: np.ndarray
    continuation: np.ndarray
    stop: np.ndarray
    value_0: float
    stderr_0: float


def snell_value(solution: RbsdeSolution, panel: ScenarioPanel, regression: RegressionSpec) -> SnellResult:
    """Recompute a regime value by backward optimal stopping on realized cashflows.

    The obstacle is the one the solution was reflected against. Stopping at
    node ``k`` pays ``L_k``; continuing pays the realized value of the
    following node plus the driver over one step, evaluated at that realized
    value and the solution's ``N_k``. The stopping rule compares ``L_k`` with
    the regressed continuation, so values are not fed back through the
    regression as in the reflected scheme.
    """
    prob = solution.problem
    P, N, dt = panel.path_count, panel.steps, panel.grid.dt
    alive_from = solution.alive_from
    dead = prob.dead_value(P)
    L = solution.obstacle
    R = solution.Y[:, N].copy()
    values = np.empty((P, N + 1))
    cont = np.empty((P, N + 1))
    stop = np.zeros((P, N + 1), dtype=bool)
    values[:, N] = cont[:, N] = R
    for k in range(N - 1, -1, -1):
        alive = alive_from > k
        x = panel.state(k)
        realized = R + prob.driver(k, x, R, solution.Z[:, k]) * dt
        C = np.zeros(P)
        if alive.any():
            C[alive] = NodeRegression(regression, x[alive]).fit(realized[alive])
        s = alive & (L[:, k] > C)
        R = np.where(alive, np.where(s, L[:, k], realized), dead)
        values[:, k] = np.where(alive, np.maximum(C, L[:, k]), dead)
        cont[:, k] = np.where(alive, C, dead)
        stop[:, k] = s
    se = float(R.std(ddof=1) / math.sqrt(P)) if P > 1 else 0.0
    return SnellResult(values, cont, stop, float(R.mean()), se)


@dataclass(eq=False)
class SwitchingPolicy:
    """Optimal regime per path and node.

    ``indicator[p, k]`` is the regime in force over ``[t_k, t_{k+1})`` after
    any switch at ``t_k`` (1 = z, 0 = zeta), frozen from the default node on.
    ``switch_mask[p, k]`` marks a switch at node ``k``.
    """

    initial: int
    indicator: np.ndarray
    switch_mask: np.ndarray

    def switches(self, p: int) -> list[tuple[int, int]]:
        """Ordered ``(node, new_regime)`` pairs for path ``p``."""
        ks = np.flatnonzero(self.switch_mask[p])
        return [(int(k), int(self.indicator[p, k])) for k in ks]

    @property
    def counts(self) -> np.ndarray:
        return self.switch_mask.sum(axis=1)

    @property
    def frequency(self) -> np.ndarray:
        """Fraction of paths switching at each node."""
        return self.switch_mask.mean(axis=0)

    @property
    def total_switches(self) -> int:
        return int(self.switch_mask.sum())


def tie_tolerance(sol_z: RbsdeSolution, sol_zeta: RbsdeSolution, rel: float = 1e-9) -> float:
    return rel * max(1.0, float(np.abs(sol_z.Y).max()), float(np.abs(sol_zeta.Y).max()))


def extract_policy(
    sol_z: RbsdeSolution, sol_zeta: RbsdeSolution, csa: CsaSpec, initial: int = REGIME_Z, tie_rel: float = 1e-9
) -> SwitchingPolicy:
    """Walk forward from ``initial``; switch only when the obstacle strictly wins.

    A switch out of regime ``i`` at node ``k`` requires ``Y^i_k`` to sit on its
    obstacle and the obstacle to beat the continuation ``Y~^i_k`` by more than
    the tie tolerance. Ties stay put.
    """
    if initial not in (REGIME_Z, REGIME_ZETA):
        raise InvalidArgument("initial regime must be 1 (z) or 0 (zeta)")
    P, n1 = sol_z.Y.shape
    N = n1 - 1
    tol = tie_tolerance(sol_z, sol_zeta, tie_rel)
    alive_from = sol_z.alive_from
    cur = np.full(P, initial, dtype=np.int8)
    ind = np.empty((P, n1), dtype=np.int8)
    mask = np.zeros((P, n1), dtype=bool)
    for k in range(N + 1):
        if k < N:
            alive = alive_from > k
            in_z = cur == REGIME_Z
            gain_z = (sol_zeta.Y[:, k] - csa.cost_z) - sol_z.continuation[:, k]
            gain_q = (sol_z.Y[:, k] - csa.cost_zeta) - sol_zeta.continuation[:, k]
            on_z = np.abs(sol_z.Y[:, k] - (sol_zeta.Y[:, k] - csa.cost_z)) <= tol
            on_q = np.abs(sol_zeta.Y[:, k] - (sol_z.Y[:, k] - csa.cost_zeta)) <= tol
            sw = alive & np.where(in_z, on_z & (gain_z > tol), on_q & (gain_q > tol))
            cur = np.where(sw, 1 - cur, cur).astype(np.int8)
            mask[:, k] = sw
        ind[:, k] = cur
    # freeze after default
    cols = np.arange(n1)[None, :]
    last = np.clip(alive_from - 1, 0, N)
    frozen = ind[np.arange(P), last]
    ind = np.where(cols >= alive_from[:, None], frozen[:, None], ind).astype(np.int8)
    return SwitchingPolicy(initial, ind, mask)
