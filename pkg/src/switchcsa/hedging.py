"""Regime-wise self-financing hedge: gains, wealth, least-squares positions, errors.

Gains are measured in time-``t_{k+1}`` money over each step::

    gain_k = A_{k+1} + D_{k+1} - A_k (B_{k+1} / B_k) exp(g dt)

so that a position of ``phi_k`` units held over ``[t_k, t_{k+1})`` adds
``phi_k gain_k`` to wealth on top of the risk-free accrual. ``g`` is zero for
market assets and the carry spread for default assets.

Default assets are synthetic defaultable bonds on one party: before default
their discounted price grows by ``kappa = (exp(g dt) - q R) / (1 - q)`` per
step with ``q = 1 - exp(-lambda dt)``, on default they pay ``R`` times the
pre-default price as a dividend and vanish. That makes the gain increments
exact discrete martingale differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .csa import CsaSpec, funding_spread
from .errors import InvalidArgument, NumericalFailure
from .market import MarketParams, ScenarioPanel
from .regression import RegressionSpec, design_matrix, gram_pinv
from .rbsde import REGIME_Z, REGIME_ZETA, SwitchingPolicy

ASSET_KINDS = ("spot", "bank", "deterministic", "default_A", "default_B")
REGIMES = ("z", "zeta")


@dataclass(frozen=True)
class AssetSpec:
    """One hedging instrument.

    ``drift`` is the price growth rate of a ``deterministic`` asset, ``spread``
    the carry spread ``g`` of a default asset and ``recovery`` its recovery
    (``None`` takes the party's recovery). ``regimes`` lists where it may be
    traded.
    """

    name: str
    kind: str
    drift: float = 0.0
    spread: float = 0.0
    recovery: float | None = None
    regimes: tuple[str, ...] = REGIMES

    def __post_init__(self):
        if self.kind not in ASSET_KINDS:
            raise InvalidArgument(f"unknown asset kind {self.kind!r}; choose from {ASSET_KINDS}")
        object.__setattr__(self, "regimes", tuple(self.regimes))
        if not set(self.regimes) <= set(REGIMES) or not self.regimes:
            raise InvalidArgument(f"asset regimes must be a non-empty subset of {REGIMES}")

    @property
    def is_default_asset(self) -> bool:
        return self.kind.startswith("default")


def default_asset_set() -> tuple[AssetSpec, ...]:
    """Spot shared by both regimes, default bonds on each party traded in regime z only."""
    return (
        AssetSpec("spot", "spot"),
        AssetSpec("default_A", "default_A", regimes=("z",)),
        AssetSpec("default_B", "default_B", regimes=("z",)),
    )


@dataclass(frozen=True, eq=False)
class HedgingAssets:
    """Simulated prices ``(P, N + 1, m)`` and gain increments ``(P, N, m)``.

    Gains are zero from the contract's default node on.
    """

    specs: tuple[AssetSpec, ...]
    prices: np.ndarray
    gains: np.ndarray
    funding_assets: tuple[str, ...] = ("funding_account",)

    def __post_init__(self):
        defaults = {s.name for s in self.specs if s.is_default_asset}
        overlap = defaults & set(self.funding_assets)
        if overlap:
            raise InvalidArgument(f"default-hedging and funding assets must be disjoint; shared: {sorted(overlap)}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.specs)

    @property
    def disjoint(self) -> bool:
        return True

    def indices(self, regime: str) -> list[int]:
        return [i for i, s in enumerate(self.specs) if regime in s.regimes]

    def discounted_gains(self, panel: ScenarioPanel) -> np.ndarray:
        return self.gains / panel.bank_account[:, 1:, None]

    def martingale_zscores(self, panel: ScenarioPanel) -> np.ndarray:
        """z-score of the mean cumulative discounted gain at T, per asset."""
        total = self.discounted_gains(panel).sum(axis=1)
        sd = total.std(axis=0, ddof=1)
        mean = total.mean(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(sd > 0, mean / (sd / math.sqrt(len(total))), np.where(mean == 0, 0.0, np.inf))
        return z


def _kappa(intensity: float, recovery: float, spread: float, dt: float) -> float:
    surv = math.exp(-intensity * dt)
    return (math.exp(spread * dt) - (1.0 - surv) * recovery) / surv


def simulate_gains(
    specs, panel: ScenarioPanel, params: MarketParams, funding_assets: tuple[str, ...] = ("funding_account",)
) -> HedgingAssets:
    """Prices and gain increments of the hedging assets, truncated at the contract default."""
    specs = tuple(specs)
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise InvalidArgument("asset names must be unique")
    P, N, dt = panel.path_count, panel.steps, panel.grid.dt
    B = panel.bank_account
    t = panel.grid.nodes
    contract_node = panel.default_info().node
    live = np.arange(N)[None, :] < contract_node[:, None]
    prices = np.zeros((P, N + 1, len(specs)))
    gains = np.zeros((P, N, len(specs)))
    for i, s in enumerate(specs):
        if s.kind == "spot":
            A = panel.spot
            g = B[:, 1:] * (A[:, 1:] / B[:, 1:] - A[:, :-1] / B[:, :-1])
        elif s.kind == "bank":
            A = B
            g = np.zeros((P, N))
        elif s.kind == "deterministic":
            A = np.broadcast_to(np.exp(s.drift * t), (P, N + 1))
            g = B[:, 1:] * (A[:, 1:] / B[:, 1:] - A[:, :-1] / B[:, :-1])
        else:
            party = s.kind[-1]
            lam = getattr(params, f"intensity_{party}")
            rec = getattr(params, f"recovery_{party}") if s.recovery is None else s.recovery
            tau = getattr(panel, f"tau_{party}")
            kap = _kappa(lam, rec, s.spread, dt)
            a = kap ** np.arange(N + 1, dtype=float)  # discounted pre-default price
            alive_node = t[None, :] < tau[:, None]
            A = np.where(alive_node, a[None, :] * B, 0.0)
            dies = alive_node[:, :-1] & ~alive_node[:, 1:]
            a_next = np.where(alive_node[:, 1:], a[None, 1:], 0.0)
            div = np.where(dies, rec * a[None, :-1], 0.0)
            g = B[:, 1:] * (a_next + div - np.where(alive_node[:, :-1], a[None, :-1], 0.0) * math.exp(s.spread * dt))
        prices[:, :, i] = A
        gains[:, :, i] = np.where(live, g, 0.0)
    return HedgingAssets(specs, prices, gains, tuple(funding_assets))


def wealth_step(
    regime: str,
    W: np.ndarray | float,
    phi: np.ndarray,
    gains: np.ndarray,
    dividend: np.ndarray | float,
    params: MarketParams,
    dt: float,
    growth: np.ndarray | float = 1.0,
    switch_cost: np.ndarray | float = 0.0,
):
    """One step of regime wealth.

    ``W_{k+1} = W_k growth + [zeta] f(W_k) W_k dt + phi . gain - dividend - switch_cost``
    where ``f`` is the sign-dependent funding spread and ``growth = B_{k+1}/B_k``.
    """
    if regime not in REGIMES:
        raise InvalidArgument(f"regime must be one of {REGIMES}")
    W = np.asarray(W, dtype=float)
    out = W * growth + np.sum(np.asarray(phi, float) * np.asarray(gains, float), axis=-1)
    if regime == "zeta":
        out = out + funding_spread(W, params) * W * dt
    out = out - dividend - switch_cost
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class RegimeSurface:
    """Ex-dividend value and contract flows of one regime.

    ``value[p, k]`` is zero from the default node on and at ``N``;
    ``flows[p, k]`` are the cashflows paid at node ``k``.
    """

    value: np.ndarray
    flows: np.ndarray
    regime: str


def hedge_target(surface: RegimeSurface, panel: ScenarioPanel, params: MarketParams, k: int) -> np.ndarray:
    """One-step value change to replicate: ``V_{k+1} + cf_{k+1} - growth V_k - funding``."""
    B = panel.bank_account
    V = surface.value
    y = V[:, k + 1] + surface.flows[:, k + 1] - V[:, k] * (B[:, k + 1] / B[:, k])
    if surface.regime == "zeta":
        y = y - funding_spread(V[:, k], params) * V[:, k] * panel.grid.dt
    return y


@dataclass(eq=False)
class HedgeFit:
    """Positions ``phi (P, N, m)``, fitted drift and one-step residual ``(P, N)``."""

    regime: str
    phi: np.ndarray
    drift: np.ndarray
    residual: np.ndarray
    rows: np.ndarray
    dropped: dict = field(default_factory=dict)

    def residual_variance(self, k: int) -> float:
        r = self.residual[self.rows[:, k], k]
        return float(np.mean(r * r)) if len(r) else 0.0


def redundant_assets(G: np.ndarray, tol: float = 1e-8) -> list[int]:
    """Columns of ``G`` whose centered gains add no new direction (greedy in order)."""
    Gc = G - G.mean(axis=0)
    norms = np.sqrt((Gc * Gc).sum(axis=0))
    scale = max(float(norms.max()) if norms.size else 0.0, 1e-300)
    kept, bad = [], []
    for j in range(G.shape[1]):
        if norms[j] <= 1e-12 * scale:
            bad.append(j)
            continue
        cand = Gc[:, kept + [j]] / norms[kept + [j]]
        s = np.linalg.svd(cand, compute_uv=False)
        if s[-1] < tol * s[0]:
            bad.append(j)
        else:
            kept.append(j)
    return bad


def fit_hedge(
    regime: str,
    surface: RegimeSurface,
    assets: HedgingAssets,
    panel: ScenarioPanel,
    params: MarketParams,
    regression: RegressionSpec,
    active: np.ndarray | None = None,
    unconditional: bool = False,
    on_singular: str = "raise",
    min_rows: int = 50,
) -> HedgeFit:
    """Variance-minimizing positions per node by conditional least squares.

    At node ``k`` the one-step target is regressed on ``basis(x_k)`` and
    ``basis(x_k) * gain_k[i]`` over the paths alive at ``k`` (and, with
    ``active``, in the regime there). The first block absorbs the conditional
    drift, the second gives ``phi_i(x_k)``. Only data up to ``t_{k+1}`` enters.
    ``unconditional`` uses a constant basis. Assets with degenerate gain
    covariance raise, or get a zero position with ``on_singular="drop"``.
    If the active rows are too few for the conditional fit the node falls back
    to all alive paths.
    """
    if on_singular not in ("raise", "drop"):
        raise InvalidArgument("on_singular must be 'raise' or 'drop'")
    P, N = panel.path_count, panel.steps
    idx = assets.indices(regime)
    m_all = len(assets.specs)
    phi = np.zeros((P, N, m_all))
    drift = np.zeros((P, N))
    resid = np.zeros((P, N))
    rows_all = np.zeros((P, N), dtype=bool)
    dropped: dict[int, list[str]] = {}
    node = panel.default_info().node
    const = RegressionSpec("monomial", 1)
    for k in range(N):
        alive = node > k
        rows = alive if active is None else alive & active[:, k]
        spec = const if unconditional else regression
        if rows.sum() < min_rows and active is not None:
            rows = alive
        if not rows.any():
            continue
        x = panel.state(k, rows)
        basis = np.ones((rows.sum(), 1)) if unconditional else design_matrix(spec, x)
        nb = basis.shape[1]
        G = assets.gains[rows, k][:, idx]
        bad = redundant_assets(G) if len(idx) else []
        if bad:
            names = [assets.names[idx[j]] for j in bad]
            if on_singular == "raise":
                raise NumericalFailure(f"singular gain covariance at node {k}; redundant assets: {names}")
            dropped[k] = names
        use = [j for j in range(len(idx)) if j not in bad]
        if rows.sum() < nb * (1 + len(use)):
            basis = np.ones((rows.sum(), 1))
            nb = 1
        y = hedge_target(surface, panel, params, k)[rows]
        X = np.column_stack([basis] + [basis * G[:, [j]] for j in use])
        Xs, scale, V, inv, _, _ = gram_pinv(X)
        coef = V @ (inv * (V.T @ (Xs.T @ y))) / scale
        a = basis @ coef[:nb]
        pos = np.zeros((rows.sum(), len(idx)))
        for c, j in enumerate(use):
            pos[:, j] = basis @ coef[nb * (c + 1) : nb * (c + 2)]
        phi_rows = np.zeros((rows.sum(), m_all))
        phi_rows[:, idx] = pos
        phi[rows, k] = phi_rows
        drift[rows, k] = a
        resid[rows, k] = y - a - (pos * G).sum(axis=1)
        rows_all[:, k] = rows
    return HedgeFit(regime, phi, drift, resid, rows_all, dropped)


def simulate_wealth(
    regime: str,
    surface: RegimeSurface,
    fit: HedgeFit,
    assets: HedgingAssets,
    panel: ScenarioPanel,
    params: MarketParams,
) -> np.ndarray:
    """Wealth of the standalone regime hedge, started at ``V_0`` and frozen after default."""
    P, N, dt = panel.path_count, panel.steps, panel.grid.dt
    B = panel.bank_account
    node = panel.default_info().node
    W = np.empty((P, N + 1))
    W[:, 0] = surface.value[:, 0]
    for k in range(N):
        alive = node > k
        step = wealth_step(
            regime, W[:, k], fit.phi[:, k], assets.gains[:, k], surface.flows[:, k + 1], params, dt,
            growth=B[:, k + 1] / B[:, k],
        )
        W[:, k + 1] = np.where(alive, step, W[:, k])
    return W


@dataclass(eq=False)
class ErrorProcess:
    """``eps = S^C - W`` per node with terminal variance."""

    eps: np.ndarray
    terminal: np.ndarray
    variance: float


def error_process(value: np.ndarray, wealth: np.ndarray, panel: ScenarioPanel) -> ErrorProcess:
    """Hedging error, held constant after the contract's default node."""
    N = panel.steps
    node = panel.default_info().node
    eps = value - wealth
    last = np.minimum(node, N)
    cols = np.arange(N + 1)[None, :]
    held = eps[np.arange(panel.path_count), last]
    eps = np.where(cols > last[:, None], held[:, None], eps)
    term = eps[:, -1]
    var = float(term.var(ddof=1)) if len(term) > 1 else 0.0
    return ErrorProcess(eps, term, var)


@dataclass(eq=False)
class PolicyWealth:
    """Wealth following the switching policy.

    ``value`` is the contract value in force entering each node (before any
    switch there) and ``wealth_pre`` the wealth before paying a switch cost at
    that node.
    """

    value: np.ndarray
    wealth: np.ndarray
    wealth_pre: np.ndarray
    costs: np.ndarray


def simulate_policy_wealth(
    surfaces: dict[str, RegimeSurface],
    fits: dict[str, HedgeFit],
    policy: SwitchingPolicy,
    csa: CsaSpec,
    assets: HedgingAssets,
    panel: ScenarioPanel,
    params: MarketParams,
) -> PolicyWealth:
    P, N, dt = panel.path_count, panel.steps, panel.grid.dt
    B = panel.bank_account
    node = panel.default_info().node
    prev = np.full(P, policy.initial, dtype=np.int8)
    val = np.empty((P, N + 1))
    Wpre = np.empty((P, N + 1))
    W = np.empty((P, N + 1))
    costs = np.zeros((P, N + 1))
    start = np.where(prev == REGIME_Z, surfaces["z"].value[:, 0], surfaces["zeta"].value[:, 0])
    # value in force before a switch at t_0 is the initial regime's reflected value
    w = start.copy()
    for k in range(N + 1):
        alive = node > k
        cur = policy.indicator[:, k] if k < N else prev
        Vz, Vq = surfaces["z"].value[:, k], surfaces["zeta"].value[:, k]
        val[:, k] = np.where(alive, np.where(prev == REGIME_Z, Vz, Vq), 0.0)
        Wpre[:, k] = w
        sw = policy.switch_mask[:, k] & alive
        c = np.where(prev == REGIME_Z, csa.cost_z, csa.cost_zeta)
        costs[:, k] = np.where(sw, c, 0.0)
        w = w - costs[:, k]
        W[:, k] = w
        if k == N:
            break
        zeta_step = wealth_step(
            "zeta", w, fits["zeta"].phi[:, k], assets.gains[:, k], surfaces["zeta"].flows[:, k + 1], params, dt,
            growth=B[:, k + 1] / B[:, k],
        )
        z_step = wealth_step(
            "z", w, fits["z"].phi[:, k], assets.gains[:, k], surfaces["z"].flows[:, k + 1], params, dt,
            growth=B[:, k + 1] / B[:, k],
        )
        w = np.where(alive, np.where(cur == REGIME_Z, z_step, zeta_step), w)
        prev = np.where(alive, cur, prev).astype(np.int8)
    return PolicyWealth(val, W, Wpre, costs)


@dataclass(eq=False)
class HedgeReport:
    """Regime hedges, wealth and error processes."""

    phi: dict
    wealth: dict
    errors: dict
    policy_wealth: PolicyWealth | None
    policy_error: ErrorProcess | None
    asset_names: tuple[str, ...]
    dropped: dict = field(default_factory=dict)

    def variances(self) -> dict:
        out = {r: e.variance for r, e in self.errors.items()}
        pooled = np.concatenate([e.terminal for e in self.errors.values()])
        out["pooled"] = float(pooled.var(ddof=1)) if len(pooled) > 1 else 0.0
        if self.policy_error is not None:
            out["policy"] = self.policy_error.variance
        return out

    def phi_summary(self) -> list[dict]:
        """Mean position per node, regime and asset over paths with a fitted position."""
        rows = []
        for r, ph in self.phi.items():
            for k in range(ph.shape[1]):
                for i, nm in enumerate(self.asset_names):
                    rows.append({"regime": r, "node": k, "asset": nm, "mean_phi": float(ph[:, k, i].mean())})
        return rows


@dataclass(frozen=True)
class SelfFinancingCheck:
    passed: bool
    initial_ok: bool
    violations: list


def check_self_financing(
    report: HedgeReport, policy: SwitchingPolicy, csa: CsaSpec, initial_value: float | np.ndarray
) -> SelfFinancingCheck:
    """Initial wealth equals the contract value; wealth covers each switch cost."""
    pw = report.policy_wealth
    if pw is None:
        raise InvalidArgument("report has no policy wealth")
    initial_ok = bool(np.all(pw.wealth_pre[:, 0] == np.asarray(initial_value)))
    violations = []
    P, n1 = policy.switch_mask.shape
    for p, k in zip(*np.nonzero(policy.switch_mask)):
        need = pw.costs[p, k]
        if pw.wealth_pre[p, k] < need:
            violations.append((int(p), int(k)))
    return SelfFinancingCheck(initial_ok and not violations, initial_ok, violations)


def hedge_report(
    surfaces: dict[str, RegimeSurface],
    assets: HedgingAssets,
    panel: ScenarioPanel,
    params: MarketParams,
    regression: RegressionSpec,
    policy: SwitchingPolicy | None = None,
    csa: CsaSpec | None = None,
    unconditional: bool = False,
    on_singular: str = "drop",
) -> HedgeReport:
    """Fit both regime hedges, run their wealth and, with a policy, the combined wealth.

    Each regime's hedge is fitted on the nodes where the policy keeps that
    regime in force (all alive paths when no policy is given).
    """
    fits, wealth, errors = {}, {}, {}
    for r in REGIMES:
        active = None
        if policy is not None:
            code = REGIME_Z if r == "z" else REGIME_ZETA
            active = policy.indicator[:, :-1] == code
        fits[r] = fit_hedge(
            r, surfaces[r], assets, panel, params, regression, active=active,
            unconditional=unconditional, on_singular=on_singular,
        )
        wealth[r] = simulate_wealth(r, surfaces[r], fits[r], assets, panel, params)
        errors[r] = error_process(surfaces[r].value, wealth[r], panel)
    pw = pe = None
    if policy is not None and csa is not None:
        pw = simulate_policy_wealth(surfaces, fits, policy, csa, assets, panel, params)
        pe = error_process(pw.value, pw.wealth_pre, panel)
    dropped = {r: {str(k): v for k, v in f.dropped.items()} for r, f in fits.items()}
    return HedgeReport(
        {r: f.phi for r, f in fits.items()}, wealth, errors, pw, pe, assets.names, dropped
    )
