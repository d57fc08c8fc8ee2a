"""End-to-end pricing pipeline: config, staged run, result and reports.

Stages run in order: simulate, clean, rbsde, policy, hedge, assemble. An
exception in a stage is re-raised with the stage name prefixed, after a
``partial_result.json`` with the completed stages' headline numbers has been
written to the output directory (when one is configured).

The contract value is computed in adjustment form: each regime value is
``S^rf + Y^i`` where ``Y^z`` carries the default losses of the
uncollateralized regime and ``Y^zeta`` the funding cost of the collateralized
one, both with zero terminal condition.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .claim import ClaimSpec, Coupon, PriceSurface, clean_dividends, clean_price, close_out, default_marks
from .csa import (
    CsaSpec,
    bcva,
    collateral,
    contingent_bcva,
    contingent_collateral,
    funding_rate,
    funding_spread,
    perfect_collateral,
)
from .errors import ConfigError, InvalidArgument, NumericalFailure, ReportWriteError
from .hedging import AssetSpec, RegimeSurface, check_self_financing, default_asset_set, hedge_report, simulate_gains
from .market import MarketParams, ScenarioPanel, ShortRateModel, TimeGrid, simulate_panel
from .rbsde import (
    REGIME_Z,
    REGIME_ZETA,
    RbsdeProblem,
    SwitchingPolicy,
    check_lipschitz,
    extract_policy,
    solve_switching_system,
)
from .regression import RegressionSpec

SEED_ENV = "SWITCHCSA_SEED"
BOOTSTRAP_BLOCKS = 20
BOOTSTRAP_REPS = 200
MIN_PRODUCTION_PATHS = 1000


@dataclass(frozen=True)
class Tolerances:
    tie: float = 1e-9
    complementarity: float = 1e-8
    regression: float = 1e-13


@dataclass(frozen=True)
class RunConfig:
    """Everything needed for one deterministic run."""

    market: MarketParams = field(default_factory=MarketParams)
    claim: ClaimSpec = field(default_factory=ClaimSpec)
    csa: CsaSpec = field(default_factory=CsaSpec)
    maturity: float = 1.0
    steps: int = 50
    paths: int = 20000
    seed: int = 0
    regression: RegressionSpec = field(default_factory=RegressionSpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    output_dir: str | None = None
    initial_regime: str = "z"
    literal_cross_generator: bool = False
    unconditional_hedge: bool = False
    assets: tuple[AssetSpec, ...] = field(default_factory=default_asset_set)
    workers: int = 1

    def __post_init__(self):
        if self.initial_regime not in ("z", "zeta"):
            raise ConfigError("initial_regime must be 'z' or 'zeta'")
        if int(self.paths) != self.paths or self.paths < 1:
            raise ConfigError("paths must be a positive integer")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        TimeGrid(self.maturity, self.steps)
        object.__setattr__(self, "assets", tuple(self.assets))

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.maturity, self.steps)

    @property
    def initial_code(self) -> int:
        return REGIME_Z if self.initial_regime == "z" else REGIME_ZETA

    def with_overrides(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    # -- config file -------------------------------------------------
    def to_dict(self, runtime: bool = True) -> dict:
        """Config as a plain mapping; ``runtime=False`` omits output directory and worker count."""
        m = self.market
        d = {
            "market": {
                "spot0": m.spot0,
                "spot_vol": m.spot_vol,
                "spot_drift": m.spot_drift,
                "short_rate": dataclasses.asdict(m.short_rate),
                "intensity_A": m.intensity_A,
                "intensity_B": m.intensity_B,
                "recovery_A": m.recovery_A,
                "recovery_B": m.recovery_B,
                "borrow_spread": m.borrow_spread,
                "collateral_remuneration": m.collateral_remuneration,
                "opportunity_premium": m.opportunity_premium,
                "counterparty_remuneration": m.counterparty_remuneration,
                "correlation": None if m.correlation is None else [list(r) for r in m.correlation],
            },
            "claim": {
                "payoff": self.claim.payoff,
                "strike": self.claim.strike,
                "notional": self.claim.notional,
                "coupons": [{k: v for k, v in dataclasses.asdict(c).items() if v is not None} for c in self.claim.coupons],
            },
            "csa": {
                "threshold_A": self.csa.threshold_A,
                "threshold_B": self.csa.threshold_B,
                "mta": self.csa.mta,
                "cost_z": "inf" if math.isinf(self.csa.cost_z) else self.csa.cost_z,
                "cost_zeta": "inf" if math.isinf(self.csa.cost_zeta) else self.csa.cost_zeta,
            },
            "grid": {"maturity": self.maturity, "steps": self.steps},
            "paths": self.paths,
            "seed": self.seed,
            "regression": {"family": self.regression.family, "degree": self.regression.degree},
            "tolerances": dataclasses.asdict(self.tolerances),
            "output_dir": self.output_dir,
            "initial_regime": self.initial_regime,
            "toggles": {
                "literal_cross_generator": self.literal_cross_generator,
                "unconditional_hedge": self.unconditional_hedge,
            },
            "hedging": {"assets": [dataclasses.asdict(a) | {"regimes": list(a.regimes)} for a in self.assets]},
            "workers": self.workers,
        }
        if not runtime:
            del d["output_dir"], d["workers"]
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        allowed = {"market", "claim", "csa", "grid", "paths", "seed", "regression", "tolerances", "output_dir",
                   "initial_regime", "toggles", "hedging", "workers"}
        _no_unknown(raw, allowed, "config")
        try:
            mk = dict(raw.get("market") or {})
            _no_unknown(mk, {f.name for f in dataclasses.fields(MarketParams)}, "market")
            if "short_rate" in mk:
                sr = mk["short_rate"]
                mk["short_rate"] = ShortRateModel.constant(sr) if isinstance(sr, (int, float)) else ShortRateModel(**sr)
            if mk.get("correlation") is not None:
                mk["correlation"] = tuple(tuple(r) for r in mk["correlation"])
            market = MarketParams(**mk)

            cl = dict(raw.get("claim") or {})
            _no_unknown(cl, {"payoff", "strike", "notional", "coupons"}, "claim")
            cl["coupons"] = tuple(Coupon(**c) for c in cl.get("coupons") or ())
            claim = ClaimSpec(**cl)

            cs = dict(raw.get("csa") or {})
            _no_unknown(cs, {f.name for f in dataclasses.fields(CsaSpec)}, "csa")
            csa = CsaSpec(**cs)

            grid = dict(raw.get("grid") or {})
            _no_unknown(grid, {"maturity", "steps"}, "grid")
            reg = dict(raw.get("regression") or {})
            _no_unknown(reg, {"family", "degree"}, "regression")
            tol = dict(raw.get("tolerances") or {})
            _no_unknown(tol, {f.name for f in dataclasses.fields(Tolerances)}, "tolerances")
            tolerances = Tolerances(**{k: float(v) for k, v in tol.items()})
            regression = RegressionSpec(cutoff=tolerances.regression, **reg)
            toggles = dict(raw.get("toggles") or {})
            _no_unknown(toggles, {"literal_cross_generator", "unconditional_hedge"}, "toggles")
            hedging = dict(raw.get("hedging") or {})
            _no_unknown(hedging, {"assets"}, "hedging")
            assets = (
                tuple(AssetSpec(**a) for a in hedging["assets"]) if "assets" in hedging else default_asset_set()
            )
            return cls(
                market=market,
                claim=claim,
                csa=csa,
                maturity=float(grid.get("maturity", 1.0)),
                steps=int(grid.get("steps", 50)),
                paths=int(raw.get("paths", 20000)),
                seed=int(raw.get("seed", 0)),
                regression=regression,
                tolerances=tolerances,
                output_dir=raw.get("output_dir"),
                initial_regime=raw.get("initial_regime", "z"),
                literal_cross_generator=bool(toggles.get("literal_cross_generator", False)),
                unconditional_hedge=bool(toggles.get("unconditional_hedge", False)),
                assets=assets,
                workers=int(raw.get("workers", 1)),
            )
        except ConfigError:
            raise
        except (InvalidArgument, TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse config: {e}") from e
        return cls.from_dict(raw or {})

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _no_unknown(d: dict, allowed: set, where: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def load_config(path: str | Path, env: dict | None = None) -> RunConfig:
    """Read a YAML config; ``SWITCHCSA_SEED`` in the environment overrides the seed."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    cfg = RunConfig.from_yaml(text)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            cfg = cfg.with_overrides(seed=int(env[SEED_ENV]))
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV} must be an integer") from e
    return cfg


# -- result ----------------------------------------------------------------


@dataclass
class PricingResult:
    """Headline numbers of a run, each with a block-bootstrap standard error.

    ``total = value_z + value_zeta`` holds exactly.
    """

    total: float
    total_stderr: float
    value_z: float
    value_z_stderr: float
    value_zeta: float
    value_zeta_stderr: float
    clean_0: float
    clean_stderr: float
    bcva_0: float
    bcva_stderr: float
    funding_adjustment_0: float
    funding_adjustment_stderr: float
    regime_values: dict
    initial_regime: str
    switch_stats: dict
    hedge_variances: dict
    self_financing: dict
    nodes: dict
    diagnostics: dict
    config: dict

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PricingResult":
        return cls(**json.loads(text))


class _Stage:
    def __init__(self, name, log):
        self.name = name
        self.log = log

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None:
            self.log["completed"].append(self.name)
            return False
        self.log["failed"] = self.name
        self.log["error"] = f"{exc_type.__name__}: {exc}"
        return False


def block_bootstrap_se(values: np.ndarray, seed: int, blocks: int = BOOTSTRAP_BLOCKS, reps: int = BOOTSTRAP_REPS) -> float:
    """Standard error of the mean by resampling contiguous path blocks."""
    v = np.asarray(values, dtype=float)
    if len(v) < blocks:
        return float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    parts = np.array_split(v, blocks)
    sums = np.array([p.sum() for p in parts])
    sizes = np.array([len(p) for p in parts], dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    idx = rng.integers(0, blocks, size=(reps, blocks))
    means = sums[idx].sum(axis=1) / sizes[idx].sum(axis=1)
    return float(means.std(ddof=1))


def contract_problems(
    panel: ScenarioPanel, clean: PriceSurface, params: MarketParams
) -> tuple[RbsdeProblem, RbsdeProblem, np.ndarray]:
    """Adjustment-form problems for the two regimes.

    Regime z: driver ``-r y``, value at default the close-out loss leg.
    Regime zeta: driver ``-r y - f(S^rf + y)(S^rf + y)``, value 0 at default.
    Returns both problems and the loss leg per path.
    """
    node, party, mark = default_marks(clean, panel)
    P, N = panel.path_count, panel.steps
    dead = node <= N
    leg = np.zeros(P)
    leg[dead] = close_out(mark[dead], party[dead], params) - mark[dead]
    r = panel.short_rate
    S = clean.values
    spreads = (abs(funding_rate("-", params)), abs(funding_rate("+", params)))
    K = float(np.abs(r).max()) + max(spreads) + 1e-12

    def gen_z(k, x, y, n):
        return -r[:, k] * y

    def gen_zeta(k, x, y, n):
        w = S[:, k] + y
        return -r[:, k] * y - funding_spread(w, params) * w

    zero = np.zeros(P)
    pz = RbsdeProblem(zero, gen_z, default_node=node, default_value=leg, lipschitz=K, label="z")
    pq = RbsdeProblem(zero, gen_zeta, default_node=node, default_value=zero, lipschitz=K, label="zeta")
    return pz, pq, leg


def regime_surfaces(
    panel: ScenarioPanel, clean: PriceSurface, Yz: np.ndarray, Yq: np.ndarray, leg: np.ndarray, claim: ClaimSpec
) -> dict[str, RegimeSurface]:
    """Ex-dividend regime values ``S^rf + Y`` and their cashflows.

    Both regimes pay the promised flows before default. At the default node
    regime z settles the mark plus the loss leg, regime zeta the mark.
    """
    P, N = panel.path_count, panel.steps
    node, _, mark = default_marks(clean, panel)
    cols = np.arange(N + 1)[None, :]
    live = cols < np.minimum(node, N)[:, None]
    base = clean_dividends(claim, panel).flows
    pre = np.where(cols < node[:, None], base, 0.0)
    dead = np.flatnonzero(node <= N)
    out = {}
    for name, Y, extra in (("z", Yz, leg), ("zeta", Yq, np.zeros(P))):
        flows = pre.copy()
        flows[dead, node[dead]] += mark[dead] + extra[dead]
        out[name] = RegimeSurface(np.where(live, clean.values + Y, 0.0), flows, name)
    return out


def realized_adjustment(
    policy: SwitchingPolicy, panel: ScenarioPanel, clean: PriceSurface, Yq: np.ndarray, leg: np.ndarray,
    params: MarketParams, csa: CsaSpec,
) -> np.ndarray:
    """Per-path discounted adjustment realized under the policy.

    Funding cost accrues while zeta is in force, the loss leg is paid if z is
    in force at default, and switch costs are paid when leaving a regime.
    """
    P, N, dt = panel.path_count, panel.steps, panel.grid.dt
    B = panel.bank_account
    node = panel.default_info().node
    ind = policy.indicator
    total = np.zeros(P)
    prev = np.full(P, policy.initial)
    for k in range(N):
        alive = node > k
        sw = policy.switch_mask[:, k] & alive
        cost = np.where(prev == REGIME_Z, csa.cost_z, csa.cost_zeta)
        total -= np.where(sw, cost, 0.0) / B[:, k]
        w = clean.values[:, k] + Yq[:, k]
        fund = -funding_spread(w, params) * w * dt
        total += np.where(alive & (ind[:, k] == REGIME_ZETA), fund / B[:, k], 0.0)
        prev = np.where(alive, ind[:, k], prev)
    dead = node <= N
    kd = np.minimum(node, N)
    held = ind[np.arange(P), np.maximum(kd - 1, 0)]
    total += np.where(dead & (held == REGIME_Z), leg / B[np.arange(P), kd], 0.0)
    return total


def switch_frequency_rows(policy: SwitchingPolicy, grid: TimeGrid) -> list[dict]:
    """Per node: paths switching into z, into zeta, and the switching fraction."""
    t = grid.nodes
    m = policy.switch_mask
    into_z = (m & (policy.indicator == REGIME_Z)).sum(axis=0)
    into_q = (m & (policy.indicator == REGIME_ZETA)).sum(axis=0)
    return [
        {"node": k, "t": float(t[k]), "to_z": int(into_z[k]), "to_zeta": int(into_q[k]), "frequency": float(m[:, k].mean())}
        for k in range(len(t))
    ]


def _mean_alive(arr: np.ndarray, alive: np.ndarray) -> list[float]:
    out = []
    for k in range(arr.shape[1]):
        a = alive[:, k]
        out.append(float(arr[a, k].mean()) if a.any() else 0.0)
    return out


def run_pricing(config: RunConfig) -> PricingResult:
    """Simulate, price both regimes, extract the policy, hedge and assemble."""
    log: dict[str, Any] = {"completed": [], "failed": None, "error": None, "headline": {}}
    if config.paths < MIN_PRODUCTION_PATHS:
        warnings.warn(f"{config.paths} paths is below the production minimum of {MIN_PRODUCTION_PATHS}", stacklevel=2)
    stage = "simulate"
    try:
        with _Stage("simulate", log):
            panel = simulate_panel(config.market, config.grid, config.paths, config.seed, workers=config.workers)
            info = panel.default_info()
            if info.ties:
                warnings.warn(f"{info.ties} simultaneous defaults attributed to counterparty B", stacklevel=2)
        stage = "clean"
        with _Stage("clean", log):
            clean = clean_price(config.claim, panel, config.regression)
            bc = bcva(clean, panel, config.market, config.regression)
            coll = collateral(clean, config.csa, panel)
            log["headline"].update(clean_0=clean.value_0, bcva_0=bc.value_0)
        stage = "rbsde"
        with _Stage("rbsde", log):
            pz, pq, leg = contract_problems(panel, clean, config.market)
            for p in (pz, pq):
                check_lipschitz(p, panel)
            sz, sq = solve_switching_system(
                pz, pq, config.csa, panel, config.regression, literal_cross_generator=config.literal_cross_generator
            )
            log["headline"].update(Y_z_0=sz.value_0, Y_zeta_0=sq.value_0)
        stage = "policy"
        with _Stage("policy", log):
            policy = extract_policy(sz, sq, config.csa, initial=config.initial_code, tie_rel=config.tolerances.tie)
        stage = "hedge"
        with _Stage("hedge", log):
            surfaces = regime_surfaces(panel, clean, sz.Y, sq.Y, leg, config.claim)
            assets = simulate_gains(config.assets, panel, config.market)
            report = hedge_report(
                surfaces, assets, panel, config.market, config.regression, policy, config.csa,
                unconditional=config.unconditional_hedge, on_singular="drop",
            )
            s0 = float(clean.values[0, 0] + (sz.Y if config.initial_code == REGIME_Z else sq.Y)[0, 0])
            sf = check_self_financing(report, policy, config.csa, s0)
        stage = "assemble"
        with _Stage("assemble", log):
            result = _assemble(config, panel, clean, bc, coll, sz, sq, leg, policy, surfaces, report, sf)
    except (InvalidArgument, NumericalFailure) as e:
        _flush_partial(config, log)
        raise type(e)(f"[{stage}] {e}") from e
    return result


def _assemble(config, panel, clean, bc, coll, sz, sq, leg, policy, surfaces, report, sf) -> PricingResult:
    P, N = panel.path_count, panel.steps
    B = panel.bank_account
    seed = config.seed
    pw = report.policy_wealth
    # per-path telescoping attribution of the policy value to the regime in force
    v = pw.value / B
    seg = v[:, :-1] - v[:, 1:]
    ind = policy.indicator[:, :-1]
    part_z = np.where(ind == REGIME_Z, seg, 0.0).sum(axis=1)
    part_q = np.where(ind == REGIME_ZETA, seg, 0.0).sum(axis=1)
    value_z = float(part_z.mean())
    value_zeta = float(part_q.mean())
    total = value_z + value_zeta

    clean_paths = clean_dividends(config.claim, panel).flows
    clean_realized = (clean_paths[:, 1:] / B[:, 1:]).sum(axis=1)
    adj_realized = realized_adjustment(policy, panel, clean, sq.Y, leg, config.market, config.csa)
    node, _, _ = default_marks(clean, panel)
    kd = np.minimum(node, N)
    bcva_realized = np.where(node <= N, leg / B[np.arange(P), kd], 0.0)
    fund_policy = SwitchingPolicy(REGIME_ZETA, np.zeros_like(policy.indicator), np.zeros_like(policy.switch_mask))
    fva_realized = realized_adjustment(fund_policy, panel, clean, sq.Y, leg, config.market, config.csa)

    alive = np.arange(N + 1)[None, :] < node[:, None]
    z_ind = policy.indicator
    perf = perfect_collateral(clean, panel)
    nodes = {
        "t": [float(x) for x in panel.grid.nodes],
        "clean": _mean_alive(clean.values, alive),
        "regime_z": _mean_alive(clean.values + sz.Y, alive),
        "regime_zeta": _mean_alive(clean.values + sq.Y, alive),
        "collateral": _mean_alive(coll, alive),
        "contingent_collateral": _mean_alive(contingent_collateral(perf, z_ind), alive),
        "bcva": _mean_alive(bc.values, alive),
        "contingent_bcva": _mean_alive(contingent_bcva(bc.values, z_ind), alive),
        "switch_frequency": switch_frequency_rows(policy, panel.grid),
    }
    counts = policy.counts
    hist = np.bincount(counts, minlength=1)
    rel = config.tolerances.complementarity
    for sol in (sz, sq):
        sol.diagnostics["complementarity_residual"] = sol.complementarity_residual(rel)
        sol.diagnostics["tolerance"] = sol.tolerance(rel)
    diagnostics = {
        "rbsde": {"z": sz.diagnostics, "zeta": sq.diagnostics},
        "model_total": float(clean.values[0, 0] + (sz.Y if config.initial_code == REGIME_Z else sq.Y)[0, 0]),
        "defaults": int((node <= N).sum()),
        "hedge_dropped_assets": report.dropped,
    }
    return PricingResult(
        total=total,
        total_stderr=block_bootstrap_se(clean_realized + adj_realized, seed),
        value_z=value_z,
        value_z_stderr=block_bootstrap_se(part_z, seed),
        value_zeta=value_zeta,
        value_zeta_stderr=block_bootstrap_se(part_q, seed),
        clean_0=clean.value_0,
        clean_stderr=block_bootstrap_se(clean_realized, seed),
        bcva_0=bc.value_0,
        bcva_stderr=block_bootstrap_se(bcva_realized, seed),
        funding_adjustment_0=sq.value_0,
        funding_adjustment_stderr=block_bootstrap_se(fva_realized, seed),
        regime_values={"z": float(clean.values[0, 0] + sz.Y[0, 0]), "zeta": float(clean.values[0, 0] + sq.Y[0, 0])},
        initial_regime=config.initial_regime,
        switch_stats={
            "mean_count": float(counts.mean()),
            "total": int(counts.sum()),
            "count_histogram": [int(h) for h in hist],
            "time_histogram": [int(x) for x in policy.switch_mask.sum(axis=0)],
            "fraction_paths_switching": float((counts > 0).mean()),
        },
        hedge_variances=report.variances(),
        self_financing={
            "passed": sf.passed,
            "initial_ok": sf.initial_ok,
            "violation_count": len(sf.violations),
            "violations": [list(v) for v in sf.violations[:50]],
        },
        nodes=nodes,
        diagnostics=diagnostics,
        config=config.to_dict(runtime=False),
    )


def _flush_partial(config: RunConfig, log: dict) -> None:
    if not config.output_dir:
        return
    try:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "partial_result.json").write_text(json.dumps(log, sort_keys=True, indent=2, default=float))
    except OSError:
        pass


# -- reports ---------------------------------------------------------------


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def render_reports(result: PricingResult, emit_plots: bool = False) -> dict[str, str]:
    """All report files as ``{filename: content}``."""
    n = result.nodes
    t = n["t"]
    K = range(len(t))
    files = {"result.json": result.to_json()}
    files["prices_by_node.csv"] = _csv(
        ["node", "t", "clean", "regime_z", "regime_zeta"],
        [[k, repr(t[k]), repr(n["clean"][k]), repr(n["regime_z"][k]), repr(n["regime_zeta"][k])] for k in K],
    )
    files["collateral_by_node.csv"] = _csv(
        ["node", "t", "collateral", "contingent_collateral"],
        [[k, repr(t[k]), repr(n["collateral"][k]), repr(n["contingent_collateral"][k])] for k in K],
    )
    files["bcva_by_node.csv"] = _csv(
        ["node", "t", "bcva", "contingent_bcva"],
        [[k, repr(t[k]), repr(n["bcva"][k]), repr(n["contingent_bcva"][k])] for k in K],
    )
    sw = n["switch_frequency"]
    files["switch_frequency.csv"] = _csv(
        ["node", "t", "to_z", "to_zeta", "frequency"],
        [[r["node"], repr(r["t"]), r["to_z"], r["to_zeta"], repr(r["frequency"])] for r in sw],
    )
    files["rbsde_diagnostics.json"] = json.dumps(result.diagnostics["rbsde"], sort_keys=True, indent=2)
    files["hedge_report.json"] = json.dumps(
        {"variances": result.hedge_variances, "self_financing": result.self_financing,
         "dropped_assets": result.diagnostics["hedge_dropped_assets"]},
        sort_keys=True, indent=2,
    )
    if emit_plots:
        files["plot_data.csv"] = _csv(
            ["node", "t", "regime_z", "regime_zeta", "switch_intensity"],
            [[k, repr(t[k]), repr(n["regime_z"][k]), repr(n["regime_zeta"][k]), repr(sw[k]["frequency"])] for k in K],
        )
    return files


def emit_reports(result: PricingResult, out_dir: str | Path, emit_plots: bool = False) -> list[Path]:
    """Write the rendered reports; on failure raise with the rendered buffers attached."""
    files = render_reports(result, emit_plots)
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, content in files.items():
            p = out / name
            p.write_text(content)
            written.append(p)
    except OSError as e:
        raise ReportWriteError(f"cannot write reports to {out}: {e}", files) from e
    return written
