"""Collateral, bilateral CVA and funding spreads, standard and contingent.

Regime indicator convention: ``z = 1`` is the uncollateralized regime (full
CVA), ``z = 0`` the fully collateralized regime (no CVA, funding active).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .claim import PriceSurface, close_out, default_marks
from .errors import InvalidArgument
from .market import MarketParams, ScenarioPanel
from .regression import RegressionSpec, projected_on

INFINITE_COST = math.inf


def parse_cost(value) -> float:
    """Switching cost from config: a non-negative number or the ``inf`` sentinel."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinite", "never"):
            return INFINITE_COST
        raise InvalidArgument(f"switching cost must be a number or 'inf', got {value!r}")
    return float(value)


@dataclass(frozen=True)
class CsaSpec:
    """Collateral agreement terms and switching costs.

    ``cost_z`` is paid when leaving the uncollateralized regime z (it sits in
    the obstacle of regime z), ``cost_zeta`` when leaving the collateralized
    regime. ``math.inf`` disables the corresponding switch.
    """

    threshold_A: float = 0.0
    threshold_B: float = 0.0
    mta: float = 0.0
    cost_z: float = INFINITE_COST
    cost_zeta: float = INFINITE_COST

    def __post_init__(self):
        object.__setattr__(self, "cost_z", parse_cost(self.cost_z))
        object.__setattr__(self, "cost_zeta", parse_cost(self.cost_zeta))
        if self.mta < 0:
            raise InvalidArgument("minimum transfer amount must be non-negative")
        if not self.threshold_A <= 0.0 <= self.threshold_B:
            raise InvalidArgument("thresholds must satisfy threshold_A <= 0 <= threshold_B")
        for name in ("cost_z", "cost_zeta"):
            c = getattr(self, name)
            if math.isnan(c) or c < 0:
                raise InvalidArgument(f"{name} must be non-negative")

    @property
    def switching_enabled(self) -> bool:
        return math.isfinite(self.cost_z) or math.isfinite(self.cost_zeta)

    def check_round_trip(self) -> None:
        """Reject a free round trip; allow it with a warning only when both costs are zero."""
        total = self.cost_z + self.cost_zeta
        if total < 0:
            raise InvalidArgument("switching costs must satisfy cost_z + cost_zeta > 0")
        if total == 0:
            warnings.warn("zero switching costs: free round trips, ties resolve to staying", stacklevel=3)


def collateral_rule(x: np.ndarray, csa: CsaSpec) -> np.ndarray:
    """Threshold/MTA collateral amount for a clean value ``x``."""
    x = np.asarray(x, dtype=float)
    above = x > csa.threshold_B + csa.mta
    below = x < csa.threshold_A - csa.mta
    return np.where(above, x - csa.threshold_B, 0.0) + np.where(below, x - csa.threshold_A, 0.0)


def collateral(clean: PriceSurface, csa: CsaSpec, panel: ScenarioPanel) -> np.ndarray:
    """Collateral per path and node.

    Before default the rule is applied to the clean value. On the default node
    it stays at the last pre-default amount, and it is zero afterwards.
    """
    node = panel.default_info().node
    S = clean.values
    coll = collateral_rule(S, csa)
    k = np.arange(panel.steps + 1)[None, :]
    frozen = np.zeros_like(coll)
    frozen[:, 1:] = coll[:, :-1]
    out = np.where(k < node[:, None], coll, 0.0)
    return np.where(k == node[:, None], frozen, out)


def perfect_collateral(clean: PriceSurface, panel: ScenarioPanel) -> np.ndarray:
    return collateral(clean, CsaSpec(), panel)


def bcva(
    clean: PriceSurface, panel: ScenarioPanel, params: MarketParams, regression: RegressionSpec
) -> PriceSurface:
    """Bilateral CVA by regression of realized discounted default legs on alive paths."""
    node, party, mark = default_marks(clean, panel)
    N = panel.steps
    P = panel.path_count
    dead = node <= N
    leg = np.zeros(P)
    leg[dead] = close_out(mark[dead], party[dead], params) - mark[dead]
    B = panel.bank_account
    kd = np.minimum(node, N)
    B_tau = B[np.arange(P), kd]
    values = np.zeros((P, N + 1))
    se = 0.0
    for k in range(N - 1, -1, -1):
        alive = node > k
        if not alive.any():
            warnings.warn(f"no surviving paths at node {k}; BCVA set to 0", stacklevel=2)
            continue
        target = np.where(dead, leg * B[:, k] / B_tau, 0.0)
        values[:, k], _ = projected_on(regression, panel.state(k), target, alive)
        if k == 0:
            t0 = target[alive]
            se = float(t0.std(ddof=1) / np.sqrt(len(t0))) if len(t0) > 1 else 0.0
    return PriceSurface(values, "bcva", np.zeros(N + 1), se)


def regime_indicator(z) -> np.ndarray:
    """Validate a regime indicator array (values in {0, 1})."""
    z = np.asarray(z)
    if not np.isin(z, (0, 1)).all():
        raise InvalidArgument("regime indicator must take values in {0, 1}")
    return z.astype(np.int8)


def contingent_collateral(coll: np.ndarray, z) -> np.ndarray:
    """Collateral where the collateralized regime is active (z = 0), zero elsewhere."""
    z = regime_indicator(z)
    return np.where(z == 0, coll, 0.0)


def contingent_bcva(bcva_values: np.ndarray, z) -> np.ndarray:
    """BCVA where the uncollateralized regime is active (z = 1), zero elsewhere."""
    z = regime_indicator(z)
    return np.where(z == 1, bcva_values, 0.0)


def funding_rate(wealth_sign, params: MarketParams) -> float:
    """Funding spread over r for negative (``'-'``) or positive (``'+'``) wealth."""
    if wealth_sign in ("-", -1):
        return params.borrow_spread - params.collateral_remuneration
    if wealth_sign in ("+", 1):
        return params.counterparty_remuneration - params.opportunity_premium
    raise InvalidArgument(f"wealth sign must be '+' or '-', got {wealth_sign!r}")


def funding_spread(wealth: np.ndarray, params: MarketParams) -> np.ndarray:
    """Vectorized spread: borrowing branch for negative wealth, lending branch otherwise."""
    return np.where(np.asarray(wealth) < 0, funding_rate("-", params), funding_rate("+", params))
