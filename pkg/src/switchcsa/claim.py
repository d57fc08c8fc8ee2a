"""Promised cashflows of the contract and their clean and risky valuation.

Cashflows live on grid nodes. A :class:`PriceSurface` value at node ``k < N``
is ex-dividend: it prices the flows strictly after ``t_k``. At ``k = N`` it
equals the terminal flow itself (payoff plus any coupon due at ``T``). The
cum-dividend value used as the close-out mark at a default node is therefore
``values[:, k] + coupons[k]`` for ``k < N``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .market import PARTY_A, PARTY_B, MarketParams, ScenarioPanel, TimeGrid
from .regression import RegressionSpec, projected_on

PAYOFFS = ("forward", "call", "put", "zero_coupon")


@dataclass(frozen=True)
class Coupon:
    """A coupon at ``time``: either a fixed ``amount`` or ``rate`` times the notional."""

    time: float
    amount: float | None = None
    rate: float | None = None

    def __post_init__(self):
        if (self.amount is None) == (self.rate is None):
            raise InvalidArgument("a coupon needs exactly one of amount or rate")

    def value(self, notional: float) -> float:
        return float(self.amount) if self.amount is not None else float(self.rate) * notional


@dataclass(frozen=True)
class ClaimSpec:
    """Contract terms.

    ``payoff`` is one of ``forward`` (S_T - K), ``call``, ``put`` or
    ``zero_coupon`` (a fixed amount equal to the notional), each scaled by
    ``notional``.
    """

    payoff: str = "forward"
    strike: float = 100.0
    notional: float = 1.0
    coupons: tuple[Coupon, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.payoff not in PAYOFFS:
            raise InvalidArgument(f"unknown payoff {self.payoff!r}; choose from {PAYOFFS}")
        object.__setattr__(self, "coupons", tuple(self.coupons))

    def terminal_payoff(self, spot_T: np.ndarray) -> np.ndarray:
        s = np.asarray(spot_T, dtype=float)
        if self.payoff == "forward":
            x = s - self.strike
        elif self.payoff == "call":
            x = np.maximum(s - self.strike, 0.0)
        elif self.payoff == "put":
            x = np.maximum(self.strike - s, 0.0)
        else:
            x = np.ones_like(s)
        return self.notional * x

    def coupon_vector(self, grid: TimeGrid) -> np.ndarray:
        """Coupon amount at each grid node; off-grid or non-positive times raise."""
        c = np.zeros(grid.steps + 1)
        for cp in self.coupons:
            k = grid.node_index(cp.time)
            if k == 0:
                raise InvalidArgument("coupon times must lie in (0, T]")
            c[k] += cp.value(self.notional)
        return c


@dataclass(frozen=True, eq=False)
class CashflowLedger:
    """Per-path cashflows ``flows[p, k]`` paid at node ``k``."""

    flows: np.ndarray
    label: str

    def discounted_total(self, panel: ScenarioPanel) -> np.ndarray:
        return (self.flows / panel.bank_account).sum(axis=1)


@dataclass(frozen=True, eq=False)
class PriceSurface:
    """One value per path and node.

    ``coupons`` holds the coupon amounts per node, ``stderr_0`` the Monte Carlo
    standard error of the time-0 value.
    """

    values: np.ndarray
    label: str
    coupons: np.ndarray
    stderr_0: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgument(f"{self.label} surface has non-finite values")

    @property
    def value_0(self) -> float:
        return float(self.values[:, 0].mean())

    @property
    def mark(self) -> np.ndarray:
        """Cum-dividend value per node, the amount settled on a close-out there."""
        c = self.coupons.copy()
        c[-1] = 0.0
        return self.values + c[None, :]

    def floored(self) -> np.ndarray:
        """Reporting view with negative regression artifacts clipped at zero."""
        return np.maximum(self.values, 0.0)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["path", "node", "value"])
        P, n1 = self.values.shape
        for p in range(P):
            for k in range(n1):
                w.writerow([p, k, repr(float(self.values[p, k]))])
        return out.getvalue()


def clean_dividends(claim: ClaimSpec, panel: ScenarioPanel) -> CashflowLedger:
    """All promised flows, ignoring default."""
    coupons = claim.coupon_vector(panel.grid)
    flows = np.broadcast_to(coupons, (panel.path_count, panel.steps + 1)).copy()
    flows[:, -1] += claim.terminal_payoff(panel.spot[:, -1])
    return CashflowLedger(flows, "clean")


def conditional_values(
    flows: np.ndarray,
    panel: ScenarioPanel,
    regression: RegressionSpec,
    alive_from: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Regression estimate of ``B_k E[sum_{j>k} flows_j / B_j | state_k]`` per node.

    With ``alive_from`` (first dead node per path) the regression at node k
    uses only paths with ``alive_from > k`` and the value is zero elsewhere.
    The last column is the terminal flow itself on alive paths.
    Returns values and the standard error of the time-0 mean.
    """
    P, n1 = flows.shape
    N = n1 - 1
    B = panel.bank_account
    out = np.zeros((P, n1))
    alive = np.ones(P, bool) if alive_from is None else alive_from > N
    out[:, N] = np.where(alive, flows[:, N], 0.0)
    remaining = np.zeros(P)
    for k in range(N - 1, -1, -1):
        remaining = (remaining + flows[:, k + 1]) * (B[:, k] / B[:, k + 1])
        mask = None if alive_from is None else alive_from > k
        out[:, k], _ = projected_on(regression, panel.state(k), remaining, mask)
    live0 = remaining if alive_from is None else remaining[alive_from > 0]
    se = float(live0.std(ddof=1) / np.sqrt(len(live0))) if len(live0) > 1 else 0.0
    return out, se


def clean_price(claim: ClaimSpec, panel: ScenarioPanel, regression: RegressionSpec) -> PriceSurface:
    ledger = clean_dividends(claim, panel)
    values, se = conditional_values(ledger.flows, panel, regression)
    return PriceSurface(values, "clean", claim.coupon_vector(panel.grid), se)


def close_out(mark: np.ndarray, party: np.ndarray, params: MarketParams) -> np.ndarray:
    """Settlement at the first default given the pre-default mark.

    An A-default haircuts a positive mark by ``(1 - R_A)``; a B-default
    haircuts a negative mark by ``(1 - R_B)``. The sign pattern matches the
    BCVA legs, ``(1 - R_B) mark^-`` on B-default and ``-(1 - R_A) mark^+``
    on A-default.
    """
    mark = np.asarray(mark, dtype=float)
    pos, neg = np.maximum(mark, 0.0), np.maximum(-mark, 0.0)
    z = mark.copy()
    z = np.where(party == PARTY_A, mark - (1.0 - params.recovery_A) * pos, z)
    z = np.where(party == PARTY_B, mark + (1.0 - params.recovery_B) * neg, z)
    return z


def default_marks(clean: PriceSurface, panel: ScenarioPanel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Default node, defaulting party and the clean mark there (0 where no default)."""
    info = panel.default_info()
    dead = info.node <= panel.steps
    k = np.minimum(info.node, panel.steps)
    mark = np.where(dead, clean.mark[np.arange(panel.path_count), k], 0.0)
    return info.node, info.party, mark


def risky_dividends(claim: ClaimSpec, panel: ScenarioPanel, clean: PriceSurface, params: MarketParams) -> CashflowLedger:
    """Flows truncated at the first default, with the close-out paid at the default node."""
    base = clean_dividends(claim, panel).flows
    node, party, mark = default_marks(clean, panel)
    cols = np.arange(panel.steps + 1)[None, :]
    flows = np.where(cols < node[:, None], base, 0.0)
    dead = node <= panel.steps
    rows = np.flatnonzero(dead)
    flows[rows, node[rows]] += close_out(mark[rows], party[rows], params)
    return CashflowLedger(flows, "risky")


def risky_price(
    claim: ClaimSpec, panel: ScenarioPanel, clean: PriceSurface, params: MarketParams, regression: RegressionSpec
) -> PriceSurface:
    """Pre-default value of the risky flows; zero from the default node on."""
    ledger = risky_dividends(claim, panel, clean, params)
    node = panel.default_info().node
    values, se = conditional_values(ledger.flows, panel, regression, alive_from=node)
    return PriceSurface(values, "risky", clean.coupons, se)
