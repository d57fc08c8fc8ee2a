"""Independent reference values: Black-Scholes, a CRR binomial tree and a lattice switching toy.

None of these share code with the regression solvers, so they serve as
oracles in tests and in the ``oracle`` CLI command.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import InvalidArgument
from .market import ScenarioPanel, TimeGrid
from .rbsde import REGIME_Z, REGIME_ZETA, RbsdeProblem


def black_scholes(S, K, T, r, sigma, kind="call"):
    """European price under Black-Scholes (``T`` may be an array; ``T = 0`` gives the payoff)."""
    S = np.asarray(S, dtype=float)
    T = np.asarray(T, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        vol = sigma * np.sqrt(T)
        d1 = (np.log(S / K) + (r + 0.5 * sigma * sigma) * T) / vol
        d2 = d1 - vol
        disc = np.exp(-r * T)
        if kind == "call":
            price = S * norm.cdf(d1) - K * disc * norm.cdf(d2)
            payoff = np.maximum(S - K, 0.0)
        elif kind == "put":
            price = K * disc * norm.cdf(-d2) - S * norm.cdf(-d1)
            payoff = np.maximum(K - S, 0.0)
        else:
            raise InvalidArgument(f"kind must be 'call' or 'put', got {kind!r}")
    return np.where(vol > 0, price, payoff)


def black_scholes_delta(S, K, T, r, sigma, kind="call"):
    S = np.asarray(S, dtype=float)
    d1 = (np.log(S / K) + (r + 0.5 * sigma * sigma) * T) / (sigma * math.sqrt(T))
    return norm.cdf(d1) if kind == "call" else norm.cdf(d1) - 1.0


def binomial_american_put(S0, K, T, r, sigma, steps=2000):
    """Cox-Ross-Rubinstein American put."""
    dt = T / steps
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    p = (math.exp(r * dt) - d) / (u - d)
    disc = math.exp(-r * dt)
    j = np.arange(steps + 1)
    v = np.maximum(K - S0 * u**j * d ** (steps - j), 0.0)
    for i in range(steps - 1, -1, -1):
        j = np.arange(i + 1)
        v = disc * (p * v[1:] + (1 - p) * v[:-1])
        v = np.maximum(v, K - S0 * u**j * d ** (i - j))
    return float(v[0])


@dataclass(frozen=True)
class LatticeToy:
    """Three-step recombining binomial lattice with explicit regime cashflows.

    Every one of the ``2**3`` up/down paths is a panel path with weight 1/8.
    Over a step held in regime z the contract pays ``z_rate * (S - S0) * dt``,
    in regime zeta it pays ``zeta_rate * dt``. ``r = 0`` and no defaults.
    """

    S0: float = 1.0
    up: float = 1.3
    down: float = 0.7
    maturity: float = 3.0
    z_rate: float = 2.0
    zeta_rate: float = 0.15
    cost_z: float = 0.1
    cost_zeta: float = 0.1
    steps: int = 3

    @property
    def dt(self) -> float:
        return self.maturity / self.steps

    def moves(self) -> list[tuple[int, ...]]:
        """All up (1) / down (0) sequences, in panel path order."""
        return list(itertools.product((1, 0), repeat=self.steps))

    def spot_path(self, mv) -> np.ndarray:
        s = [self.S0]
        for m in mv:
            s.append(s[-1] * (self.up if m else self.down))
        return np.array(s)

    def rate(self, regime: int, spot) -> np.ndarray:
        spot = np.asarray(spot, dtype=float)
        if regime == REGIME_Z:
            return self.z_rate * (spot - self.S0)
        return np.full_like(spot, self.zeta_rate)

    def panel(self) -> ScenarioPanel:
        mv = self.moves()
        P = len(mv)
        spot = np.array([self.spot_path(m) for m in mv])
        dW = np.array([[1.0 if m else -1.0 for m in path] for path in mv])[:, :, None] * math.sqrt(self.dt)
        return ScenarioPanel(
            grid=TimeGrid(self.maturity, self.steps),
            spot=spot,
            short_rate=np.zeros_like(spot),
            bank_account=np.ones_like(spot),
            tau_A=np.full(P, np.inf),
            tau_B=np.full(P, np.inf),
            brownian_increments=dW,
        )

    def problems(self, panel: ScenarioPanel) -> tuple[RbsdeProblem, RbsdeProblem]:
        def gen(regime):
            return lambda k, x, y, n: self.rate(regime, x[:, 0])

        zero = np.zeros(panel.path_count)
        return (
            RbsdeProblem(zero, gen(REGIME_Z), label="z"),
            RbsdeProblem(zero, gen(REGIME_ZETA), label="zeta"),
        )


@dataclass(frozen=True)
class LatticeDP:
    """Exhaustive optimum over adapted regime strategies on the lattice."""

    value: float
    second_best: float
    switches: dict  # path index -> list of (node, new_regime)


def lattice_dp(toy: LatticeToy, initial: int) -> LatticeDP:
    """Enumerate every adapted strategy (one regime choice per tree node) and keep the best.

    A decision at node ``k`` depends on the moves so far; there are
    ``2**k`` decision points at step ``k``. Switching out of regime i costs
    ``cost_z`` (i = z) or ``cost_zeta`` (i = zeta).
    """
    histories = [h for k in range(toy.steps) for h in itertools.product((1, 0), repeat=k)]
    moves = toy.moves()
    spots = [toy.spot_path(m) for m in moves]
    cost = {REGIME_Z: toy.cost_z, REGIME_ZETA: toy.cost_zeta}
    scored = []
    for choice in itertools.product((REGIME_Z, REGIME_ZETA), repeat=len(histories)):
        plan = dict(zip(histories, choice))
        total = 0.0
        sw = {}
        for p, (mv, s) in enumerate(zip(moves, spots)):
            cur = initial
            v = 0.0
            sw[p] = []
            for k in range(toy.steps):
                nxt = plan[mv[:k]]
                if nxt != cur:
                    v -= cost[cur]
                    sw[p].append((k, nxt))
                    cur = nxt
                v += float(toy.rate(cur, s[k])) * toy.dt
            total += v
        scored.append((total / len(moves), sw))
    scored.sort(key=lambda t: -t[0])
    return LatticeDP(scored[0][0], scored[1][0], scored[0][1])
