"""Scenario generation: time grid, market parameters and the simulated panel.

Every downstream module reads a :class:`ScenarioPanel`. Paths are generated in
fixed-size blocks, each block drawing from its own child stream of a
``SeedSequence``; the draws of path ``p`` therefore depend only on
``(seed, p, N, d)`` and not on the number of paths or worker threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgument

BLOCK_SIZE = 1024
_MAGIC = b"SWCSAPNL"
_NORMAL_STREAM = 0
_EXPONENTIAL_STREAM = 1

# Default-party codes used by :meth:`ScenarioPanel.default_info`.
NO_DEFAULT = 0
PARTY_A = 1
PARTY_B = 2


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_N = T``."""

    maturity: float
    steps: int

    def __post_init__(self):
        if not (self.maturity > 0) or not math.isfinite(self.maturity):
            raise InvalidArgument(f"maturity must be positive and finite, got {self.maturity}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise InvalidArgument(f"step count must be an integer >= 2, got {self.steps}")
        object.__setattr__(self, "maturity", float(self.maturity))
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.maturity / self.steps

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.steps + 1) * self.dt
        t[-1] = self.maturity
        return t

    def node_index(self, t: float, atol: float = 1e-9) -> int:
        """Index of the grid node equal to ``t``; off-grid times raise."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.steps or abs(k * self.dt - t) > atol * max(1.0, self.maturity):
            raise InvalidArgument(f"time {t} is not a grid node (dt={self.dt})")
        return k


def build_time_grid(T: float, N: int) -> TimeGrid:
    return TimeGrid(float(T), N)


@dataclass(frozen=True)
class ShortRateModel:
    """Constant short rate, or a Vasicek-type mean-reverting one.

    The model is stochastic when ``vol > 0`` or ``speed > 0``.
    """

    r0: float = 0.0
    speed: float = 0.0
    level: float | None = None
    vol: float = 0.0

    def __post_init__(self):
        if self.vol < 0 or self.speed < 0:
            raise InvalidArgument("short-rate speed and vol must be non-negative")

    @property
    def stochastic(self) -> bool:
        return self.vol > 0 or self.speed > 0

    @classmethod
    def constant(cls, r: float) -> "ShortRateModel":
        return cls(r0=float(r))


@dataclass(frozen=True)
class MarketParams:
    """Dynamics of the spot, short rate and the two default times.

    ``spot_drift=None`` means the risk-neutral drift (the current short rate).
    ``correlation`` is the correlation matrix of the driving Brownian factors
    (spot first, short rate second when the rate is stochastic); ``None`` means
    independent factors.
    """

    spot0: float = 100.0
    spot_vol: float = 0.2
    spot_drift: float | None = None
    short_rate: ShortRateModel = field(default_factory=ShortRateModel)
    intensity_A: float = 0.0
    intensity_B: float = 0.0
    recovery_A: float = 0.4
    recovery_B: float = 0.4
    borrow_spread: float = 0.0
    collateral_remuneration: float = 0.0
    opportunity_premium: float = 0.0
    counterparty_remuneration: float = 0.0
    correlation: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.spot_vol < 0:
            raise InvalidArgument("spot_vol must be non-negative")
        if self.spot0 <= 0:
            raise InvalidArgument("spot0 must be positive")
        for name in ("intensity_A", "intensity_B"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be non-negative")
        for name in ("recovery_A", "recovery_B"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidArgument(f"{name} must lie in [0, 1]")
        if self.correlation is not None:
            object.__setattr__(
                self, "correlation", tuple(tuple(float(x) for x in row) for row in self.correlation)
            )
            validate_correlation(np.asarray(self.correlation), self.noise_dim)

    @property
    def noise_dim(self) -> int:
        return 2 if self.short_rate.stochastic else 1

    def correlation_matrix(self) -> np.ndarray:
        if self.correlation is None:
            return np.eye(self.noise_dim)
        return np.asarray(self.correlation, dtype=float)


def validate_correlation(rho: np.ndarray, dim: int) -> None:
    if rho.shape != (dim, dim):
        raise InvalidArgument(f"correlation must be {dim}x{dim}, got shape {rho.shape}")
    if not np.allclose(rho, rho.T, atol=1e-12):
        raise InvalidArgument("correlation matrix is not symmetric")
    if not np.allclose(np.diag(rho), 1.0, atol=1e-12):
        raise InvalidArgument("correlation matrix must have a unit diagonal")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise InvalidArgument("correlation matrix is not positive semi-definite")


def _correlation_factor(rho: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(rho)
    except np.linalg.LinAlgError:
        # semi-definite case (e.g. perfect correlation)
        w, v = np.linalg.eigh(rho)
        return v * np.sqrt(np.clip(w, 0.0, None))


def survival_probability(params: MarketParams, t: float) -> float:
    """Probability that neither party has defaulted by ``t``."""
    if t < 0:
        raise InvalidArgument(f"t must be non-negative, got {t}")
    return math.exp(-(params.intensity_A + params.intensity_B) * t)


@dataclass(frozen=True)
class DefaultInfo:
    """First-default summary per path.

    ``node[p]`` is the first grid index with ``t_k >= tau`` (``N + 1`` if
    ``tau > T``); ``party[p]`` is :data:`PARTY_A`, :data:`PARTY_B` or
    :data:`NO_DEFAULT`.
    """

    node: np.ndarray
    party: np.ndarray
    ties: int

    def alive(self, k: int) -> np.ndarray:
        return self.node > k


@dataclass(frozen=True, eq=False)
class ScenarioPanel:
    """Immutable per-path, per-node simulated state.

    Arrays have shape ``(P, N + 1)`` except ``tau_*`` of shape ``(P,)`` and
    ``brownian_increments`` of shape ``(P, N, d)``.
    """

    grid: TimeGrid
    spot: np.ndarray
    short_rate: np.ndarray
    bank_account: np.ndarray
    tau_A: np.ndarray
    tau_B: np.ndarray
    brownian_increments: np.ndarray
    seed: int = 0
    stochastic_rate: bool = False

    def __post_init__(self):
        P, n1 = self.spot.shape
        if n1 != self.grid.steps + 1:
            raise InvalidArgument("panel arrays do not match the grid")
        for name in ("short_rate", "bank_account"):
            if getattr(self, name).shape != (P, n1):
                raise InvalidArgument(f"{name} has shape {getattr(self, name).shape}, expected {(P, n1)}")
        for name in ("tau_A", "tau_B"):
            if getattr(self, name).shape != (P,):
                raise InvalidArgument(f"{name} must have shape ({P},)")
        if self.brownian_increments.ndim != 3 or self.brownian_increments.shape[:2] != (P, n1 - 1):
            raise InvalidArgument("brownian_increments must have shape (P, N, d)")
        for name in ("spot", "short_rate", "bank_account", "tau_A", "tau_B", "brownian_increments"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def path_count(self) -> int:
        return self.spot.shape[0]

    @property
    def steps(self) -> int:
        return self.grid.steps

    @property
    def noise_dim(self) -> int:
        return self.brownian_increments.shape[2]

    @property
    def tau(self) -> np.ndarray:
        return np.minimum(self.tau_A, self.tau_B)

    @property
    def survival_A(self) -> np.ndarray:
        return (self.grid.nodes[None, :] < self.tau_A[:, None]).astype(np.int8)

    @property
    def survival_B(self) -> np.ndarray:
        return (self.grid.nodes[None, :] < self.tau_B[:, None]).astype(np.int8)

    @property
    def survival(self) -> np.ndarray:
        return (self.grid.nodes[None, :] < self.tau[:, None]).astype(np.int8)

    def state(self, k: int, paths: np.ndarray | None = None) -> np.ndarray:
        """Regression state at node ``k``: spot, plus short rate when stochastic."""
        cols = [self.spot[:, k]]
        if self.stochastic_rate:
            cols.append(self.short_rate[:, k])
        x = np.column_stack(cols)
        return x if paths is None else x[paths]

    def default_info(self) -> DefaultInfo:
        nodes = self.grid.nodes
        tau = self.tau
        node = np.searchsorted(nodes, tau, side="left")
        node = np.where(tau <= self.grid.maturity, node, self.steps + 1)
        node = np.where(np.isfinite(tau), node, self.steps + 1).astype(np.int64)
        defaulted = node <= self.steps
        ties = defaulted & (self.tau_A == self.tau_B)
        # simultaneous defaults are attributed to counterparty B
        party = np.where(self.tau_A < self.tau_B, PARTY_A, PARTY_B)
        party = np.where(defaulted, party, NO_DEFAULT).astype(np.int8)
        return DefaultInfo(node=node, party=party, ties=int(ties.sum()))

    def with_default_times(self, tau_A=None, tau_B=None) -> "ScenarioPanel":
        """Copy of the panel with default times overridden (for constructed scenarios)."""
        P = self.path_count
        ta = self.tau_A if tau_A is None else np.broadcast_to(np.asarray(tau_A, float), (P,)).copy()
        tb = self.tau_B if tau_B is None else np.broadcast_to(np.asarray(tau_B, float), (P,)).copy()
        return ScenarioPanel(
            grid=self.grid,
            spot=self.spot,
            short_rate=self.short_rate,
            bank_account=self.bank_account,
            tau_A=ta,
            tau_B=tb,
            brownian_increments=self.brownian_increments,
            seed=self.seed,
            stochastic_rate=self.stochastic_rate,
        )

    def subset(self, paths: Sequence[int] | slice) -> "ScenarioPanel":
        return ScenarioPanel(
            grid=self.grid,
            spot=self.spot[paths],
            short_rate=self.short_rate[paths],
            bank_account=self.bank_account[paths],
            tau_A=self.tau_A[paths],
            tau_B=self.tau_B[paths],
            brownian_increments=self.brownian_increments[paths],
            seed=self.seed,
            stochastic_rate=self.stochastic_rate,
        )

    # -- serialization -------------------------------------------------
    _FIELDS = ("spot", "short_rate", "bank_account", "tau_A", "tau_B", "brownian_increments")

    def to_bytes(self) -> bytes:
        header = {
            "seed": int(self.seed),
            "P": self.path_count,
            "N": self.steps,
            "T": self.grid.maturity,
            "d": self.noise_dim,
            "stochastic_rate": bool(self.stochastic_rate),
            "fields": [[name, list(getattr(self, name).shape)] for name in self._FIELDS],
        }
        head = json.dumps(header, sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(struct.pack("<I", len(head)))
        buf.write(head)
        for name in self._FIELDS:
            buf.write(np.asarray(getattr(self, name), dtype="<f8").tobytes(order="C"))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ScenarioPanel":
        if data[:8] != _MAGIC:
            raise InvalidArgument("not a panel file")
        (n,) = struct.unpack("<I", data[8:12])
        header = json.loads(data[12 : 12 + n])
        offset = 12 + n
        arrays = {}
        for name, shape in header["fields"]:
            count = int(np.prod(shape))
            arrays[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
            offset += 8 * count
        return cls(
            grid=TimeGrid(header["T"], header["N"]),
            seed=header["seed"],
            stochastic_rate=header["stochastic_rate"],
            **arrays,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioPanel":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, paths: Sequence[int]) -> str:
        """Long-format CSV of the selected paths, one row per (path, node)."""
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["path", "node", "t", "spot", "short_rate", "bank_account", "survival_A", "survival_B"])
        sa, sb = self.survival_A, self.survival_B
        t = self.grid.nodes
        for p in paths:
            for k in range(self.steps + 1):
                w.writerow(
                    [p, k, repr(float(t[k])), repr(float(self.spot[p, k])), repr(float(self.short_rate[p, k])),
                     repr(float(self.bank_account[p, k])), int(sa[p, k]), int(sb[p, k])]
                )
        return out.getvalue()


def _simulate_block(params: MarketParams, grid: TimeGrid, seed: int, block: int, n: int, factor: np.ndarray):
    N, dt, d = grid.steps, grid.dt, params.noise_dim
    normals = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block, _NORMAL_STREAM)))
    expos = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block, _EXPONENTIAL_STREAM)))
    z = normals.standard_normal((n, N, d))
    dW = (z @ factor.T) * math.sqrt(dt)
    e = expos.standard_exponential((n, 2))

    rm = params.short_rate
    r = np.empty((n, N + 1))
    r[:, 0] = rm.r0
    if rm.stochastic:
        level = rm.r0 if rm.level is None else rm.level
        for k in range(N):
            r[:, k + 1] = r[:, k] + rm.speed * (level - r[:, k]) * dt + rm.vol * dW[:, k, 1]
    else:
        r[:, 1:] = rm.r0

    bank = np.ones((n, N + 1))
    bank[:, 1:] = np.exp(np.cumsum(r[:, :-1] * dt, axis=1))

    sigma = params.spot_vol
    drift = r[:, :-1] if params.spot_drift is None else np.full((n, N), params.spot_drift)
    log_inc = (drift - 0.5 * sigma * sigma) * dt + sigma * dW[:, :, 0]
    spot = np.empty((n, N + 1))
    spot[:, 0] = params.spot0
    spot[:, 1:] = params.spot0 * np.exp(np.cumsum(log_inc, axis=1))

    with np.errstate(divide="ignore", over="ignore"):
        tau_A = e[:, 0] / params.intensity_A if params.intensity_A > 0 else np.full(n, np.inf)
        tau_B = e[:, 1] / params.intensity_B if params.intensity_B > 0 else np.full(n, np.inf)
    return spot, r, bank, tau_A, tau_B, dW


def simulate_panel(params: MarketParams, grid: TimeGrid, P: int, seed: int, workers: int = 1) -> ScenarioPanel:
    """Simulate ``P`` paths on ``grid`` under the pricing measure.

    Spot is log-Euler GBM, the short rate constant or Euler mean-reverting,
    default times are ``E_i / lambda_i`` with ``E_i`` standard exponential.
    The result is identical for any ``workers``.
    """
    if int(P) != P or P < 1:
        raise InvalidArgument(f"path count must be a positive integer, got {P}")
    P = int(P)
    rho = params.correlation_matrix()
    validate_correlation(rho, params.noise_dim)
    factor = _correlation_factor(rho)

    starts = list(range(0, P, BLOCK_SIZE))
    jobs = [(b, min(BLOCK_SIZE, P - s)) for b, s in enumerate(starts)]

    def run(job):
        return _simulate_block(params, grid, seed, job[0], job[1], factor)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]

    spot, r, bank, tau_A, tau_B, dW = (np.concatenate(x, axis=0) for x in zip(*parts))
    return ScenarioPanel(
        grid=grid,
        spot=spot,
        short_rate=r,
        bank_account=bank,
        tau_A=tau_A,
        tau_B=tau_B,
        brownian_increments=dW,
        seed=int(seed),
        stochastic_rate=params.short_rate.stochastic,
    )
