"""Regression Monte Carlo pricing and hedging of defaultable claims under a switching CSA."""

from .claim import ClaimSpec, Coupon, PriceSurface, clean_dividends, clean_price, risky_dividends, risky_price
from .csa import (
    CsaSpec,
    bcva,
    collateral,
    contingent_bcva,
    contingent_collateral,
    funding_rate,
)
from .engine import PricingResult, RunConfig, emit_reports, load_config, run_pricing
from .errors import ConfigError, InvalidArgument, NumericalFailure, ReportWriteError
from .hedging import (
    AssetSpec,
    HedgingAssets,
    HedgeReport,
    check_self_financing,
    error_process,
    fit_hedge,
    simulate_gains,
    wealth_step,
)
from .market import MarketParams, ScenarioPanel, ShortRateModel, TimeGrid, build_time_grid, simulate_panel, survival_probability
from .rbsde import (
    RbsdeProblem,
    RbsdeSolution,
    SwitchingPolicy,
    extract_policy,
    snell_value,
    solve_single_rbsde,
    solve_switching_system,
)
from .regression import RegressionSpec

__version__ = "0.1.0"

__all__ = [
    "AssetSpec",
    "ClaimSpec",
    "ConfigError",
    "Coupon",
    "CsaSpec",
    "HedgeReport",
    "HedgingAssets",
    "InvalidArgument",
    "MarketParams",
    "NumericalFailure",
    "PriceSurface",
    "PricingResult",
    "RbsdeProblem",
    "RbsdeSolution",
    "RegressionSpec",
    "ReportWriteError",
    "RunConfig",
    "ScenarioPanel",
    "ShortRateModel",
    "SwitchingPolicy",
    "TimeGrid",
    "bcva",
    "build_time_grid",
    "check_self_financing",
    "clean_dividends",
    "clean_price",
    "collateral",
    "contingent_bcva",
    "contingent_collateral",
    "emit_reports",
    "error_process",
    "extract_policy",
    "fit_hedge",
    "funding_rate",
    "load_config",
    "risky_dividends",
    "risky_price",
    "run_pricing",
    "simulate_gains",
    "simulate_panel",
    "snell_value",
    "solve_single_rbsde",
    "solve_switching_system",
    "survival_probability",
    "wealth_step",
]
