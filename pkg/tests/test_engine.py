import json
import math
import warnings
from pathlib import Path

import numpy as np
import pytest

from switchcsa.claim import ClaimSpec
from switchcsa.csa import CsaSpec
from switchcsa.engine import (
    BOOTSTRAP_BLOCKS,
    PricingResult,
    RunConfig,
    block_bootstrap_se,
    emit_reports,
    load_config,
    render_reports,
    run_pricing,
    switch_frequency_rows,
)
from switchcsa.errors import ConfigError, NumericalFailure, ReportWriteError
from switchcsa.market import MarketParams, ShortRateModel
from switchcsa.oracles import LatticeToy, lattice_dp
from switchcsa.rbsde import REGIME_Z, extract_policy, solve_switching_system
from switchcsa.regression import RegressionSpec

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "forward_switching.yaml"


def small(cfg: RunConfig, **kw) -> RunConfig:
    return cfg.with_overrides(**{"paths": 4000, "steps": 20, **kw})


@pytest.fixture(scope="module")
def base_config():
    return load_config(CONFIG, env={})


@pytest.fixture(scope="module")
def base_result(base_config):
    return run_pricing(small(base_config))


# -- config ------------------------------------------------------------------


def test_shipped_config_loads(base_config):
    assert base_config.csa.cost_z == 0.05 and base_config.claim.payoff == "forward"
    assert base_config.paths == 20000 and base_config.initial_regime == "z"
    assert [a.name for a in base_config.assets] == ["spot", "default_A", "default_B"]


def test_yaml_round_trip(base_config):
    again = RunConfig.from_yaml(base_config.to_yaml())
    assert again == base_config


def test_infinite_cost_sentinel_round_trip(base_config):
    cfg = base_config.with_overrides(csa=CsaSpec(cost_z=math.inf, cost_zeta=0.1))
    text = cfg.to_yaml()
    assert "cost_z: inf" in text
    assert RunConfig.from_yaml(text).csa.cost_z == math.inf


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown keys in config"):
        RunConfig.from_yaml("pathz: 10")
    with pytest.raises(ConfigError, match="market"):
        RunConfig.from_yaml("market: {spot_volatility: 0.2}")


def test_invalid_values_are_config_errors():
    with pytest.raises(ConfigError):
        RunConfig.from_yaml("csa: {mta: -1}")
    with pytest.raises(ConfigError):
        RunConfig.from_yaml("initial_regime: both")
    with pytest.raises(ConfigError):
        RunConfig.from_yaml("grid: {maturity: 1, steps: 1}")
    with pytest.raises(ConfigError):
        RunConfig.from_yaml("market: [1, 2")


def test_seed_environment_override(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("seed: 3\n")
    assert load_config(f, env={}).seed == 3
    assert load_config(f, env={"SWITCHCSA_SEED": "99"}).seed == 99
    with pytest.raises(ConfigError):
        load_config(f, env={"SWITCHCSA_SEED": "x"})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml", env={})


def test_scalar_short_rate():
    cfg = RunConfig.from_yaml("market: {short_rate: 0.03}")
    assert cfg.market.short_rate.r0 == 0.03 and cfg.market.short_rate.vol == 0.0


# -- run_pricing -------------------------------------------------------------


def test_decomposition_sums_exactly(base_result):
    r = base_result
    assert r.total == r.value_z + r.value_zeta
    for name in ("total", "value_z", "value_zeta", "clean", "bcva", "funding_adjustment"):
        assert getattr(r, f"{name}_stderr") >= 0


def test_result_contents(base_result):
    r = base_result
    assert r.switch_stats["total"] > 0
    assert len(r.switch_stats["time_histogram"]) == 21
    assert set(r.hedge_variances) == {"z", "zeta", "pooled", "policy"}
    assert r.self_financing["initial_ok"]
    assert "output_dir" not in r.config and "workers" not in r.config
    for regime in ("z", "zeta"):
        d = r.diagnostics["rbsde"][regime]
        assert d["obstacle_violation"] == 0.0 and d["complementarity_residual"] == 0.0
    assert abs(r.total - r.diagnostics["model_total"]) < 3 * r.total_stderr


def test_valueless_symmetric_forward(base_config):
    market = MarketParams(spot0=100, spot_vol=0.0, short_rate=ShortRateModel.constant(0.0))
    cfg = small(base_config, market=market, claim=ClaimSpec("forward", strike=100.0))
    r = run_pricing(cfg)
    assert abs(r.total) < 1e-10
    assert r.switch_stats["total"] == 0


def test_infinite_costs_start_z(base_config):
    cfg = small(base_config, csa=CsaSpec(), paths=20000)
    r = run_pricing(cfg)
    assert r.switch_stats["total"] == 0 and r.value_zeta == 0.0
    assert abs(r.total - (r.clean_0 + r.bcva_0)) < 3 * r.total_stderr


def test_infinite_costs_start_zeta_no_spreads(base_config):
    m = base_config.market
    market = MarketParams(**{**m.__dict__, "borrow_spread": 0.0, "collateral_remuneration": 0.0,
                             "opportunity_premium": 0.0, "counterparty_remuneration": 0.0})
    r = run_pricing(small(base_config, csa=CsaSpec(), market=market, initial_regime="zeta"))
    assert r.value_z == 0.0
    assert abs(r.total - r.clean_0) < 3 * r.total_stderr


def test_free_switching_between_identical_regimes(base_config):
    market = MarketParams(spot0=100, spot_vol=0.25, short_rate=ShortRateModel.constant(0.02))
    cfg = small(base_config, market=market, csa=CsaSpec(cost_z=0.0, cost_zeta=0.0))
    with pytest.warns(UserWarning, match="zero switching costs"):
        r = run_pricing(cfg)
    assert r.switch_stats["total"] == 0
    assert r.regime_values["z"] == r.regime_values["zeta"]
    assert abs(r.total - r.regime_values["z"]) < 3 * r.total_stderr


def test_deterministic_json(base_config):
    cfg = small(base_config, paths=3000)
    a = run_pricing(cfg).to_json()
    b = run_pricing(cfg).to_json()
    c = run_pricing(cfg.with_overrides(workers=3, output_dir="elsewhere")).to_json()
    assert a == b == c
    assert run_pricing(cfg.with_overrides(seed=cfg.seed + 1)).to_json() != a


def test_small_path_count_warns(base_config):
    with pytest.warns(UserWarning, match="production minimum"):
        run_pricing(small(base_config, paths=500))


def test_stage_labels_and_partial_flush(base_config, tmp_path):
    cfg = small(base_config, paths=3, output_dir=str(tmp_path / "out"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(NumericalFailure, match=r"^\[clean\] .*basis too rich"):
            run_pricing(cfg)
    log = json.loads((tmp_path / "out" / "partial_result.json").read_text())
    assert log["completed"] == ["simulate"] and log["failed"] == "clean"


def test_block_bootstrap():
    v = np.random.default_rng(0).normal(0, 1, 10000)
    se = block_bootstrap_se(v, 1)
    assert 0.7 * 0.01 < se < 1.3 * 0.01
    assert se == block_bootstrap_se(v, 1)
    assert block_bootstrap_se(np.ones(5), 1) == 0.0
    assert BOOTSTRAP_BLOCKS == 20


# -- reports -----------------------------------------------------------------


def test_json_round_trip(base_result):
    back = PricingResult.from_json(base_result.to_json())
    assert back == base_result
    assert back.to_json() == base_result.to_json()


def test_emit_reports(base_result, tmp_path):
    paths = emit_reports(base_result, tmp_path, emit_plots=True)
    names = {p.name for p in paths}
    assert names == {
        "result.json", "prices_by_node.csv", "collateral_by_node.csv", "bcva_by_node.csv",
        "switch_frequency.csv", "rbsde_diagnostics.json", "hedge_report.json", "plot_data.csv",
    }
    lines = (tmp_path / "prices_by_node.csv").read_text().splitlines()
    assert lines[0] == "node,t,clean,regime_z,regime_zeta" and len(lines) == 22
    assert "plot_data.csv" not in render_reports(base_result)


def test_no_switch_frequency_is_zero(base_config, tmp_path):
    r = run_pricing(small(base_config, csa=CsaSpec()))
    emit_reports(r, tmp_path)
    rows = (tmp_path / "switch_frequency.csv").read_text().splitlines()[1:]
    assert all(row.split(",")[2:] == ["0", "0", "0.0"] for row in rows)


def test_unwritable_output_keeps_buffers(base_result, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ReportWriteError) as e:
        emit_reports(base_result, blocker / "sub")
    assert json.loads(e.value.buffers["result.json"])["total"] == base_result.total


def test_lattice_switch_table_matches_dp():
    toy = LatticeToy()
    panel = toy.panel()
    pz, pq = toy.problems(panel)
    csa = CsaSpec(cost_z=toy.cost_z, cost_zeta=toy.cost_zeta)
    sz, sq = solve_switching_system(pz, pq, csa, panel, RegressionSpec())
    rows = switch_frequency_rows(extract_policy(sz, sq, csa, initial=REGIME_Z), panel.grid)
    dp = lattice_dp(toy, REGIME_Z)
    for row in rows:
        k = row["node"]
        into_z = sum(1 for sw in dp.switches.values() for node, reg in sw if node == k and reg == 1)
        into_q = sum(1 for sw in dp.switches.values() for node, reg in sw if node == k and reg == 0)
        assert (row["to_z"], row["to_zeta"]) == (into_z, into_q)
