import warnings

import numpy as np
import pytest

from switchcsa.market import MarketParams, ShortRateModel, build_time_grid, simulate_panel

# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_production_warning():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*below the production minimum.*")
        yield


@pytest.fixture(scope="session")
def gbm_params():
    return MarketParams(spot0=100.0, spot_vol=0.2, short_rate=ShortRateModel.constant(0.05))


@pytest.fixture(scope="session")
def small_panel(gbm_params):
    return simulate_panel(gbm_params, build_time_grid(1.0, 20), 4000, seed=11)


@pytest.fixture(scope="session")
def risky_params():
    return MarketParams(
        spot0=100.0,
        spot_vol=0.25,
        short_rate=ShortRateModel.constant(0.02),
        intensity_A=0.05,
        intensity_B=0.1,
        recovery_A=0.4,
        recovery_B=0.3,
    )


@pytest.fixture(scope="session")
def risky_panel(risky_params):
    return simulate_panel(risky_params, build_time_grid(1.0, 25), 20000, seed=5)


def rel(a, b):
    return abs(a - b) / abs(b)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def american_put_problem(panel, strike=100.0, r=0.05):
    from switchcsa.rbsde import RbsdeProblem

    L = np.maximum(strike - panel.spot, 0.0)
    return RbsdeProblem(L[:, -1], lambda k, x, y, n: -r * y, obstacle=L, lipschitz=r, label="american_put")
