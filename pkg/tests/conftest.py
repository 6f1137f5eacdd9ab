import numpy as np
import pandas as pd
import pytest

from decarb.data import AssetRecord, FactorPanel, ModelKind, assemble_universe
from decarb.factors import FactorModelFit


def make_universe(closes, caps, carbon, tickers=None, proxy="GHG", model_kind="four", seed=0,
                  start="2021-01-04"):
    """Small universe from a (dates x assets) close matrix and per-asset caps/carbon.

    Factor series are seeded noise on the same calendar; they only matter for
    tests that fit the model.
    """
    closes = np.asarray(closes, dtype=float)
    n_days, n = closes.shape
    tickers = tickers or [chr(ord("A") + i) for i in range(n)]
    dates = pd.bdate_range(start, periods=n_days)
    kind = ModelKind.parse(model_kind)
    rng = np.random.default_rng(seed)
    F = pd.DataFrame(rng.normal(0, 0.01, (n_days, len(kind.columns))), index=dates,
                     columns=list(kind.columns))
    rf = pd.Series(0.0, index=dates)
    assets = [AssetRecord(t, pd.Series(closes[:, i], index=dates), caps[i], {proxy: carbon[i]})
              for i, t in enumerate(tickers)]
    return assemble_universe(assets, FactorPanel(kind, F, rf), proxy)


def fake_fit(universe, mu=None, k=4):
    """A FactorModelFit with given mean; covariance is supplied separately as ``sigma``."""
    n = universe.n_assets
    mu = np.zeros(n) if mu is None else np.asarray(mu, dtype=float)
    cal = universe.returns.index
    return FactorModelFit(mu=mu.copy(), alpha=np.zeros(n), beta=np.zeros((n, k)), omega=np.eye(k),
                          delta=np.ones(n), r_squared=np.zeros(n), window=(cal[0], cal[-1]),
                          model_kind=universe.factors.model_kind, tickers=universe.tickers,
                          factor_names=universe.factors.columns, n_obs=len(cal))


def random_walk(n_days, n_assets, seed=0, vol=0.01):
    rng = np.random.default_rng(seed)
    steps = 1.0 + rng.normal(0.0003, vol, (n_days - 1, n_assets))
    return 100.0 * np.vstack([np.ones(n_assets), np.cumprod(steps, axis=0)])


@pytest.fixture
def tiny_universe():
    return make_universe(random_walk(60, 3, seed=3), caps=[2.0, 3.0, 5.0], carbon=[5.0, 9.0, 1.0])


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
