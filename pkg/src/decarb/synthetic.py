"""Seeded synthetic markets generated from a known factor model.

Used by the demos and tests: the true loadings, factor covariance and
specific variances are returned alongside the data, and carbon intensity is
drawn positively correlated with each asset's total variance.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .data import AssetRecord, FactorPanel, MissingDataPolicy, ModelKind, Universe, assemble_universe


@dataclass
class SyntheticMarket:
    prices: dict[str, pd.Series]
    caps: dict[str, float]
    carbon: dict[str, dict[str, float]]
    factors: FactorPanel
    beta: np.ndarray
    omega: np.ndarray
    specific_var: np.ndarray

    @property
    def tickers(self) -> list[str]:
        return sorted(self.prices)

    def assets(self) -> list[AssetRecord]:
        return [AssetRecord(t, self.prices[t], self.caps[t], self.carbon.get(t, {})) for t in self.tickers]

    def universe(self, proxy: str = "GHG", policy: MissingDataPolicy | None = None) -> Universe:
        return assemble_universe(self.assets(), self.factors, proxy, policy)

    def write_csvs(self, directory) -> dict[str, Path]:
        """Write prices/caps/carbon/factors files in the package's input formats."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        rows = []
        for t in self.tickers:
            s = self.prices[t]
            rows.extend(f"{day:%Y-%m-%d},{t},{v:.6f}" for day, v in s.items())
        paths = {"prices": d / "prices.csv", "caps": d / "caps.csv",
                 "carbon": d / "carbon.csv", "factors": d / "factors.csv"}
        paths["prices"].write_text("date,ticker,close\n" + "\n".join(rows) + "\n")
        paths["caps"].write_text("ticker,market_cap\n" + "".join(
            f"{t},{self.caps[t]:.2f}\n" for t in self.tickers))

        def cell(t, k):
            v = self.carbon.get(t, {}).get(k)
            return "" if v is None else f"{v:.6f}"
        paths["carbon"].write_text("ticker,ghg,co2\n" + "".join(
            f"{t},{cell(t, 'GHG')},{cell(t, 'CO2')}\n" for t in self.tickers))
        f = self.factors.series
        cols = list(f.columns)
        lines = ["date," + ",".join(cols) + ",rf"]
        for day, row in f.iterrows():
            lines.append(f"{day:%Y-%m-%d}," + ",".join(f"{v:.10f}" for v in row)
                         + f",{self.factors.risk_free[day]:.10f}")
        paths["factors"].write_text("\n".join(lines) + "\n")
        return paths


def synthetic_market(n_assets: int = 20, n_days: int = 252 * 5, model_kind="five", seed: int = 0,
                     start: str = "2017-04-03", carbon_risk_corr: float = 0.8,
                     missing_proxy_frac: float = 0.0) -> SyntheticMarket:
    """Simulate daily closes from a K-factor model.

    ``carbon_risk_corr`` sets the correlation between log carbon intensity and
    the standardized total volatility of each asset.
    """
    rng = np.random.default_rng(seed)
    kind = ModelKind.parse(model_kind)
    cols = kind.columns
    K = len(cols)
    dates = pd.bdate_range(start, periods=n_days + 1)

    fvol = rng.uniform(0.003, 0.008, K)
    fcorr = np.eye(K)
    omega = np.outer(fvol, fvol) * fcorr
    fmean = rng.normal(0.0002, 0.0001, K)
    F = fmean + rng.standard_normal((n_days, K)) * fvol
    rf = np.full(n_days, 0.00008)

    beta = rng.normal(0.0, 0.4, (n_assets, K))
    mkt = cols.index("MKT_RF") if "MKT_RF" in cols else cols.index("MF")
    beta[:, mkt] += 1.0
    spec_vol = rng.uniform(0.006, 0.025, n_assets)
    alpha = rng.normal(0.0, 0.0002, n_assets)
    eps = rng.standard_normal((n_days, n_assets)) * spec_vol
    R = rf[:, None] + alpha + F @ beta.T + eps

    tickers = [f"S{i:04d}" for i in range(n_assets)]
    levels = rng.uniform(20, 200, n_assets) * np.vstack([np.ones(n_assets), np.cumprod(1.0 + R, axis=0)])
    prices = {t: pd.Series(levels[:, i], index=dates, name=t) for i, t in enumerate(tickers)}

    caps_raw = np.exp(rng.normal(10.0, 1.0, n_assets))
    caps = {t: float(c) for t, c in zip(tickers, caps_raw)}

    total_vol = np.sqrt(np.einsum("ik,kl,il->i", beta, omega, beta) + spec_vol ** 2)
    z = (total_vol - total_vol.mean()) / (total_vol.std() or 1.0)
    rho = carbon_risk_corr
    log_ghg = 4.0 + rho * z + np.sqrt(max(1.0 - rho * rho, 0.0)) * rng.standard_normal(n_assets)
    ghg = np.exp(log_ghg)
    co2 = ghg * caps_raw / caps_raw.mean() * 1e3
    carbon = {}
    drop = rng.random(n_assets) < missing_proxy_frac
    for i, t in enumerate(tickers):
        carbon[t] = {} if drop[i] else {"GHG": float(ghg[i]), "CO2": float(co2[i])}

    factors = FactorPanel(kind, pd.DataFrame(F, index=dates[1:], columns=list(cols)),
                          pd.Series(rf, index=dates[1:]))
    return SyntheticMarket(prices, caps, carbon, factors, beta, omega, spec_vol ** 2)
