"""Loading, validation and alignment of prices, caps, carbon and factor data.

Every file is consumed as-is; nothing is downloaded. A :class:`Universe` is the
aligned, immutable panel that the rest of the package works on.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    CalendarDisjoint,
    DataError,
    InsufficientData,
    MalformedFile,
    NonPositivePrice,
    UniverseTooSmall,
)

logger = logging.getLogger(__name__)

PROXIES = ("GHG", "CO2")


class ModelKind(str, Enum):
    FIVE = "five"
    FOUR = "four"

    @property
    def columns(self) -> tuple[str, ...]:
        return FACTOR_COLUMNS[self]

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, ModelKind):
            return value
        key = str(value).strip().lower()
        aliases = {"five": cls.FIVE, "5": cls.FIVE, "fivefactor": cls.FIVE,
                   "four": cls.FOUR, "4": cls.FOUR, "fourfactor": cls.FOUR}
        if key not in aliases:
            raise ValueError(f"unknown model kind {value!r} (expected five or four)")
        return aliases[key]


FACTOR_COLUMNS = {
    ModelKind.FIVE: ("MKT_RF", "SMB", "HML", "RMW", "CMA"),
    ModelKind.FOUR: ("SMB", "HML", "WML", "MF"),
}


def normalize_proxy(proxy: str) -> str:
    key = str(proxy).strip().upper()
    if key not in PROXIES:
        raise ValueError(f"unknown carbon proxy {proxy!r} (expected ghg or co2)")
    return key


@dataclass(frozen=True)
class AssetRecord:
    """One constituent: closing prices, a constant market cap and carbon proxies."""

    ticker: str
    closes: pd.Series
    market_cap: float
    carbon: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        closes = pd.Series(self.closes, dtype=float)
        closes.index = pd.DatetimeIndex(closes.index)
        if not closes.index.is_monotonic_increasing or closes.index.has_duplicates:
            raise MalformedFile(f"{self.ticker}: close dates must be strictly increasing")
        bad = closes[~(closes > 0)]
        if len(bad):
            raise NonPositivePrice(
                f"{self.ticker}: non-positive close {bad.iloc[0]!r} on {bad.index[0].date()}")
        if not (self.market_cap > 0):
            raise DataError(f"{self.ticker}: market cap must be positive, got {self.market_cap!r}")
        carbon = {}
        for k, v in dict(self.carbon).items():
            if v is None or (isinstance(v, float) and np.isnan(v)):
                continue
            if v < 0:
                raise DataError(f"{self.ticker}: negative carbon value for {k}")
            carbon[normalize_proxy(k)] = float(v)
        object.__setattr__(self, "closes", closes)
        object.__setattr__(self, "market_cap", float(self.market_cap))
        object.__setattr__(self, "carbon", MappingProxyType(carbon))


@dataclass(frozen=True)
class FactorPanel:
    model_kind: ModelKind
    series: pd.DataFrame
    risk_free: pd.Series

    def __post_init__(self):
        kind = ModelKind.parse(self.model_kind)
        cols = list(kind.columns)
        missing = [c for c in cols if c not in self.series.columns]
        if missing:
            raise MalformedFile(f"factor panel lacks columns {missing} for the {kind.value}-factor model")
        series = self.series[cols].astype(float)
        series.index = pd.DatetimeIndex(series.index)
        rf = pd.Series(self.risk_free, dtype=float)
        rf.index = pd.DatetimeIndex(rf.index)
        if not series.index.equals(rf.index):
            rf = rf.reindex(series.index)
        if series.isna().any().any() or rf.isna().any():
            raise MalformedFile("factor panel contains missing values")
        object.__setattr__(self, "model_kind", kind)
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "risk_free", rf)

    @property
    def columns(self) -> tuple[str, ...]:
        return self.model_kind.columns

    def align(self, dates: pd.DatetimeIndex) -> "FactorPanel":
        idx = pd.DatetimeIndex(dates)
        missing = idx.difference(self.series.index)
        if len(missing):
            raise CalendarDisjoint(f"factor data missing for {len(missing)} dates, first {missing[0].date()}")
        return FactorPanel(self.model_kind, self.series.loc[idx], self.risk_free.loc[idx])


@dataclass(frozen=True)
class MissingDataPolicy:
    max_gap_fraction: float = 0.10
    ffill_limit: int = 5
    # |simple return| above this is treated as a data error; None disables the check
    return_bound: float | None = None


@dataclass(frozen=True)
class CoverageStats:
    """Included / omitted counts and the omitted share of market cap."""

    included: int
    omitted: int
    included_cap: float
    omitted_cap: float
    omitted_reasons: Mapping[str, str]

    @property
    def total_cap(self) -> float:
        return self.included_cap + self.omitted_cap

    @property
    def omitted_cap_pct(self) -> float:
        return 100.0 * self.omitted_cap / self.total_cap


@dataclass(frozen=True)
class Universe:
    assets: tuple[AssetRecord, ...]
    closes: pd.DataFrame
    returns: pd.DataFrame
    factors: FactorPanel
    active_proxy: str
    coverage: CoverageStats

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(a.ticker for a in self.assets)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    @property
    def calendar(self) -> pd.DatetimeIndex:
        return self.closes.index

    @property
    def market_caps(self) -> np.ndarray:
        return np.array([a.market_cap for a in self.assets])

    @property
    def carbon(self) -> np.ndarray:
        """Carbon values for the active proxy, in asset order."""
        return np.array([a.carbon[self.active_proxy] for a in self.assets])

    def window_dates(self, start, end) -> pd.DatetimeIndex:
        idx = self.returns.index
        return idx[(idx >= pd.Timestamp(start)) & (idx <= pd.Timestamp(end))]


# ---------------------------------------------------------------- file readers

def _read_csv(path, required: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    df.columns = [c.strip().lower() for c in df.columns]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise MalformedFile(f"{path}: header lacks column(s) {', '.join(missing)}")
    return df


def _parse_dates(raw: pd.Series, path) -> pd.DatetimeIndex:
    dates = pd.to_datetime(raw.str.strip(), format="%Y-%m-%d", errors="coerce")
    bad = dates.isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise MalformedFile(f"{path}: unparseable date {raw.iloc[row]!r} on data row {row + 1}")
    return pd.DatetimeIndex(dates)


def _parse_floats(raw: pd.Series, path, what: str, allow_blank=False) -> np.ndarray:
    stripped = raw.str.strip()
    out = pd.to_numeric(stripped.replace("", np.nan) if allow_blank else stripped, errors="coerce")
    bad = out.isna() & ~(stripped.eq("") & allow_blank)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise MalformedFile(f"{path}: bad {what} value {raw.iloc[row]!r} on data row {row + 1}")
    return out.to_numpy(dtype=float)


def load_prices(path) -> dict[str, pd.Series]:
    """Read a long-format ``date,ticker,close`` file into per-ticker close series."""
    df = _read_csv(path, ("date", "ticker", "close"))
    dates = _parse_dates(df["date"], path)
    closes = _parse_floats(df["close"], path, "close")
    tickers = df["ticker"].str.strip()
    if (tickers == "").any():
        row = int(np.flatnonzero((tickers == "").to_numpy())[0])
        raise MalformedFile(f"{path}: empty ticker on data row {row + 1}")
    frame = pd.DataFrame({"date": dates, "ticker": tickers.to_numpy(), "close": closes})
    dup = frame.duplicated(["ticker", "date"])
    if dup.any():
        r = frame[dup].iloc[0]
        raise MalformedFile(f"{path}: duplicate date {r.date.date()} for ticker {r.ticker}")
    nonpos = frame[~(frame["close"] > 0)]
    if len(nonpos):
        r = nonpos.iloc[0]
        raise NonPositivePrice(f"{path}: close {r.close!r} for {r.ticker} on {r.date.date()}")
    out = {}
    for ticker, grp in frame.groupby("ticker", sort=True):
        out[ticker] = pd.Series(grp["close"].to_numpy(), index=pd.DatetimeIndex(grp["date"]),
                                name=ticker).sort_index()
    return out


def load_caps(path) -> dict[str, float]:
    df = _read_csv(path, ("ticker", "market_cap"))
    caps = _parse_floats(df["market_cap"], path, "market_cap")
    tickers = df["ticker"].str.strip().to_numpy()
    if len(set(tickers)) != len(tickers):
        raise MalformedFile(f"{path}: duplicate ticker")
    for t, c in zip(tickers, caps):
        if not c > 0:
            raise MalformedFile(f"{path}: market cap for {t} must be positive, got {c!r}")
    return dict(zip(tickers, caps.tolist()))


def load_carbon(path) -> dict[str, dict[str, float]]:
    """Read ``ticker,ghg,co2``; blank cells mean the proxy is missing."""
    df = _read_csv(path, ("ticker", "ghg", "co2"))
    ghg = _parse_floats(df["ghg"], path, "ghg", allow_blank=True)
    co2 = _parse_floats(df["co2"], path, "co2", allow_blank=True)
    out: dict[str, dict[str, float]] = {}
    for t, g, c in zip(df["ticker"].str.strip(), ghg, co2):
        if t in out:
            raise MalformedFile(f"{path}: duplicate ticker {t}")
        rec = {}
        for name, v in (("GHG", g), ("CO2", c)):
            if np.isnan(v):
                continue
            if v < 0:
                raise MalformedFile(f"{path}: negative {name} for {t}")
            rec[name] = float(v)
        out[t] = rec
    return out


def load_factors(path, model_kind) -> FactorPanel:
    """Read ``date,<factor columns>,rf``. All values are taken as decimal returns."""
    kind = ModelKind.parse(model_kind)
    df = _read_csv(path, ("date", "rf"))
    # factor names are matched case-insensitively
    needed = [c.lower() for c in kind.columns]
    missing = [c.upper() for c in needed if c not in df.columns]
    if missing:
        raise MalformedFile(f"{path}: header lacks factor column(s) {', '.join(missing)}")
    dates = _parse_dates(df["date"], path)
    if dates.has_duplicates:
        raise MalformedFile(f"{path}: duplicate date {dates[dates.duplicated()][0].date()}")
    data = {c.upper(): _parse_floats(df[c], path, c) for c in needed}
    series = pd.DataFrame(data, index=dates).sort_index()
    rf = pd.Series(_parse_floats(df["rf"], path, "rf"), index=dates).sort_index()
    return FactorPanel(kind, series, rf)


def build_assets(prices: Mapping[str, pd.Series], caps: Mapping[str, float],
                 carbon: Mapping[str, Mapping[str, float]]) -> list[AssetRecord]:
    """Join the three per-ticker sources. Tickers without a market cap are skipped."""
    assets = []
    for ticker in sorted(prices):
        if ticker not in caps:
            logger.warning("skipping %s: no market cap", ticker)
            continue
        assets.append(AssetRecord(ticker, prices[ticker], caps[ticker], carbon.get(ticker, {})))
    return assets


# ------------------------------------------------------------------- returns

def compute_returns(closes):
    """Simple returns ``(p_t - p_{t-1}) / p_{t-1}``; one shorter than the input."""
    if isinstance(closes, pd.Series):
        values = closes.to_numpy(dtype=float)
    else:
        values = np.asarray(closes, dtype=float)
    if values.ndim != 1 or len(values) < 2:
        raise InsufficientData("need at least two prices to form a return")
    if not np.all(values > 0):
        raise NonPositivePrice("prices must be strictly positive")
    rets = (values[1:] - values[:-1]) / values[:-1]
    if isinstance(closes, pd.Series):
        return pd.Series(rets, index=closes.index[1:], name=closes.name)
    return rets


def assemble_universe(assets: Iterable[AssetRecord], factors: FactorPanel, proxy: str,
                      policy: MissingDataPolicy | None = None) -> Universe:
    """Apply the missing-data policy and align assets with the factor calendar.

    Assets lacking the chosen carbon proxy, or missing more than
    ``policy.max_gap_fraction`` of the common calendar, are omitted. Remaining
    gaps are forward-filled up to ``policy.ffill_limit`` days and dates still
    incomplete are dropped for everyone.
    """
    policy = policy or MissingDataPolicy()
    proxy = normalize_proxy(proxy)
    assets = sorted(assets, key=lambda a: a.ticker)
    if len({a.ticker for a in assets}) != len(assets):
        raise DataError("duplicate tickers in asset list")

    reasons: dict[str, str] = {}
    keep = []
    for a in assets:
        if proxy not in a.carbon:
            reasons[a.ticker] = f"missing {proxy}"
        else:
            keep.append(a)

    if keep:
        union = keep[0].closes.index
        for a in keep[1:]:
            union = union.union(a.closes.index)
        ref = union.intersection(factors.series.index).sort_values()
    else:
        ref = pd.DatetimeIndex([])
    if keep and len(ref) == 0:
        raise CalendarDisjoint("asset and factor calendars do not intersect")

    survivors = []
    for a in keep:
        present = a.closes.index.isin(ref).sum()
        gap = 1.0 - present / len(ref)
        if gap > policy.max_gap_fraction:
            reasons[a.ticker] = f"{gap:.1%} of closes missing"
        else:
            survivors.append(a)

    if len(survivors) < 2:
        raise UniverseTooSmall(f"only {len(survivors)} asset(s) survive the missing-data policy")

    closes = pd.DataFrame({a.ticker: a.closes.reindex(ref) for a in survivors}, index=ref)
    closes = closes.ffill(limit=policy.ffill_limit).dropna(how="any")
    if len(closes) == 0:
        raise CalendarDisjoint("no date has a close for every surviving asset")
    if len(closes) < 2:
        raise InsufficientData("fewer than two common dates after alignment")

    vals = closes.to_numpy()
    rets = (vals[1:] - vals[:-1]) / vals[:-1]
    returns = pd.DataFrame(rets, index=closes.index[1:], columns=closes.columns)
    if policy.return_bound is not None:
        over = np.abs(rets) >= policy.return_bound
        if over.any():
            r, c = np.argwhere(over)[0]
            raise DataError(f"return {rets[r, c]:.4f} for {closes.columns[c]} on "
                            f"{returns.index[r].date()} exceeds the sanity bound")

    included_cap = float(sum(a.market_cap for a in survivors))
    omitted_cap = float(sum(a.market_cap for a in assets if a.ticker in reasons))
    coverage = CoverageStats(len(survivors), len(reasons), included_cap, omitted_cap,
                             MappingProxyType(dict(sorted(reasons.items()))))
    return Universe(tuple(survivors), closes, returns, factors.align(returns.index), proxy, coverage)


def load_universe(prices_path, caps_path, carbon_path, factors_path, model_kind, proxy,
                  policy: MissingDataPolicy | None = None) -> Universe:
    """Convenience wrapper: read the four input files and assemble a Universe."""
    factors = load_factors(factors_path, model_kind)
    assets = build_assets(load_prices(prices_path), load_caps(caps_path), load_carbon(carbon_path))
    return assemble_universe(assets, factors, proxy, policy)
