"""Benchmark and decarbonized index construction.

Two constructions are supported:

* drop-k (``DI_1``): the ``k`` highest-carbon constituents get weight zero and
  the rest are reweighted to minimize the risk objective;
* carbon cap (``DI_2``): every constituent stays eligible but the portfolio
  footprint may not exceed ``c_rel`` times the benchmark footprint.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from .data import ModelKind, Universe
from .errors import DimensionMismatch, InfeasibleProblem
from .factors import FactorModelFit, assemble_covariance
from .optimizer import PortfolioProblem, Solution, Status, Tolerances, solve
from .risk import RiskKind, RiskParams, portfolio_risk, risk_multiplier

logger = logging.getLogger(__name__)

DEFAULT_C_GRID = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
TIE_TOL = 1e-12


@dataclass(frozen=True)
class DropK:
    k: int

    @property
    def label(self) -> str:
        return f"DI_1(k={self.k})"


@dataclass(frozen=True)
class CarbonCap:
    c_rel: float

    @property
    def label(self) -> str:
        return f"DI_2(C={self.c_rel:g})"


@dataclass(frozen=True)
class IndexSpec:
    method: Union[DropK, CarbonCap]
    risk_kind: RiskKind = RiskKind.VAR
    params: RiskParams = RiskParams()

    def __post_init__(self):
        object.__setattr__(self, "risk_kind", RiskKind.parse(self.risk_kind))
        m = self.method
        if isinstance(m, DropK):
            if m.k < 1:
                raise ValueError(f"k must be at least 1, got {m.k}")
        elif isinstance(m, CarbonCap):
            if not 0.0 < m.c_rel <= 1.0:
                raise ValueError(f"c_rel must be in (0,1], got {m.c_rel}")
        else:
            raise TypeError(f"unknown index method {m!r}")

    @property
    def label(self) -> str:
        return f"{self.method.label} {self.risk_kind.value.upper()}"

    def check(self, n_assets: int):
        if isinstance(self.method, DropK) and self.method.k > n_assets - 2:
            raise ValueError(f"k={self.method.k} leaves fewer than 2 of {n_assets} assets")


@dataclass(frozen=True)
class DecarbonizedIndex:
    weights: np.ndarray
    spec: IndexSpec
    window: tuple
    risk_value: float
    footprint: float
    benchmark_footprint: float
    tickers: tuple[str, ...]
    status: Status
    kkt_residual: float

    def weights_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"ticker": self.tickers, "weight": self.weights})


# ------------------------------------------------------------------ basics

def benchmark_weights(universe: Universe) -> np.ndarray:
    """Cap-proportional weights; the last element absorbs rounding."""
    caps = universe.market_caps
    w = caps / caps.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return w


def rank_by_carbon(universe: Universe) -> list[int]:
    """Asset indices from highest to lowest carbon, ties by ticker."""
    carbon = universe.carbon
    tickers = universe.tickers
    return sorted(range(universe.n_assets), key=lambda i: (-carbon[i], tickers[i]))


def portfolio_footprint(w, universe: Universe) -> float:
    w = np.asarray(w, dtype=float)
    if w.shape != (universe.n_assets,):
        raise DimensionMismatch(f"weights {w.shape} for {universe.n_assets} assets")
    return float(universe.carbon @ w)


class _Context:
    """Quantities shared by every construction on one (universe, fit) pair."""

    def __init__(self, universe: Universe, fit: FactorModelFit, sigma=None):
        if tuple(fit.tickers) != universe.tickers:
            raise DimensionMismatch("factor fit and universe list different assets")
        self.universe = universe
        self.fit = fit
        self.sigma = assemble_covariance(fit) if sigma is None else sigma
        self.bench = benchmark_weights(universe)
        self.carbon = universe.carbon
        self.bench_footprint = float(self.carbon @ self.bench)

    def problem(self, risk_kind, params, pinned=(), cap=None) -> PortfolioProblem:
        return PortfolioProblem(
            mu=self.fit.mu, sigma=self.sigma,
            multiplier=risk_multiplier(risk_kind, params.p),
            mean_sign=params.mean_sign, pinned=frozenset(pinned),
            carbon=None if cap is None else self.carbon, cap=cap)

    def finish(self, sol: Solution, spec: IndexSpec) -> DecarbonizedIndex:
        return DecarbonizedIndex(
            weights=sol.weights, spec=spec, window=self.fit.window, risk_value=sol.objective,
            footprint=float(self.carbon @ sol.weights), benchmark_footprint=self.bench_footprint,
            tickers=self.universe.tickers, status=sol.status, kkt_residual=sol.kkt_residual)


def benchmark_risk(universe: Universe, fit: FactorModelFit, risk_kind, params: RiskParams,
                   sigma=None) -> float:
    ctx = _Context(universe, fit, sigma)
    return portfolio_risk(risk_kind, ctx.bench, fit.mu, ctx.sigma, params)


def optimal_portfolio(universe: Universe, fit: FactorModelFit, risk_kind, params: RiskParams,
                      tolerances: Tolerances = Tolerances(), sigma=None) -> Solution:
    """Risk-minimizing weights with no carbon constraint (the k = 0 baseline)."""
    ctx = _Context(universe, fit, sigma)
    return solve(ctx.problem(risk_kind, params), tolerances, start=ctx.bench)


def build_di1(universe: Universe, fit: FactorModelFit, k: int, risk_kind=RiskKind.VAR,
              params: RiskParams = RiskParams(), tolerances: Tolerances = Tolerances(),
              sigma=None) -> DecarbonizedIndex:
    """Pin the ``k`` highest emitters to zero and minimize the risk objective."""
    spec = IndexSpec(DropK(int(k)), risk_kind, params)
    spec.check(universe.n_assets)
    ctx = _Context(universe, fit, sigma)
    pinned = rank_by_carbon(universe)[:k]
    sol = solve(ctx.problem(spec.risk_kind, params, pinned=pinned), tolerances, start=ctx.bench)
    out = ctx.finish(sol, spec)
    if out.footprint > out.benchmark_footprint:
        logger.warning("%s footprint %.6g exceeds the benchmark's %.6g", spec.label,
                       out.footprint, out.benchmark_footprint)
    return out


def build_di2(universe: Universe, fit: FactorModelFit, c_rel: float, risk_kind=RiskKind.VAR,
              params: RiskParams = RiskParams(), tolerances: Tolerances = Tolerances(),
              sigma=None) -> DecarbonizedIndex:
    """Minimize the risk objective with footprint <= c_rel * benchmark footprint."""
    spec = IndexSpec(CarbonCap(float(c_rel)), risk_kind, params)
    ctx = _Context(universe, fit, sigma)
    cap = spec.method.c_rel * ctx.bench_footprint
    if ctx.carbon.min() > cap:
        raise InfeasibleProblem(
            f"carbon cap infeasible: c_rel={c_rel:g} is below the cleanest asset's "
            f"share {ctx.carbon.min() / ctx.bench_footprint:.4g} of the benchmark footprint")
    sol = solve(ctx.problem(spec.risk_kind, params, cap=cap), tolerances, start=ctx.bench)
    return ctx.finish(sol, spec)


def build_index(universe: Universe, fit: FactorModelFit, spec: IndexSpec,
                tolerances: Tolerances = Tolerances(), sigma=None) -> DecarbonizedIndex:
    if isinstance(spec.method, DropK):
        return build_di1(universe, fit, spec.method.k, spec.risk_kind, spec.params, tolerances, sigma)
    return build_di2(universe, fit, spec.method.c_rel, spec.risk_kind, spec.params, tolerances, sigma)


# ------------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class SweepResult:
    parameter: str
    table: pd.DataFrame
    best: float | int | None

    def to_csv(self, path) -> Path:
        path = Path(path)
        fmt = self.table.copy()
        for col in ("risk_value", "footprint"):
            fmt[col] = [("" if not np.isfinite(v) else f"{v:.10g}") for v in fmt[col]]
        fmt.to_csv(path, index=False, lineterminator="\n")
        return path


def default_k_grid(n_assets: int, points: int = 10) -> list[int]:
    """About ``points`` integers from ceil(5% N) to floor(50% N), capped at N - 2."""
    lo = max(1, math.ceil(0.05 * n_assets))
    hi = min(max(lo, math.floor(0.50 * n_assets)), n_assets - 2)
    if hi < lo:
        return [lo] if lo <= n_assets - 2 else []
    return sorted({int(round(v)) for v in np.linspace(lo, hi, points)})


def _run_grid(fn, grid, jobs: int):
    def one(value):
        try:
            return fn(value), None
        except InfeasibleProblem as exc:
            return None, exc
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, grid))
    return [one(v) for v in grid]


def _table(name, grid, results):
    rows = []
    for value, (idx, exc) in zip(grid, results):
        if idx is None:
            rows.append((value, np.nan, np.nan, Status.INFEASIBLE.value))
        else:
            rows.append((value, idx.risk_value, idx.footprint, idx.status.value))
    return pd.DataFrame(rows, columns=[name, "risk_value", "footprint", "status"])


def sweep_k(universe: Universe, fit: FactorModelFit, grid: Sequence[int] | None = None,
            risk_kind=RiskKind.VAR, params: RiskParams = RiskParams(),
            tolerances: Tolerances = Tolerances(), jobs: int = 1) -> SweepResult:
    """Build DI_1 for each k; the best k minimizes risk, ties going to the smaller k."""
    grid = default_k_grid(universe.n_assets) if grid is None else [int(k) for k in grid]
    if not grid:
        raise ValueError("empty k grid")
    sigma = assemble_covariance(fit)
    results = _run_grid(
        lambda k: build_di1(universe, fit, k, risk_kind, params, tolerances, sigma), grid, jobs)
    table = _table("k", grid, results)
    ok = table[table.status == Status.CONVERGED.value]
    best = None
    if len(ok):
        floor = ok.risk_value.min()
        best = int(ok[ok.risk_value <= floor + TIE_TOL].k.min())
    return SweepResult("k", table, best)


def elbow_choice(values, risks, elbow_tol: float = 0.01):
    """Smallest value whose risk is within ``elbow_tol * |min risk|`` of the minimum."""
    values = np.asarray(values, dtype=float)
    risks = np.asarray(risks, dtype=float)
    ok = np.isfinite(risks)
    if not ok.any():
        return None
    floor = risks[ok].min()
    good = ok & (risks - floor <= elbow_tol * abs(floor) + TIE_TOL)
    return float(values[good].min())


def sweep_c(universe: Universe, fit: FactorModelFit, grid: Sequence[float] = DEFAULT_C_GRID,
            risk_kind=RiskKind.VAR, params: RiskParams = RiskParams(),
            tolerances: Tolerances = Tolerances(), elbow_tol: float = 0.01,
            jobs: int = 1) -> SweepResult:
    """Build DI_2 for each relative cap; pick the elbow of the risk curve.

    Infeasible caps are kept in the table with status ``infeasible`` and
    ignored by the selection rule.
    """
    grid = [float(c) for c in grid]
    if not grid:
        raise ValueError("empty c_rel grid")
    sigma = assemble_covariance(fit)
    results = _run_grid(
        lambda c: build_di2(universe, fit, c, risk_kind, params, tolerances, sigma), grid, jobs)
    table = _table("c_rel", grid, results)
    risks = np.where(table.status == Status.CONVERGED.value, table.risk_value, np.nan)
    return SweepResult("c_rel", table, elbow_choice(table.c_rel, risks, elbow_tol))


# ------------------------------------------------------------------ presets

@dataclass(frozen=True)
class Preset:
    """Published optimal (k, C) for one benchmark / proxy / risk measure."""

    name: str
    market: str
    model_kind: ModelKind
    proxy: str
    risk_kind: RiskKind
    k: int
    c_rel: float
    p: float = 0.95


def _presets():
    table = {
        # market: (model, {(risk, proxy): (k, C)})
        "nifty50": (ModelKind.FOUR, {("var", "ghg"): (1, 0.95), ("var", "co2"): (2, 0.95),
                                     ("es", "ghg"): (1, 0.95), ("es", "co2"): (2, 0.95)}),
        "sp500": (ModelKind.FIVE, {("var", "ghg"): (48, 0.85), ("var", "co2"): (32, 0.95),
                                   ("es", "ghg"): (16, 0.95), ("es", "co2"): (32, 0.95)}),
    }
    out = {}
    for market, (kind, entries) in table.items():
        short = "nifty" if market == "nifty50" else "sp500"
        for (risk, proxy), (k, c) in entries.items():
            name = f"{short}-{proxy}-{risk}"
            out[name] = Preset(name, market, kind, proxy.upper(), RiskKind(risk), k, c)
    return out


PRESETS = _presets()
