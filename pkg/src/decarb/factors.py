"""Time-series factor regressions and the factor-structured covariance.

Each asset's excess return is regressed on the factor columns of the
universe's :class:`~decarb.data.FactorPanel`; the covariance used by the
optimizer is ``beta @ omega @ beta.T + diag(delta)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .data import ModelKind, Universe
from .errors import InsufficientObservations, NotPositiveDefinite, RankDeficient

DELTA_FLOOR = 1e-10
MAX_CONDITION = 1e10


@dataclass(frozen=True)
class FactorModelFit:
    """Per-asset loadings plus the moments needed to build mean and covariance.

    Attributes
    ----------
    mu : (N,) sample mean of raw (not excess) returns over the window
    alpha : (N,) regression intercepts, kept for diagnostics only
    beta : (N, K) factor loadings
    omega : (K, K) sample covariance of the factors (T-1 denominator)
    delta : (N,) residual variances floored at ``delta_floor``
    r_squared : (N,) in-sample R^2 of each regression
    """

    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    omega: np.ndarray
    delta: np.ndarray
    r_squared: np.ndarray
    window: tuple[pd.Timestamp, pd.Timestamp]
    model_kind: ModelKind
    tickers: tuple[str, ...]
    factor_names: tuple[str, ...]
    n_obs: int
    delta_floor: float = DELTA_FLOOR

    def __post_init__(self):
        n, k = self.beta.shape
        if self.omega.shape != (k, k) or self.delta.shape != (n,) or self.mu.shape != (n,):
            raise ValueError("inconsistent factor-model dimensions")
        for name in ("mu", "alpha", "beta", "omega", "delta", "r_squared"):
            getattr(self, name).flags.writeable = False

    @property
    def n_assets(self) -> int:
        return self.beta.shape[0]

    @property
    def n_factors(self) -> int:
        return self.beta.shape[1]


def _ols_many(Y: np.ndarray, X: np.ndarray):
    """Least squares of every column of Y on [1, X] via a single QR factorization."""
    T, K = X.shape
    if T < K + 2:
        raise InsufficientObservations(f"{T} observations for {K} regressors plus intercept; need {K + 2}")
    A = np.column_stack([np.ones(T), X])
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise RankDeficient(f"design matrix is numerically singular (condition number {cond:.3g})")
    Q, R = np.linalg.qr(A)
    coefs = np.linalg.solve(R, Q.T @ Y)
    resid = Y - A @ coefs
    ssr = np.sum(resid ** 2, axis=0)
    return coefs, ssr / (T - K - 1), resid


def fit_ols(y, X):
    """Regress ``y`` on ``X`` with an intercept.

    Returns ``(coefficients, residual_variance)`` where ``coefficients[0]`` is
    the intercept and ``residual_variance = SSR / (T - K - 1)``.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"y {y.shape} and X {X.shape} do not align")
    coefs, resvar, _ = _ols_many(y[:, None], X)
    return coefs[:, 0], float(resvar[0])


def fit_universe(universe: Universe, window=None, delta_floor: float = DELTA_FLOOR) -> FactorModelFit:
    """Fit the factor model for every asset over ``window`` (inclusive dates).

    ``window=None`` uses every return date of the universe.
    """
    if window is None:
        dates = universe.returns.index
    else:
        dates = universe.window_dates(*window)
    kind = universe.factors.model_kind
    K = len(kind.columns)
    if len(dates) < K + 2:
        raise InsufficientObservations(
            f"window has {len(dates)} return dates; the {kind.value}-factor model needs {K + 2}")
    R = universe.returns.loc[dates].to_numpy(dtype=float)
    F = universe.factors.series.loc[dates].to_numpy(dtype=float)
    rf = universe.factors.risk_free.loc[dates].to_numpy(dtype=float)
    excess = R - rf[:, None]

    try:
        coefs, resvar, _ = _ols_many(excess, F)
    except (RankDeficient, InsufficientObservations) as exc:
        raise type(exc)(f"{exc} (fitting {universe.n_assets} assets)") from exc

    centered = excess - excess.mean(axis=0)
    sst = np.sum(centered ** 2, axis=0)
    ssr = resvar * (len(dates) - K - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(sst > 0, 1.0 - ssr / sst, 1.0)

    omega = np.cov(F, rowvar=False, ddof=1).reshape(K, K)
    omega = 0.5 * (omega + omega.T)
    return FactorModelFit(
        mu=R.mean(axis=0),
        alpha=coefs[0].copy(),
        beta=coefs[1:].T.copy(),
        omega=omega,
        delta=np.maximum(resvar, delta_floor),
        r_squared=r2,
        window=(dates[0], dates[-1]),
        model_kind=kind,
        tickers=universe.tickers,
        factor_names=kind.columns,
        n_obs=len(dates),
        delta_floor=delta_floor,
    )


def assemble_covariance(fit: FactorModelFit) -> np.ndarray:
    """``beta @ omega @ beta.T + diag(delta)``, exactly symmetric and checked PD."""
    sigma = fit.beta @ fit.omega @ fit.beta.T
    sigma[np.diag_indices_from(sigma)] += fit.delta
    sigma = 0.5 * (sigma + sigma.T)
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("assembled covariance is not positive definite") from exc
    return sigma


def fit_report(fit: FactorModelFit) -> pd.DataFrame:
    cols = {"alpha": fit.alpha}
    for j, name in enumerate(fit.factor_names):
        cols[f"beta_{name}"] = fit.beta[:, j]
    cols["delta"] = fit.delta
    cols["r_squared"] = fit.r_squared
    return pd.DataFrame(cols, index=pd.Index(fit.tickers, name="ticker"))


def write_fit_report(fit: FactorModelFit, path) -> Path:
    path = Path(path)
    fit_report(fit).to_csv(path, float_format="%.10g", lineterminator="\n")
    return path
