"""Gaussian parametric VaR / ES of a weighted portfolio, and empirical estimators.

The parametric measures follow the mean/volatility form

    risk(w) = a * w'mu + m(p) * sqrt(w' Sigma w)

where ``m(p)`` is the standard normal quantile (VaR) or the tail multiplier
``phi(Phi^-1(p)) / (1 - p)`` (ES), and ``a`` is the mean sign fixed by the
:class:`Convention`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, DomainError, EmptySample

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Acklam's rational approximation to the normal quantile (relative error ~1.15e-9)
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


class Convention(str, Enum):
    """Sign given to the mean term.

    ``LOSS`` treats the portfolio loss ``-w'r`` as the random variable, so the
    mean enters with a minus sign. ``PAPER`` keeps ``+w'mu`` as written in the
    original mean-VaR objective.
    """

    LOSS = "loss"
    PAPER = "paper"

    @property
    def mean_sign(self) -> float:
        return -1.0 if self is Convention.LOSS else 1.0

    @classmethod
    def parse(cls, value) -> "Convention":
        if isinstance(value, Convention):
            return value
        key = str(value).strip().lower()
        aliases = {"loss": cls.LOSS, "lossconvention": cls.LOSS,
                   "paper": cls.PAPER, "paperliteral": cls.PAPER}
        if key not in aliases:
            raise ValueError(f"unknown convention {value!r} (expected loss or paper)")
        return aliases[key]


class RiskKind(str, Enum):
    VAR = "var"
    ES = "es"

    @classmethod
    def parse(cls, value) -> "RiskKind":
        if isinstance(value, RiskKind):
            return value
        key = str(value).strip().lower()
        if key not in ("var", "es"):
            raise ValueError(f"unknown risk measure {value!r} (expected var or es)")
        return cls(key)


@dataclass(frozen=True)
class RiskParams:
    p: float = 0.95
    convention: Convention = Convention.LOSS

    def __post_init__(self):
        _check_p(self.p)
        object.__setattr__(self, "convention", Convention.parse(self.convention))

    @property
    def mean_sign(self) -> float:
        return self.convention.mean_sign


def _check_p(p) -> float:
    try:
        p = float(p)
    except (TypeError, ValueError):
        raise DomainError(f"p must be in (0,1), got {p!r}") from None
    if not (0.0 < p < 1.0):
        raise DomainError(f"p must be in (0,1), got {p!r}")
    return p


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                 / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, accurate to well below 1e-9."""
    p = _check_p(p)
    if p == 0.5:
        return 0.0
    x = _acklam(p)
    # one Newton step; the residual is formed on the smaller tail to avoid cancellation
    if x > 0:
        resid = (1.0 - p) - 0.5 * math.erfc(x / _SQRT2)
        return x - resid / normal_pdf(x)
    resid = normal_cdf(x) - p
    return x - resid / normal_pdf(x)


def es_multiplier(p: float) -> float:
    p = _check_p(p)
    return normal_pdf(normal_quantile(p)) / (1.0 - p)


def risk_multiplier(kind, p: float) -> float:
    """Volatility multiplier for ``kind`` (VaR or ES) at level ``p``."""
    kind = RiskKind.parse(kind)
    return normal_quantile(p) if kind is RiskKind.VAR else es_multiplier(p)


def _check_dims(w, mu, sigma):
    w = np.asarray(w, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = w.shape[0] if w.ndim == 1 else -1
    if w.ndim != 1 or mu.shape != (n,) or sigma.shape != (n, n):
        raise DimensionMismatch(f"weights {w.shape}, mean {mu.shape}, covariance {sigma.shape}")
    return w, mu, sigma


def _parametric(w, mu, sigma, params: RiskParams, multiplier: float) -> float:
    w, mu, sigma = _check_dims(w, mu, sigma)
    vol = math.sqrt(max(float(w @ sigma @ w), 0.0))
    return params.mean_sign * float(w @ mu) + multiplier * vol


def portfolio_var(w, mu, sigma, params: RiskParams = RiskParams()) -> float:
    return _parametric(w, mu, sigma, params, normal_quantile(params.p))


def portfolio_es(w, mu, sigma, params: RiskParams = RiskParams()) -> float:
    return _parametric(w, mu, sigma, params, es_multiplier(params.p))


def portfolio_risk(kind, w, mu, sigma, params: RiskParams = RiskParams()) -> float:
    kind = RiskKind.parse(kind)
    fn = portfolio_var if kind is RiskKind.VAR else portfolio_es
    return fn(w, mu, sigma, params)


def _tail_count(x: float) -> int:
    # n*p like 10*0.7 lands at 7.000000000000001; round away float noise before ceil
    return math.ceil(round(x, 9))


def empirical_var(losses, p: float) -> float:
    """The ceil(n*p)-th smallest loss (1-based)."""
    p = _check_p(p)
    x = np.sort(np.asarray(losses, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise EmptySample("empirical VaR of an empty sample")
    k = min(max(_tail_count(n * p), 1), n)
    return float(x[k - 1])


def empirical_es(losses, p: float) -> float:
    """Mean of the worst ceil(n*(1-p)) losses."""
    p = _check_p(p)
    x = np.sort(np.asarray(losses, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise EmptySample("empirical ES of an empty sample")
    m = min(max(_tail_count(n * (1.0 - p)), 1), n)
    return float(x[n - m:].mean())
