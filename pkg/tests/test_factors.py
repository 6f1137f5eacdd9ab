import numpy as np
import pandas as pd
import pytest

from decarb.data import AssetRecord, FactorPanel, ModelKind, assemble_universe
from decarb.errors import InsufficientObservations, RankDeficient
from decarb.factors import (DELTA_FLOOR, FactorModelFit, assemble_covariance, fit_ols, fit_report,
                            fit_universe, write_fit_report)
from decarb.synthetic import synthetic_market


def normal_equations(y, X):
    A = np.column_stack([np.ones(len(y)), X])
    coefs = np.linalg.solve(A.T @ A, A.T @ y)
    resid = y - A @ coefs
    return coefs, resid @ resid / (len(y) - A.shape[1])


def fit_from(beta, omega, delta, mu=None):
    n, k = beta.shape
    t = pd.Timestamp("2021-01-04")
    return FactorModelFit(mu=np.zeros(n) if mu is None else mu, alpha=np.zeros(n), beta=beta,
                          omega=omega, delta=delta, r_squared=np.zeros(n), window=(t, t),
                          model_kind=ModelKind.FIVE, tickers=tuple(f"A{i}" for i in range(n)),
                          factor_names=ModelKind.FIVE.columns[:k], n_obs=0)


# ---------------------------------------------------------------------- OLS

def test_ols_exact_line():
    x = np.linspace(-1, 1, 20)
    coefs, resvar = fit_ols(2.0 * x, x)
    np.testing.assert_allclose(coefs, [0.0, 2.0], atol=1e-14)
    assert resvar == pytest.approx(0.0, abs=1e-28)


def test_ols_constant_response():
    X = np.random.default_rng(0).normal(size=(30, 3))
    coefs, resvar = fit_ols(np.full(30, 5.0), X)
    np.testing.assert_allclose(coefs, [5.0, 0, 0, 0], atol=1e-13)
    assert resvar == pytest.approx(0.0, abs=1e-25)


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(7)
    x = rng.normal(size=500)
    y = 1.5 * x + rng.normal(0, 0.5, 500)
    coefs, resvar = fit_ols(y, x)
    assert abs(coefs[1] - 1.5) <= 0.05
    ref, ref_var = normal_equations(y, x[:, None])
    np.testing.assert_allclose(coefs, ref, rtol=0, atol=1e-10)
    assert resvar == pytest.approx(ref_var, rel=1e-10)


def test_ols_residuals_orthogonal():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 4))
    y = X @ [0.3, -1, 2, 0.1] + rng.normal(size=200)
    coefs, _ = fit_ols(y, X)
    A = np.column_stack([np.ones(200), X])
    assert np.all(np.abs(A.T @ (y - A @ coefs)) <= 1e-8 * 200)


def test_ols_errors():
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    with pytest.raises(RankDeficient):
        fit_ols(rng.normal(size=50), np.column_stack([x, 2 * x]))
    with pytest.raises(InsufficientObservations):
        fit_ols([1.0, 2.0, 3.0], np.ones((3, 2)))


# ------------------------------------------------------------ fit_universe

def _exact_universe(n_days=80):
    dates = pd.bdate_range("2021-01-04", periods=n_days + 1)
    rng = np.random.default_rng(11)
    F = pd.DataFrame(rng.normal(0, 0.01, (n_days, 5)), index=dates[1:], columns=list(ModelKind.FIVE.columns))
    rf = pd.Series(0.0001, index=dates[1:])
    r_a = F["MKT_RF"].to_numpy() + rf.to_numpy()  # excess return equals MKT_RF exactly
    r_b = rng.normal(0.0005, 0.02, n_days)
    assets = []
    for name, r in (("A", r_a), ("B", r_b)):
        closes = 50.0 * np.concatenate([[1.0], np.cumprod(1 + r)])
        assets.append(AssetRecord(name, pd.Series(closes, index=dates), 1.0, {"GHG": 1.0}))
    return assemble_universe(assets, FactorPanel("five", F, rf), "GHG"), F


def test_fit_exact_replication():
    u, F = _exact_universe()
    fit = fit_universe(u)
    np.testing.assert_allclose(fit.beta[0], [1, 0, 0, 0, 0], atol=1e-9)
    assert fit.delta[0] == DELTA_FLOOR
    assert fit.r_squared[0] == pytest.approx(1.0, abs=1e-9)
    used = F.loc[u.returns.index].to_numpy()
    np.testing.assert_allclose(fit.omega, np.cov(used, rowvar=False, ddof=1), rtol=1e-12)
    np.testing.assert_allclose(fit.mu, u.returns.mean().to_numpy(), rtol=1e-12)


def test_fit_matches_per_asset_normal_equations():
    u = synthetic_market(6, 300, seed=2).universe()
    fit = fit_universe(u)
    F = u.factors.series.to_numpy()
    rf = u.factors.risk_free.to_numpy()
    for i, t in enumerate(u.tickers):
        ref, ref_var = normal_equations(u.returns[t].to_numpy() - rf, F)
        np.testing.assert_allclose(fit.beta[i], ref[1:], atol=1e-10)
        assert fit.alpha[i] == pytest.approx(ref[0], abs=1e-10)
        assert fit.delta[i] == pytest.approx(ref_var, rel=1e-9)


def test_fit_window_and_short_window():
    u = synthetic_market(4, 200, seed=1).universe()
    cal = u.returns.index
    fit = fit_universe(u, (cal[10], cal[99]))
    assert fit.n_obs == 90 and fit.window == (cal[10], cal[99])
    with pytest.raises(InsufficientObservations):
        fit_universe(u, (cal[0], cal[5]))


def test_fit_invariants_and_readonly():
    fit = fit_universe(synthetic_market(8, 400, seed=5).universe())
    np.testing.assert_allclose(fit.omega, fit.omega.T, atol=1e-12)
    assert np.linalg.eigvalsh(fit.omega).min() >= -1e-10
    assert np.all(fit.delta >= DELTA_FLOOR)
    assert fit.beta.shape == (8, 5) and fit.omega.shape == (5, 5)
    with pytest.raises(ValueError):
        fit.beta[0, 0] = 1.0


def test_fit_uncorrelated_factors_offdiagonal():
    # independent factors, long sample: sample Omega off-diagonals vanish within 3 standard errors
    rng = np.random.default_rng(21)
    T = 20_000
    sd = np.array([0.01, 0.02, 0.005, 0.015, 0.008])
    F = rng.standard_normal((T, 5)) * sd
    omega = np.cov(F, rowvar=False, ddof=1)
    se = np.outer(sd, sd) / np.sqrt(T)
    off = ~np.eye(5, dtype=bool)
    assert np.all(np.abs(omega[off]) <= 3 * se[off])


def test_fit_report(tmp_path):
    fit = fit_universe(synthetic_market(3, 100, seed=0).universe())
    rep = fit_report(fit)
    assert list(rep.columns)[:2] == ["alpha", "beta_MKT_RF"] and list(rep.index) == list(fit.tickers)
    text = write_fit_report(fit, tmp_path / "fit.csv").read_text()
    assert text.startswith("ticker,alpha,beta_MKT_RF")


# --------------------------------------------------------------- covariance

def test_covariance_zero_beta():
    fit = fit_from(np.zeros((3, 2)), np.eye(2), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(assemble_covariance(fit), np.diag([1.0, 2.0, 3.0]))


def test_covariance_one_factor_hand_expansion():
    s2, d1, d2 = 0.04, 0.01, 0.02
    fit = fit_from(np.ones((2, 1)), np.array([[s2]]), np.array([d1, d2]))
    np.testing.assert_allclose(assemble_covariance(fit), [[s2 + d1, s2], [s2, s2 + d2]], rtol=1e-15)


def test_covariance_exact_symmetry_and_floor():
    rng = np.random.default_rng(4)
    beta = rng.normal(size=(7, 5))
    A = rng.normal(size=(5, 5))
    fit = fit_from(beta, A @ A.T, rng.uniform(0.1, 1.0, 7))
    S = assemble_covariance(fit)
    assert np.array_equal(S, S.T)
    for _ in range(20):
        w = rng.dirichlet(np.ones(7))
        assert w @ S @ w >= fit.delta.min() * (w @ w)


def test_covariance_monte_carlo():
    rng = np.random.default_rng(12345)
    N, K, T = 10, 5, 100_000
    beta = rng.normal(0, 0.6, (N, K))
    L = rng.normal(0, 0.01, (K, K))
    omega = L @ L.T + np.diag(rng.uniform(1e-5, 4e-5, K))
    delta = rng.uniform(1e-5, 1e-4, N)
    S = assemble_covariance(fit_from(beta, omega, delta))
    f = rng.multivariate_normal(np.zeros(K), omega, T)
    r = f @ beta.T + rng.standard_normal((T, N)) * np.sqrt(delta)
    sample = np.cov(r, rowvar=False)
    d = np.diag(S)
    se = np.sqrt((np.outer(d, d) + S ** 2) / T)
    assert np.all(np.abs(sample - S) <= 3 * se)
