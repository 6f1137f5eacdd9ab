"""Parametric VaR and ES next to their Monte-Carlo counterparts.

Run with ``python3 demos/risk_measures.py``.
"""
import numpy as np

from decarb import (Convention, RiskParams, empirical_es, empirical_var, es_multiplier,
                    normal_quantile, portfolio_es, portfolio_var)

rng = np.random.default_rng(0)
n = 5
w = rng.dirichlet(np.ones(n))
mu = rng.normal(0.0004, 0.0005, n)
A = rng.normal(0, 0.01, (n, n))
sigma = A @ A.T + 1e-5 * np.eye(n)

draws = rng.multivariate_normal(mu, sigma, 1_000_000) @ w
losses = -draws

print(" p      T(p)    T1(p)    VaR      MC VaR   ES       MC ES")
for p in (0.90, 0.95, 0.99):
    params = RiskParams(p)
    print(f"{p:.2f}  {normal_quantile(p):7.4f}  {es_multiplier(p):7.4f}  "
          f"{portfolio_var(w, mu, sigma, params):.5f}  {empirical_var(losses, p):.5f}  "
          f"{portfolio_es(w, mu, sigma, params):.5f}  {empirical_es(losses, p):.5f}")

# the two sign conventions for the mean differ by exactly 2 w'mu
loss = portfolio_var(w, mu, sigma, RiskParams(0.95, Convention.LOSS))
paper = portfolio_var(w, mu, sigma, RiskParams(0.95, Convention.PAPER))
print(f"\nVaR loss convention {loss:.6f}, literal convention {paper:.6f}, "
      f"difference {paper - loss:.6f} = 2 w'mu = {2 * w @ mu:.6f}")
