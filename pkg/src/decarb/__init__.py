"""Decarbonized index construction by mean-VaR / mean-ES minimization."""

from .backtest import (BacktestReport, StudyPlan, Window, event_summary, load_events,
                       monthly_return, rolling_plan, run_study)
from .data import (AssetRecord, FactorPanel, MissingDataPolicy, ModelKind, Universe,
                   assemble_universe, compute_returns, load_caps, load_carbon, load_factors,
                   load_prices, load_universe)
from .factors import FactorModelFit, assemble_covariance, fit_ols, fit_universe
from .index import (PRESETS, CarbonCap, DecarbonizedIndex, DropK, IndexSpec, benchmark_weights,
                    build_di1, build_di2, portfolio_footprint, rank_by_carbon, sweep_c, sweep_k)
from .optimizer import PortfolioProblem, Solution, Status, Tolerances, kkt_residual, project_feasible, solve
from .risk import (Convention, RiskKind, RiskParams, empirical_es, empirical_var, es_multiplier,
                   normal_quantile, portfolio_es, portfolio_var)

__version__ = "0.1.0"
