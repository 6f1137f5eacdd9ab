from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from conftest import make_universe, random_walk
from decarb.backtest import (IN_SAMPLE_COLUMNS, SUMMARY_COLUMNS, BacktestReport, StudyPlan, Window,
                             event_summary, format_csv, load_events, month_boundaries,
                             monthly_return, rolling_plan, run_study)
from decarb.data import AssetRecord, FactorPanel, assemble_universe, load_universe
from decarb.errors import DimensionMismatch, NoLabeledMonths, NonPositivePrice
from decarb.index import CarbonCap, DropK, IndexSpec
from decarb.risk import RiskKind
from decarb.synthetic import synthetic_market

GOLDEN = Path(__file__).parent / "golden" / "two_asset"


# ---------------------------------------------------------- monthly return

def test_monthly_return_fixtures():
    assert monthly_return([1.0], [100.0], [110.0]) == pytest.approx(10.0, abs=1e-10)
    assert monthly_return([0.5, 0.5], [100, 200], [110, 190]) == pytest.approx(0.0, abs=1e-10)
    # (0.2*55 + 0.8*90 - (0.2*50 + 0.8*100)) * 100 / (0.2*50 + 0.8*100) = (83 - 90) * 100 / 90
    assert monthly_return([0.2, 0.8], [50, 100], [55, 90]) == pytest.approx(-70 / 9, abs=1e-10)


def test_monthly_return_errors():
    with pytest.raises(DimensionMismatch):
        monthly_return([0.5, 0.5], [1.0], [1.0])
    with pytest.raises(NonPositivePrice):
        monthly_return([1.0], [0.0], [1.0])


def test_monthly_return_value_weighted_identity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        w = rng.dirichlet(np.ones(6))
        p0 = rng.uniform(10, 200, 6)
        p1 = p0 * (1 + rng.normal(0, 0.08, 6))
        v = w * p0 / (w @ p0)
        per_asset = (p1 - p0) * 100 / p0
        assert monthly_return(w, p0, p1) == pytest.approx(v @ per_asset, abs=1e-10)


def test_month_boundaries():
    cal = pd.DatetimeIndex(["2021-01-04", "2021-01-29", "2021-02-01", "2021-02-15", "2021-02-26",
                            "2021-03-01"])
    out = month_boundaries(cal, "2021-01-10", "2021-02-28")
    assert out == [("2021-01", pd.Timestamp("2021-01-29"), pd.Timestamp("2021-01-29")),
                   ("2021-02", pd.Timestamp("2021-02-01"), pd.Timestamp("2021-02-26"))]


# -------------------------------------------------------------------- plan

def test_rolling_plan_windows():
    cal = pd.bdate_range("2017-04-03", "2020-03-31")
    spec = IndexSpec(DropK(1), RiskKind.VAR)
    plan = rolling_plan(cal, "2017-04-01", 2, [spec])
    w0, w1 = plan.windows
    assert w0.in_start == pd.Timestamp("2017-04-03") and w0.in_end == pd.Timestamp("2018-03-30")
    assert w0.out_start == pd.Timestamp("2018-04-02") and w0.out_end == pd.Timestamp("2019-03-29")
    assert w1.in_start == pd.Timestamp("2018-04-02") and w1.out_start == pd.Timestamp("2019-04-01")
    with pytest.raises(ValueError, match="no windows"):
        rolling_plan(cal, "2017-04-01", 0, [spec])
    with pytest.raises(ValueError, match="not covered"):
        rolling_plan(cal, "2017-04-01", 5, [spec])


def test_rolling_plan_mid_month_start():
    u = synthetic_market(4, 400, seed=1).universe()
    spec = IndexSpec(DropK(1), RiskKind.VAR)
    plan = rolling_plan(u.calendar, "2017-04-18", 3, [spec], in_months=6, out_months=3)
    assert plan.windows[0].in_start == u.calendar[0]
    assert all(w.out_start.month != w.in_end.month for w in plan.windows)
    report = run_study(u, plan)
    assert report.out_sample.month.is_unique and len(report.out_sample) == 9


def test_plan_validation():
    spec = IndexSpec(DropK(1), RiskKind.VAR)
    w = Window("2021-01-04", "2021-01-29", "2021-02-01", "2021-02-26")
    with pytest.raises(ValueError, match="no windows"):
        StudyPlan((), (spec,))
    with pytest.raises(ValueError):
        StudyPlan((w, w), (spec,))
    with pytest.raises(ValueError):
        StudyPlan((w,), (spec, spec))
    with pytest.raises(ValueError):
        Window("2021-02-01", "2021-01-29", "2021-02-01", "2021-02-26")


# ------------------------------------------------------------------- study

def _golden_universe():
    return load_universe(GOLDEN / "prices.csv", GOLDEN / "caps.csv", GOLDEN / "carbon.csv",
                         GOLDEN / "factors.csv", "four", "GHG")


def _golden_plan(u):
    events = load_events(GOLDEN / "events.csv", "demo")
    return rolling_plan(u.calendar, "2021-01-01", 2, [IndexSpec(CarbonCap(0.75), RiskKind.VAR)],
                        in_months=1, out_months=1, event_labels=events)


def test_golden_two_asset_study(tmp_path):
    u = _golden_universe()
    report = run_study(u, _golden_plan(u))
    report.write(tmp_path)
    for name in ("in_sample", "out_sample", "summary"):
        assert (tmp_path / f"{name}.csv").read_bytes() == (GOLDEN / "expected" / f"{name}.csv").read_bytes()
    for w in report.weights.values():
        np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)


def test_report_schema():
    u = _golden_universe()
    report = run_study(u, _golden_plan(u))
    assert list(report.in_sample.columns) == IN_SAMPLE_COLUMNS
    assert list(report.summary.columns) == SUMMARY_COLUMNS
    assert list(report.out_sample.columns) == ["proxy", "month", "window", "bp_return",
                                               "DI_2(C=0.75) VAR", "event"]
    assert report.out_sample.month.is_unique


def _flat_universe():
    dates = pd.bdate_range("2021-01-04", "2021-04-30")
    rng = np.random.default_rng(0)
    n_jan = int((dates < "2021-02-01").sum())
    assets = []
    for i, (cap, c) in enumerate(((3.0, 9.0), (2.0, 4.0), (1.0, 1.0))):
        noisy = 100 * np.cumprod(1 + rng.normal(0, 0.01, n_jan))
        closes = np.concatenate([noisy, np.full(len(dates) - n_jan, noisy[-1])])
        assets.append(AssetRecord(f"F{i}", pd.Series(closes, index=dates), cap, {"GHG": c}))
    F = pd.DataFrame(rng.normal(0, 0.01, (len(dates), 4)), index=dates, columns=["SMB", "HML", "WML", "MF"])
    return assemble_universe(assets, FactorPanel("four", F, pd.Series(0.0, index=dates)), "GHG")


def test_flat_market_returns_zero():
    u = _flat_universe()
    spec = IndexSpec(DropK(1), RiskKind.VAR)
    report = run_study(u, rolling_plan(u.calendar, "2021-01-01", 1, [spec], in_months=1, out_months=3))
    out = report.out_sample
    assert list(out.month) == ["2021-02", "2021-03", "2021-04"]
    assert (out.bp_return == 0).all() and (out[spec.label] == 0).all()
    assert report.summary.outperform.iloc[0] == 0


def test_no_lookahead():
    m = synthetic_market(6, 400, seed=3)
    u = m.universe()
    specs = [IndexSpec(DropK(2), RiskKind.VAR), IndexSpec(CarbonCap(0.9), RiskKind.ES)]
    plan = rolling_plan(u.calendar, u.calendar[0], 1, specs, in_months=6, out_months=6)
    base = run_study(u, plan)
    # scramble every close after the in-sample window
    cut = plan.windows[0].in_end
    prices = {t: s.where(s.index <= cut, s * np.linspace(0.5, 2.0, len(s))) for t, s in m.prices.items()}
    m2 = type(m)(prices, m.caps, m.carbon, m.factors, m.beta, m.omega, m.specific_var)
    other = run_study(m2.universe(), plan)
    for key, w in base.weights.items():
        np.testing.assert_array_equal(w, other.weights[key])
    assert not base.out_sample.bp_return.equals(other.out_sample.bp_return)


def test_study_deterministic_and_parallel():
    u = synthetic_market(10, 600, seed=8).universe()
    specs = [IndexSpec(DropK(2), RiskKind.VAR), IndexSpec(CarbonCap(0.8), RiskKind.VAR)]
    plan = rolling_plan(u.calendar, u.calendar[0], 3, specs, in_months=6, out_months=6)
    a = run_study(u, plan)
    b = run_study(u, plan, jobs=3)
    for name in ("in_sample", "out_sample", "summary"):
        assert format_csv(getattr(a, name)) == format_csv(getattr(b, name))
    # months are ordered by window, one row each
    assert list(a.out_sample.month) == sorted(a.out_sample.month)


def test_infeasible_spec_recorded_and_excluded():
    u = make_universe(random_walk(120, 3, seed=2), [1, 1, 1], [5.0, 6.0, 7.0])
    specs = [IndexSpec(CarbonCap(0.5), RiskKind.VAR), IndexSpec(CarbonCap(0.95), RiskKind.VAR)]
    plan = rolling_plan(u.calendar, u.calendar[0], 1, specs, in_months=2, out_months=2)
    report = run_study(u, plan)
    assert list(report.in_sample.status) == ["infeasible", "converged"]
    assert report.out_sample[specs[0].label].isna().all()
    row = report.summary.set_index("spec").loc[specs[0].label]
    assert row.months == 0 and np.isnan(row.outperform_frac)


# ------------------------------------------------------------------ events

def _report(bp, di, events):
    out = pd.DataFrame({"proxy": "GHG", "month": [f"2020-{i + 1:02d}" for i in range(len(bp))],
                        "window": "w", "bp_return": bp, "DI": di, "event": events})
    return BacktestReport(pd.DataFrame(), out, pd.DataFrame(), {}, ("DI",), "GHG")


def test_event_summary():
    bp = np.zeros(12)
    di = np.array([1.0] * 9 + [-1.0] * 3)
    rep = _report(bp, di, ["ev"] * 12)
    assert event_summary(rep) == {"DI": 0.75}
    tied = _report(bp, bp.copy(), ["ev"] * 12)
    assert event_summary(tied) == {"DI": 0.0}
    labels = {"2020-01": "a", "2020-12": "b"}
    assert event_summary(rep, labels) == {"DI": 0.5}
    with pytest.raises(NoLabeledMonths):
        event_summary(_report(bp, di, [""] * 12))


def test_bundled_events():
    nifty = load_events(market="nifty50")
    sp = load_events(market="sp500")
    assert len(nifty) == 12
    assert len(sp) == 15
    assert "2022-11" in sp and ";" in sp["2022-11"]
    assert all(len(k) == 7 and k[4] == "-" for k in nifty)
    assert set(load_events()) == set(nifty) | set(sp)


def test_events_file(tmp_path):
    p = tmp_path / "ev.csv"
    p.write_text("market,year,month,label\nx,2020,3,A\nx,2020,3,B\ny,2021,1,C\n")
    assert load_events(p, "x") == {"2020-03": "A; B"}
    with pytest.raises(FileNotFoundError, match="missing.csv"):
        load_events(tmp_path / "missing.csv")


def test_format_csv():
    df = pd.DataFrame({"name": ["a,b", "c"], "bp_return": [-0.0000001, np.nan], "risk": [1.0, 2.5],
                       "n": [1, 2]})
    assert format_csv(df) == 'name,bp_return,risk,n\n"a,b",0.000000,1.00000000,1\nc,,2.50000000,2\n'
