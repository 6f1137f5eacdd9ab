"""Rolling in-sample construction and out-of-sample monthly evaluation."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .data import Universe
from .errors import DecarbError, DimensionMismatch, FitError, InfeasibleProblem, NoLabeledMonths, NonPositivePrice
from .factors import assemble_covariance, fit_universe
from .index import IndexSpec, benchmark_weights, build_index
from .optimizer import Status, Tolerances
from .risk import portfolio_risk

logger = logging.getLogger(__name__)

IN_SAMPLE_COLUMNS = ["proxy", "window", "spec", "risk_kind", "bp_risk", "di_risk",
                     "bp_footprint", "di_footprint", "status"]
SUMMARY_COLUMNS = ["proxy", "spec", "months", "outperform", "outperform_frac",
                   "event_months", "event_outperform", "event_frac"]


@dataclass(frozen=True)
class Window:
    in_start: pd.Timestamp
    in_end: pd.Timestamp
    out_start: pd.Timestamp
    out_end: pd.Timestamp

    def __post_init__(self):
        for name in ("in_start", "in_end", "out_start", "out_end"):
            object.__setattr__(self, name, pd.Timestamp(getattr(self, name)))
        if not (self.in_start <= self.in_end < self.out_start <= self.out_end):
            raise ValueError(f"window dates out of order: {self}")

    @property
    def label(self) -> str:
        return f"{self.in_start:%Y-%m-%d}/{self.in_end:%Y-%m-%d}"


@dataclass(frozen=True)
class StudyPlan:
    windows: tuple[Window, ...]
    specs: tuple[IndexSpec, ...]
    event_labels: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        object.__setattr__(self, "specs", tuple(self.specs))
        if not self.windows:
            raise ValueError("no windows")
        if not self.specs:
            raise ValueError("no index specs")
        for prev, cur in zip(self.windows, self.windows[1:]):
            if cur.out_start <= prev.out_end:
                raise ValueError("out-of-sample segments must be chronological and non-overlapping")
        labels = [s.label for s in self.specs]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate index specs in plan")


def rolling_plan(calendar: pd.DatetimeIndex, start, count: int, specs: Sequence[IndexSpec],
                 in_months: int = 12, out_months: int = 12, step_months: int | None = None,
                 event_labels: Mapping[str, str] | None = None) -> StudyPlan:
    """Windows anchored every ``step_months`` (default ``out_months``) from ``start``.

    The in-sample segment covers ``in_months`` calendar months from the anchor
    and the out-of-sample segment the following ``out_months``; both are
    snapped to trading dates present in ``calendar``. ``start`` is moved back
    to the first of its month so every out-of-sample month is a whole
    calendar month scored once.
    """
    if count < 1:
        raise ValueError("no windows")
    step = out_months if step_months is None else step_months
    calendar = pd.DatetimeIndex(calendar)
    anchor0 = pd.Timestamp(start).to_period("M").to_timestamp()
    windows = []
    for i in range(count):
        a = anchor0 + pd.DateOffset(months=i * step)
        b = a + pd.DateOffset(months=in_months)
        e = b + pd.DateOffset(months=out_months)
        ins = calendar[(calendar >= a) & (calendar < b)]
        outs = calendar[(calendar >= b) & (calendar < e)]
        if len(ins) == 0 or len(outs) == 0:
            raise ValueError(f"window {i + 1} ({a:%Y-%m-%d}) is not covered by the calendar")
        windows.append(Window(ins[0], ins[-1], outs[0], outs[-1]))
    return StudyPlan(tuple(windows), tuple(specs), dict(event_labels or {}))


def monthly_return(w, closes_initial, closes_final) -> float:
    """Percentage return of fixed weights ``w`` applied to two price vectors."""
    w = np.asarray(w, dtype=float)
    p0 = np.asarray(closes_initial, dtype=float)
    p1 = np.asarray(closes_final, dtype=float)
    if w.ndim != 1 or p0.shape != w.shape or p1.shape != w.shape:
        raise DimensionMismatch(f"weights {w.shape}, initial {p0.shape}, final {p1.shape}")
    if not (np.all(p0 > 0) and np.all(p1 > 0)):
        raise NonPositivePrice("month boundary prices must be positive")
    v0 = float(w @ p0)
    v1 = float(w @ p1)
    return (v1 - v0) * 100.0 / v0


def month_boundaries(calendar: pd.DatetimeIndex, start, end) -> list[tuple[str, pd.Timestamp, pd.Timestamp]]:
    """(YYYY-MM, first trading day, last trading day) for each month in [start, end]."""
    cal = pd.DatetimeIndex(calendar)
    cal = cal[(cal >= pd.Timestamp(start)) & (cal <= pd.Timestamp(end))]
    out = []
    for period in sorted(set(cal.to_period("M"))):
        days = cal[cal.to_period("M") == period]
        out.append((str(period), days[0], days[-1]))
    return out


@dataclass(frozen=True)
class BacktestReport:
    in_sample: pd.DataFrame
    out_sample: pd.DataFrame
    summary: pd.DataFrame
    weights: Mapping[tuple[str, str], np.ndarray]
    spec_labels: tuple[str, ...]
    proxy: str

    def write(self, outdir) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, frame in (("in_sample", self.in_sample), ("out_sample", self.out_sample),
                            ("summary", self.summary)):
            p = outdir / f"{name}.csv"
            p.write_text(format_csv(frame), encoding="utf-8")
            paths.append(p)
        return paths


def _fmt(v, digits):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        s = f"{v:.{digits}f}"
        return "0." + "0" * digits if s == "-0." + "0" * digits else s
    return str(v)


_DIGITS = {"bp_return": 6, "outperform_frac": 6, "event_frac": 6}


def format_csv(frame: pd.DataFrame) -> str:
    """Deterministic CSV text: fixed decimals, blank for missing, LF endings."""
    lines = [",".join(frame.columns)]
    for row in frame.itertuples(index=False):
        cells = []
        for col, v in zip(frame.columns, row):
            cell = _fmt(v, _DIGITS.get(col, 6 if col.startswith("DI_") else 8))
            if "," in cell or '"' in cell:
                cell = '"' + cell.replace('"', '""') + '"'
            cells.append(cell)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _run_window(universe: Universe, window: Window, specs, tolerances):
    rows, weights = [], {}
    try:
        fit = fit_universe(universe, (window.in_start, window.in_end))
        sigma = assemble_covariance(fit)
    except FitError as exc:
        logger.warning("window %s: factor fit failed: %s", window.label, exc)
        for spec in specs:
            rows.append([universe.active_proxy, window.label, spec.label, spec.risk_kind.value,
                         np.nan, np.nan, np.nan, np.nan, "fit_failed"])
        return rows, weights
    bench = benchmark_weights(universe)
    bench_fp = float(universe.carbon @ bench)
    for spec in specs:
        bp_risk = portfolio_risk(spec.risk_kind, bench, fit.mu, sigma, spec.params)
        try:
            di = build_index(universe, fit, spec, tolerances, sigma)
        except (InfeasibleProblem, ValueError) as exc:
            logger.warning("window %s, %s: %s", window.label, spec.label, exc)
            rows.append([universe.active_proxy, window.label, spec.label, spec.risk_kind.value,
                         bp_risk, np.nan, bench_fp, np.nan, Status.INFEASIBLE.value])
            continue
        rows.append([universe.active_proxy, window.label, spec.label, spec.risk_kind.value,
                     bp_risk, di.risk_value, bench_fp, di.footprint, di.status.value])
        if di.status is Status.CONVERGED:
            weights[(window.label, spec.label)] = di.weights.copy()
    return rows, weights


def run_study(universe: Universe, plan: StudyPlan, tolerances: Tolerances = Tolerances(),
              jobs: int = 1) -> BacktestReport:
    """Fit and build every spec on each in-sample window, then score its out-of-sample months.

    Weights from a window are held fixed for all of its out-of-sample months.
    A spec whose solve fails leaves blank returns and is left out of the
    summary counts.
    """
    cal = universe.calendar
    for w in plan.windows:
        last_in = cal[cal <= w.in_end]
        nxt = cal[cal > w.in_end]
        if len(last_in) == 0 or len(nxt) == 0 or cal[cal >= w.out_start][0] != nxt[0]:
            raise ValueError(f"window {w.label}: out-of-sample must start the trading day after in-sample")

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda w: _run_window(universe, w, plan.specs, tolerances),
                                    plan.windows))
    else:
        results = [_run_window(universe, w, plan.specs, tolerances) for w in plan.windows]

    labels = [s.label for s in plan.specs]
    bench = benchmark_weights(universe)
    closes = universe.closes
    in_rows, out_rows, all_weights = [], [], {}
    for window, (rows, weights) in zip(plan.windows, results):
        in_rows.extend(rows)
        all_weights.update(weights)
        for month, first, last in month_boundaries(cal, window.out_start, window.out_end):
            p0 = closes.loc[first].to_numpy()
            p1 = closes.loc[last].to_numpy()
            row = [universe.active_proxy, month, window.label, monthly_return(bench, p0, p1)]
            for lab in labels:
                w = weights.get((window.label, lab))
                row.append(np.nan if w is None else monthly_return(w, p0, p1))
            row.append(plan.event_labels.get(month, ""))
            out_rows.append(row)

    in_sample = pd.DataFrame(in_rows, columns=IN_SAMPLE_COLUMNS)
    out_sample = pd.DataFrame(out_rows, columns=["proxy", "month", "window", "bp_return", *labels, "event"])
    summary = _summarize(out_sample, labels, universe.active_proxy)
    return BacktestReport(in_sample, out_sample, summary, all_weights, tuple(labels),
                          universe.active_proxy)


def _summarize(out_sample: pd.DataFrame, labels, proxy) -> pd.DataFrame:
    rows = []
    events = out_sample["event"] != ""
    for lab in labels:
        valid = out_sample[lab].notna()
        beat = valid & (out_sample[lab] > out_sample["bp_return"])
        n, k = int(valid.sum()), int(beat.sum())
        ne, ke = int((valid & events).sum()), int((beat & events).sum())
        rows.append([proxy, lab, n, k, k / n if n else np.nan, ne, ke, ke / ne if ne else np.nan])
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def event_summary(report: BacktestReport, labels: Mapping[str, str] | None = None) -> dict[str, float]:
    """Fraction of labeled months in which each DI strictly beats the benchmark."""
    out = report.out_sample
    if labels is None:
        months = set(out.loc[out["event"] != "", "month"])
    else:
        months = set(labels) & set(out["month"])
    sel = out[out["month"].isin(months)]
    result = {}
    for lab in report.spec_labels:
        valid = sel[sel[lab].notna()]
        if len(valid) == 0:
            raise NoLabeledMonths(f"no labeled months with returns for {lab}")
        result[lab] = float((valid[lab] > valid["bp_return"]).sum() / len(valid))
    if not result:
        raise NoLabeledMonths("report has no index specs")
    return result


# -------------------------------------------------------------------- events

def load_events(path=None, market: str | None = None) -> dict[str, str]:
    """Read ``market,year,month,label`` rows into {YYYY-MM: label}.

    With ``path=None`` the bundled climate-event list is used. Several events
    in one month are joined with ``"; "``.
    """
    if path is None:
        text = resources.files("decarb").joinpath("data/events.csv").read_text(encoding="utf-8")
        from io import StringIO
        df = pd.read_csv(StringIO(text), dtype=str)
    else:
        if not Path(path).exists():
            raise FileNotFoundError(f"no such file: {path}")
        df = pd.read_csv(path, dtype=str)
    df.columns = [c.strip().lower() for c in df.columns]
    missing = {"market", "year", "month", "label"} - set(df.columns)
    if missing:
        raise DecarbError(f"events file lacks column(s) {', '.join(sorted(missing))}")
    if market is not None:
        df = df[df["market"].str.strip().str.lower() == market.lower()]
    out: dict[str, list[str]] = {}
    for r in df.itertuples(index=False):
        key = f"{int(r.year):04d}-{int(r.month):02d}"
        out.setdefault(key, []).append(r.label.strip())
    return {k: "; ".join(v) for k, v in sorted(out.items())}
