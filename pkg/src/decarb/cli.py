"""Command-line front end: ``decarb {sweep,build,backtest,presets}``.

Exit codes: 0 success, 1 configuration / data / solver error, 2 internal error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import backtest as bt
from .config import StudyConfig, apply_preset, keys_help, load_config
from .data import load_universe, normalize_proxy
from .errors import ConfigError, DataError, DecarbError, FitError, SolverError
from .factors import assemble_covariance, fit_universe
from .index import (PRESETS, CarbonCap, DropK, IndexSpec, benchmark_risk, build_di1, build_di2,
                    sweep_c, sweep_k)
from .plotting import monthly_return_panel, sweep_panels, write_svg
from .risk import Convention, RiskKind, RiskParams

log = logging.getLogger("decarb")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="study config file")
    common.add_argument("--out", type=Path, help="output directory (overrides config)")
    common.add_argument("--proxy", choices=["ghg", "co2"], help="carbon proxy")
    common.add_argument("--risk", choices=["var", "es"], help="risk measure")
    common.add_argument("--convention", choices=["loss", "paper"], help="mean sign convention")
    common.add_argument("--jobs", type=int, help="worker threads")
    common.add_argument("--preset", help="apply a published (k, C) preset")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(
        prog="decarb", description="Decarbonized index construction and backtesting.",
        epilog=keys_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("sweep", "sweep k and C, write curves and a plot"),
                       ("build", "build DI_1 / DI_2 at fixed k and C, write weights"),
                       ("backtest", "rolling in-sample / out-of-sample study")):
        sub.add_parser(name, parents=[common], help=text, description=text, epilog=keys_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    sub.add_parser("presets", help="list published (k, C) presets")
    return p


def _resolve(args) -> StudyConfig:
    cfg = load_config(args.config) if args.config else StudyConfig()
    if args.preset:
        cfg = apply_preset(cfg, args.preset)
    over = {}
    if args.out:
        over["out"] = args.out
    if args.proxy:
        over["proxies"] = (normalize_proxy(args.proxy),)
    if args.risk:
        over["risk_kind"] = RiskKind.parse(args.risk)
    if args.convention:
        over["convention"] = Convention.parse(args.convention)
    if args.jobs is not None:
        over["jobs"] = args.jobs
    cfg = replace(cfg, **over) if over else cfg
    return cfg.validate()


def _universe(cfg: StudyConfig, proxy: str):
    return load_universe(cfg.prices, cfg.caps, cfg.carbon, cfg.factors, cfg.model_kind, proxy, cfg.policy)


def _fit_window(cfg: StudyConfig, universe):
    if cfg.start is None and cfg.end is None:
        return None
    idx = universe.returns.index
    return (cfg.start or idx[0], cfg.end or idx[-1])


def _params(cfg: StudyConfig) -> RiskParams:
    return RiskParams(cfg.p, cfg.convention)


def cmd_sweep(cfg: StudyConfig) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    params = _params(cfg)
    for proxy in cfg.proxies:
        u = _universe(cfg, proxy)
        fit = fit_universe(u, _fit_window(cfg, u))
        tag = proxy.lower()
        ks = sweep_k(u, fit, cfg.k_grid, cfg.risk_kind, params, jobs=cfg.jobs)
        cs = sweep_c(u, fit, cfg.c_grid, cfg.risk_kind, params, elbow_tol=cfg.elbow_tol, jobs=cfg.jobs)
        ks.to_csv(cfg.out / f"k_curve_{tag}.csv")
        cs.to_csv(cfg.out / f"c_curve_{tag}.csv")
        write_svg(cfg.out / f"sweep_{tag}.svg", sweep_panels(ks, cs))
        k_txt = "none" if ks.best is None else str(ks.best)
        c_txt = "none" if cs.best is None else f"{cs.best:g}"
        print(f"{proxy} {cfg.risk_kind.value.upper()}: k_opt={k_txt} c_opt={c_txt}")
    return 0


def _write_weights(path: Path, tickers, weights):
    lines = ["ticker,weight"] + [f"{t},{w:.12f}" for t, w in sorted(zip(tickers, weights))]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_build(cfg: StudyConfig) -> int:
    if cfg.k is None and cfg.c_rel is None:
        raise ConfigError("build needs k and/or c_rel (or a preset)")
    cfg.out.mkdir(parents=True, exist_ok=True)
    params = _params(cfg)
    for proxy in cfg.proxies:
        u = _universe(cfg, proxy)
        fit = fit_universe(u, _fit_window(cfg, u))
        sigma = assemble_covariance(fit)
        tag = proxy.lower()
        bp = benchmark_risk(u, fit, cfg.risk_kind, params, sigma)
        measure = cfg.risk_kind.value.upper()
        print(f"{proxy} benchmark: {measure}={bp:.6g} footprint={float(u.carbon @ (u.market_caps / u.market_caps.sum())):.6g}")
        built = []
        if cfg.k is not None:
            if cfg.k > u.n_assets - 2:
                raise ConfigError(f"k={cfg.k} leaves fewer than 2 of {u.n_assets} assets")
            built.append(("di1", build_di1(u, fit, cfg.k, cfg.risk_kind, params, sigma=sigma)))
        if cfg.c_rel is not None:
            built.append(("di2", build_di2(u, fit, cfg.c_rel, cfg.risk_kind, params, sigma=sigma)))
        for name, di in built:
            _write_weights(cfg.out / f"weights_{tag}_{name}.csv", di.tickers, di.weights)
            print(f"{proxy} {di.spec.label}: {measure}={di.risk_value:.6g} footprint={di.footprint:.6g} "
                  f"({100 * di.footprint / di.benchmark_footprint:.1f}% of benchmark) status={di.status.value}")
    return 0


def cmd_backtest(cfg: StudyConfig) -> int:
    win = cfg.windows
    if win.count < 1:
        raise ConfigError("no windows")
    if win.start is None:
        raise ConfigError("windows.start is required")
    specs = []
    params = _params(cfg)
    if cfg.k is not None:
        specs.append(IndexSpec(DropK(cfg.k), cfg.risk_kind, params))
    if cfg.c_rel is not None:
        specs.append(IndexSpec(CarbonCap(cfg.c_rel), cfg.risk_kind, params))
    if not specs:
        raise ConfigError("backtest needs k and/or c_rel (or a preset)")
    events = bt.load_events(cfg.events, cfg.market) if (cfg.events or cfg.market) else {}
    cfg.out.mkdir(parents=True, exist_ok=True)
    reports = []
    for proxy in cfg.proxies:
        u = _universe(cfg, proxy)
        plan = bt.rolling_plan(u.calendar, win.start, win.count, specs, win.in_months,
                               win.out_months, win.step_months, events)
        rep = bt.run_study(u, plan, jobs=cfg.jobs)
        reports.append(rep)
        write_svg(cfg.out / f"monthly_returns_{proxy.lower()}.svg", [monthly_return_panel(rep)],
                  panel_width=900, panel_height=420)
    for name in ("in_sample", "out_sample", "summary"):
        frames = [getattr(r, name) for r in reports]
        cols = list(dict.fromkeys(c for f in frames for c in f.columns))
        if name == "out_sample":
            # keep "event" last when proxies disagree on spec columns
            cols = [c for c in cols if c != "event"] + ["event"]
        merged = _concat(frames, cols)
        (cfg.out / f"{name}.csv").write_text(bt.format_csv(merged), encoding="utf-8")
    for rep in reports:
        for r in rep.summary.itertuples(index=False):
            frac = "n/a" if not np.isfinite(r.outperform_frac) else f"{r.outperform_frac:.0%}"
            ev = "n/a" if not np.isfinite(r.event_frac) else f"{r.event_frac:.0%}"
            print(f"{r.proxy} {r.spec}: beats benchmark {r.outperform}/{r.months} months ({frac}), "
                  f"event months {r.event_outperform}/{r.event_months} ({ev})")
    return 0


def _concat(frames, cols):
    import pandas as pd
    return pd.concat([f.reindex(columns=cols) for f in frames], ignore_index=True)


def cmd_presets() -> int:
    print(f"{'name':<16}{'market':<10}{'model':<7}{'proxy':<7}{'risk':<6}{'k':>4}{'C':>7}")
    for name in sorted(PRESETS):
        pr = PRESETS[name]
        print(f"{name:<16}{pr.market:<10}{pr.model_kind.value:<7}{pr.proxy:<7}"
              f"{pr.risk_kind.value:<6}{pr.k:>4}{pr.c_rel:>7.0%}")
    return 0


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "presets":
            return cmd_presets()
        cfg = _resolve(args)
        return {"sweep": cmd_sweep, "build": cmd_build, "backtest": cmd_backtest}[args.command](cfg)
    except (ConfigError, DataError, FitError, SolverError, FileNotFoundError, ValueError) as exc:
        kind = ("config" if isinstance(exc, ConfigError) else
                "solver" if isinstance(exc, SolverError) else "data")
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error ({kind}): {msg}", file=sys.stderr)
        return 1
    except DecarbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
