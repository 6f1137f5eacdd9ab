"""Study configuration: a flat ``key = value`` file with ``[grid]`` and ``[windows]`` sections.

Example::

    prices = prices.csv
    caps = caps.csv
    carbon = carbon.csv
    factors = factors.csv
    model_kind = five
    proxy = ghg
    risk = var
    p = 0.95
    k = 3
    c_rel = 0.9

    [grid]
    k = 1, 2, 3
    c_rel = 0.5, 0.75, 0.95

    [windows]
    start = 2017-04-01
    count = 5

Relative paths are resolved against the config file's directory. Unknown keys
are errors.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

import pandas as pd

from .data import MissingDataPolicy, ModelKind, normalize_proxy
from .errors import ConfigError
from .index import DEFAULT_C_GRID, PRESETS
from .risk import Convention, RiskKind

# key -> help text; the CLI prints this table in --help
TOP_KEYS = {
    "prices": "price CSV (date,ticker,close)",
    "caps": "market-cap CSV (ticker,market_cap)",
    "carbon": "carbon CSV (ticker,ghg,co2)",
    "factors": "factor CSV (date,<factors>,rf)",
    "model_kind": "five | four",
    "proxy": "ghg | co2, or a comma list for backtest",
    "risk": "var | es",
    "p": "confidence level in (0,1), default 0.95",
    "convention": "loss | paper",
    "k": "assets dropped for DI_1 (build/backtest)",
    "c_rel": "footprint cap for DI_2 as a share of the benchmark's (build/backtest)",
    "preset": "published (k, C) preset, see `decarb presets`",
    "start": "first date used by sweep/build (optional)",
    "end": "last date used by sweep/build (optional)",
    "out": "output directory",
    "events": "events CSV (market,year,month,label); default bundled list",
    "market": "market key for the events file (nifty50 | sp500)",
    "max_gap_fraction": "drop assets missing more than this share of closes, default 0.10",
    "ffill_limit": "forward-fill at most this many consecutive days, default 5",
    "elbow_tol": "tolerance of the C selection rule, default 0.01",
    "seed": "seed for simulation-based steps",
    "jobs": "worker threads for sweeps and windows",
}
GRID_KEYS = {
    "k": "[grid] k values for the DI_1 sweep",
    "c_rel": "[grid] C values for the DI_2 sweep",
}
WINDOW_KEYS = {
    "start": "[windows] anchor date of the first in-sample window",
    "count": "[windows] number of rolling windows",
    "in_months": "[windows] in-sample length in months, default 12",
    "out_months": "[windows] out-of-sample length in months, default 12",
    "step_months": "[windows] months between anchors, default out_months",
}


def keys_help() -> str:
    lines = ["config keys:"]
    for table in (TOP_KEYS, GRID_KEYS, WINDOW_KEYS):
        for k, v in table.items():
            lines.append(f"  {k:<17} {v}")
    return "\n".join(lines)


@dataclass(frozen=True)
class WindowConfig:
    start: pd.Timestamp | None = None
    count: int = 0
    in_months: int = 12
    out_months: int = 12
    step_months: int | None = None


@dataclass(frozen=True)
class StudyConfig:
    prices: Path | None = None
    caps: Path | None = None
    carbon: Path | None = None
    factors: Path | None = None
    model_kind: ModelKind = ModelKind.FIVE
    proxies: tuple[str, ...] = ("GHG",)
    risk_kind: RiskKind = RiskKind.VAR
    p: float = 0.95
    convention: Convention = Convention.LOSS
    k: int | None = None
    c_rel: float | None = None
    k_grid: tuple[int, ...] | None = None
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    windows: WindowConfig = field(default_factory=WindowConfig)
    start: pd.Timestamp | None = None
    end: pd.Timestamp | None = None
    out: Path = Path("out")
    events: Path | None = None
    market: str | None = None
    policy: MissingDataPolicy = field(default_factory=MissingDataPolicy)
    elbow_tol: float = 0.01
    seed: int = 0
    jobs: int = 1
    preset: str | None = None

    def validate(self, need_files=True) -> "StudyConfig":
        if not 0.0 < self.p < 1.0:
            raise ConfigError("p must be in (0,1)")
        if need_files:
            for name in ("prices", "caps", "carbon", "factors"):
                path = getattr(self, name)
                if path is None:
                    raise ConfigError(f"config lacks required key '{name}'")
                if not Path(path).exists():
                    raise ConfigError(f"{name} file not found: {path}")
        if self.events is not None and not Path(self.events).exists():
            raise ConfigError(f"events file not found: {self.events}")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.c_rel is not None and not 0.0 < self.c_rel <= 1.0:
            raise ConfigError("c_rel must be in (0,1]")
        if self.k_grid is not None and (not self.k_grid or min(self.k_grid) < 1):
            raise ConfigError("grid k values must be at least 1")
        if not self.c_grid or any(not 0.0 < c <= 1.0 for c in self.c_grid):
            raise ConfigError("grid c_rel values must be in (0,1]")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        return self


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]


def _parse(key, raw, conv):
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for '{key}': {raw!r} ({exc})") from None


def _date(s):
    return pd.Timestamp(s)


def load_config(path=None, text: str | None = None, base_dir=None) -> StudyConfig:
    """Parse a config file (or ``text``) into a :class:`StudyConfig`."""
    if text is None:
        if path is None:
            return StudyConfig()
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        base_dir = path.parent if base_dir is None else base_dir
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       default_section="__defaults__")
    try:
        parser.read_string("[study]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}".splitlines()[0]) from None
    unknown_sections = set(parser.sections()) - {"study", "grid", "windows"}
    if unknown_sections:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown_sections))}")

    kw: dict = {}
    top = dict(parser["study"])
    for key in top:
        if key not in TOP_KEYS:
            raise ConfigError(f"unknown config key '{key}'")

    def p_(name):
        return (base / top[name]).resolve() if name in top else None

    if "preset" in top:
        kw.update(preset_values(top["preset"]))
    for name in ("prices", "caps", "carbon", "factors", "events"):
        if name in top:
            kw[name] = p_(name)
    if "out" in top:
        kw["out"] = p_("out")
    if "model_kind" in top:
        kw["model_kind"] = _parse("model_kind", top["model_kind"], ModelKind.parse)
    if "proxy" in top:
        kw["proxies"] = tuple(_parse("proxy", v, normalize_proxy) for v in _split(top["proxy"]))
    if "risk" in top:
        kw["risk_kind"] = _parse("risk", top["risk"], RiskKind.parse)
    if "p" in top:
        kw["p"] = _parse("p", top["p"], float)
    if "convention" in top:
        kw["convention"] = _parse("convention", top["convention"], Convention.parse)
    if "k" in top:
        kw["k"] = _parse("k", top["k"], int)
    if "c_rel" in top:
        kw["c_rel"] = _parse("c_rel", top["c_rel"], float)
    for name in ("start", "end"):
        if name in top:
            kw[name] = _parse(name, top[name], _date)
    if "market" in top:
        kw["market"] = top["market"].strip().lower()
    policy = {}
    if "max_gap_fraction" in top:
        policy["max_gap_fraction"] = _parse("max_gap_fraction", top["max_gap_fraction"], float)
    if "ffill_limit" in top:
        policy["ffill_limit"] = _parse("ffill_limit", top["ffill_limit"], int)
    if policy:
        kw["policy"] = MissingDataPolicy(**policy)
    for name, conv in (("elbow_tol", float), ("seed", int), ("jobs", int)):
        if name in top:
            kw[name] = _parse(name, top[name], conv)

    if parser.has_section("grid"):
        grid = dict(parser["grid"])
        for key in grid:
            if key not in GRID_KEYS:
                raise ConfigError(f"unknown config key 'grid.{key}'")
        if "k" in grid:
            kw["k_grid"] = tuple(_parse("grid.k", v, int) for v in _split(grid["k"]))
        if "c_rel" in grid:
            kw["c_grid"] = tuple(_parse("grid.c_rel", v, float) for v in _split(grid["c_rel"]))

    if parser.has_section("windows"):
        win = dict(parser["windows"])
        for key in win:
            if key not in WINDOW_KEYS:
                raise ConfigError(f"unknown config key 'windows.{key}'")
        wkw = {}
        if "start" in win:
            wkw["start"] = _parse("windows.start", win["start"], _date)
        for name in ("count", "in_months", "out_months", "step_months"):
            if name in win:
                wkw[name] = _parse(f"windows.{name}", win[name], int)
        kw["windows"] = WindowConfig(**wkw)

    return StudyConfig(**kw)


def preset_values(name: str) -> dict:
    key = name.strip().lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset '{name}' (see `decarb presets`)")
    pr = PRESETS[key]
    market = pr.market
    return {"preset": key, "model_kind": pr.model_kind, "proxies": (pr.proxy,),
            "risk_kind": pr.risk_kind, "k": pr.k, "c_rel": pr.c_rel, "p": pr.p, "market": market}


def apply_preset(cfg: StudyConfig, name: str) -> StudyConfig:
    return replace(cfg, **preset_values(name))
