"""Batch command-line surface.

Commands: ingest (data file -> feature/return/vol CSVs), synth (seeded
synthetic panel), backtest (classical or walk-forward-trained strategy ->
report tables and plot-ready CSVs), report (re-summarise a saved portfolio
return series).

Options may also come from a `key = value` config file (--config); explicit
command-line flags win.  Exit codes: 0 success, 2 bad input data or
configuration, 3 training failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from . import backtester as bt
from . import classical_rules as cr
from . import perf_metrics as pm
from .market_data import (DataError, build_features, compute_returns,
                          exante_vol, load_csv)
from .momentum_networks import (ARCHITECTURES, LOSS_KINDS, build_model,
                                save_checkpoint)
from .synth import KINDS, synth_prices, write_manifest, write_wide_csv
from .trainer import TrainConfig, TrainingError, walk_forward

CLASSICAL = ("long_only", "sgn", "macd")
STRATEGIES = CLASSICAL + ARCHITECTURES


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    out: Path
    data: Path | None = None
    schema: str = "wide"
    strategy: str = "sgn"
    loss: str | None = None
    cost_bps: float = 0.0
    block_years: int = 5
    seed: int = 0
    workers: int = 1
    kind: str = "trend"
    n_assets: int = 10
    periods: int = 2520
    # config-file-only training knobs (no dedicated flags)
    random_search_iters: int = 50
    max_epochs: int = 100
    patience: int = 25

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; "
                              f"choose from {STRATEGIES}")
        if self.strategy in CLASSICAL:
            if self.loss is not None:
                raise ConfigError("--loss applies only to learned strategies")
        else:
            if self.loss is None:
                self.loss = "sharpe"
            if self.loss not in LOSS_KINDS:
                raise ConfigError(f"unknown loss {self.loss!r}; "
                                  f"choose from {LOSS_KINDS}")
        if self.cost_bps < 0:
            raise ConfigError("--cost-bps must be nonnegative")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}")
        if self.block_years < 1 or self.workers < 1:
            raise ConfigError("--block-years and --workers must be >= 1")


def parse_config_file(path) -> dict:
    """key = value lines; blank lines and #-comments ignored."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


_INT_KEYS = {"block_years", "seed", "workers", "n_assets", "periods",
             "random_search_iters", "max_epochs", "patience"}
_FLOAT_KEYS = {"cost_bps"}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(parse_config_file(args.config))
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        merged[key] = val
    for key in list(merged):
        if key in _INT_KEYS:
            merged[key] = int(merged[key])
        elif key in _FLOAT_KEYS:
            merged[key] = float(merged[key])
    if "out" not in merged:
        raise ConfigError("--out is required")
    merged["out"] = Path(merged["out"])
    if "data" in merged:
        merged["data"] = Path(merged["data"])
    return RunConfig(command=args.command, **merged)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsmom",
        description="volatility-scaled momentum signals, training, backtests")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data_required):
        p.add_argument("--config", help="key = value options file")
        p.add_argument("--out", help="output directory")
        if data_required:
            p.add_argument("--data", help="input CSV path")
            p.add_argument("--schema", choices=("wide", "long"), default=None)

    p = sub.add_parser("ingest", help="data file -> features/returns/vol CSVs")
    common(p, data_required=True)

    p = sub.add_parser("synth", help="generate a synthetic price panel")
    common(p, data_required=False)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--kind", choices=KINDS, default=None)
    p.add_argument("--n-assets", dest="n_assets", type=int, default=None)
    p.add_argument("--periods", type=int, default=None)

    p = sub.add_parser("backtest", help="run a strategy end to end")
    common(p, data_required=True)
    p.add_argument("--strategy", choices=STRATEGIES, default=None)
    p.add_argument("--loss", choices=LOSS_KINDS, default=None)
    p.add_argument("--cost-bps", dest="cost_bps", type=float, default=None)
    p.add_argument("--block-years", dest="block_years", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("report", help="summarise a saved return series")
    common(p, data_required=True)
    p.add_argument("--block-years", dest="block_years", type=int, default=None)
    return parser


# ---------------------------------------------------------------------------
# commands


def _load(cfg: RunConfig):
    if cfg.data is None:
        raise ConfigError("--data is required")
    loaded = load_csv(cfg.data, schema=cfg.schema)
    returns = compute_returns(loaded.assets)
    vol = exante_vol(returns)
    return loaded, returns, vol


def _returns_long(returns) -> pd.DataFrame:
    nxt = (returns.next_day.rename_axis("date").reset_index()
           .melt(id_vars="date", var_name="asset_id", value_name="next_return"))
    past = (returns.past_day.rename_axis("date").reset_index()
            .melt(id_vars="date", var_name="asset_id", value_name="past_return"))
    frame = nxt.merge(past, on=["date", "asset_id"])
    frame = frame.dropna(subset=["next_return", "past_return"], how="all")
    return frame.sort_values(["date", "asset_id"])


def cmd_ingest(cfg: RunConfig) -> int:
    loaded, returns, vol = _load(cfg)
    features = build_features(loaded.assets, returns, vol)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    features.to_csv(out / "features.csv")
    _returns_long(returns).to_csv(out / "returns.csv", index=False)
    (vol.ann.rename_axis("date").reset_index()
        .melt(id_vars="date", var_name="asset_id", value_name="vol_ann")
        .dropna(subset=["vol_ann"])
        .sort_values(["date", "asset_id"])
        .to_csv(out / "vol.csv", index=False))
    cal = returns.next_day.index
    summary = {
        "assets": [a.asset_id for a in loaded.assets],
        "n_assets": len(loaded.assets),
        "first_date": str(cal[0].date()),
        "last_date": str(cal[-1].date()),
        "dropped_rows": loaded.dropped_rows,
    }
    (out / "ingest_summary.json").write_text(json.dumps(summary, indent=2,
                                                        sort_keys=True))
    print(f"ingested {summary['n_assets']} assets "
          f"{summary['first_date']}..{summary['last_date']} "
          f"({summary['dropped_rows']} rows dropped) -> {out}")
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    assets, manifest = synth_prices(n_assets=cfg.n_assets, periods=cfg.periods,
                                    seed=cfg.seed, kind=cfg.kind)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_wide_csv(assets, cfg.out / "synthetic.csv")
    write_manifest(manifest, cfg.out / "synthetic_manifest.json")
    print(f"wrote {len(assets)} {cfg.kind} assets x {cfg.periods} days "
          f"(seed {cfg.seed}) -> {cfg.out}")
    return 0


def _classical_positions(cfg, assets, returns, vol) -> cr.PositionFrame:
    if cfg.strategy == "long_only":
        return cr.long_only(vol)
    if cfg.strategy == "sgn":
        return cr.sgn_returns(returns)
    return cr.macd_rule(assets)


def _run_config_dict(cfg: RunConfig) -> dict:
    return {"strategy": cfg.strategy, "loss": cfg.loss,
            "cost_bps": cfg.cost_bps, "block_years": cfg.block_years,
            "seed": cfg.seed, "workers": cfg.workers,
            "random_search_iters": cfg.random_search_iters,
            "max_epochs": cfg.max_epochs, "patience": cfg.patience}


def _learned_positions(cfg, assets, returns, vol, out):
    features = build_features(assets, returns, vol)
    config = TrainConfig(architecture=cfg.strategy, loss_kind=cfg.loss,
                         seed=cfg.seed, cost_c=cfg.cost_bps * 1e-4,
                         workers=cfg.workers,
                         random_search_iters=cfg.random_search_iters,
                         max_epochs=cfg.max_epochs, patience=cfg.patience)
    try:
        result = walk_forward(features, returns, vol, config,
                              block_years=cfg.block_years)
    except TrainingError as e:
        (out / "run_manifest.json").write_text(json.dumps(
            {"config": _run_config_dict(cfg), "error": str(e)},
            indent=2, sort_keys=True))
        raise
    manifest = result.manifest()
    manifest["config"] = _run_config_dict(cfg)
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2,
                                                      sort_keys=True))
    for block in result.blocks:
        man = block.model_manifest
        model = build_model(man["architecture"], head=man["head"],
                            hidden_size=man["hidden_size"],
                            dropout_rate=man["dropout_rate"])
        save_checkpoint(model, block.params,
                        out / f"checkpoint_{block.boundary.date()}.json")
    return result.positions


def _year_blocks(portfolio: pd.Series, block_years: int) -> list[pd.Series]:
    first = portfolio.index[0].year
    groups = portfolio.groupby((portfolio.index.year - first) // block_years)
    return [g for _, g in groups if len(g) >= 2]


def cmd_backtest(cfg: RunConfig) -> int:
    loaded, returns, vol = _load(cfg)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    if cfg.strategy in CLASSICAL:
        positions = _classical_positions(cfg, loaded.assets, returns, vol)
    else:
        positions = _learned_positions(cfg, loaded.assets, returns, vol, out)
    positions.to_csv(out / "positions.csv")

    strat = bt.tsmom_returns(positions, returns, vol)
    turn = bt.turnover(positions, vol)
    rescaled = bt.rescale_to_target(strat.portfolio)

    strat.to_csv(out / "asset_returns.csv")
    turn.to_csv(out / "turnover.csv")
    bt.cost_sweep(strat, turn).to_csv(out / "cost_sweep.csv", index=False)

    reports = {f"{cfg.strategy}_raw": pm.summarise(strat.portfolio),
               f"{cfg.strategy}_rescaled": pm.summarise(rescaled)}
    pm.write_reports_csv(reports, out / "report.csv")
    pm.write_reports_json(reports, out / "report.json")
    blocks = _year_blocks(strat.portfolio, cfg.block_years)
    if blocks:
        pm.write_crossval_csv(
            pm.crossval_report([pm.summarise(b) for b in blocks]),
            out / "crossval.csv")

    port = strat.portfolio.rename("raw_return").to_frame()
    port["raw_wealth"] = (1.0 + strat.portfolio).cumprod()
    port["rescaled_return"] = rescaled
    port["rescaled_wealth"] = (1.0 + rescaled).cumprod()
    port.rename_axis("date").to_csv(out / "portfolio.csv")

    sharpe = reports[f"{cfg.strategy}_raw"].sharpe
    print(f"{cfg.strategy}: {len(strat.portfolio)} portfolio days, "
          f"raw Sharpe {sharpe:.3f} -> {out}")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    if cfg.data is None:
        raise ConfigError("--data is required")
    try:
        frame = pd.read_csv(cfg.data, parse_dates=["date"], index_col="date")
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot read return series {cfg.data}: {e}") from None
    col = "raw_return" if "raw_return" in frame.columns else frame.columns[0]
    series = frame[col].dropna()
    if series.empty:
        raise DataError(f"no usable returns in column {col!r} of {cfg.data}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    reports = {col: pm.summarise(series)}
    pm.write_reports_csv(reports, cfg.out / "report.csv")
    pm.write_reports_json(reports, cfg.out / "report.json")
    blocks = _year_blocks(series, cfg.block_years)
    if blocks:
        pm.write_crossval_csv(
            pm.crossval_report([pm.summarise(b) for b in blocks]),
            cfg.out / "crossval.csv")
    print(f"report for {col}: {len(series)} days -> {cfg.out}")
    return 0


COMMANDS = {"ingest": cmd_ingest, "synth": cmd_synth,
            "backtest": cmd_backtest, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except TrainingError as e:
        print(f"training error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
