"""Portfolio construction from positions: volatility-scaled captured
returns, equal-weight aggregation across the assets tradeable each day,
portfolio-level rescaling to the volatility target, turnover accounting,
and transaction-cost adjustment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .classical_rules import PositionFrame
from .market_data import (ReturnsFrame, SIGMA_TGT, TRADING_DAYS, VOL_SPAN,
                          VolSeries, ewm_std)
from .perf_metrics import annualised_sharpe

LEVERAGE_CAP = 20.0
DEFAULT_COST_GRID_BPS = (0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass
class StrategyReturns:
    """Captured returns R(i,t) = X_t * (sigma_tgt / sigma_t) * r_{t,t+1} per
    asset (NaN where the asset is untradeable) and their equal-weight mean
    across the N_t valid assets.  Dates with N_t = 0 are omitted from the
    portfolio series."""

    asset_returns: pd.DataFrame
    portfolio: pd.Series
    n_assets: pd.Series

    def to_csv(self, path) -> None:
        long = (self.asset_returns.rename_axis("date")
                .reset_index()
                .melt(id_vars="date", var_name="asset_id", value_name="captured_return")
                .dropna(subset=["captured_return"])
                .sort_values(["date", "asset_id"]))
        long.to_csv(path, index=False)


@dataclass
class TurnoverFrame:
    """Daily turnover zeta_t = sigma_tgt * |X_t/sigma_t - X_{t-1}/sigma_{t-1}|
    per asset (previous position 0 on each asset's first tradeable day) and
    the cross-asset average."""

    asset_turnover: pd.DataFrame
    average: pd.Series

    def to_csv(self, path) -> None:
        frame = self.asset_turnover.copy()
        frame["average"] = self.average
        frame.rename_axis("date").to_csv(path)


def _aligned(positions: PositionFrame, returns: pd.DataFrame,
             vol: VolSeries) -> tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    X = positions.positions
    r = returns.reindex(X.index)[X.columns]
    sig = vol.ann.reindex(X.index)[X.columns]
    return X, r, sig


def tsmom_returns(positions: PositionFrame, returns: ReturnsFrame,
                  vol: VolSeries) -> StrategyReturns:
    """Equation-of-motion of the strategy: each asset contributes
    X_t * (sigma_tgt / sigma_t) * r_{t,t+1}; the portfolio return at t is
    the mean over assets with a position, a vol estimate, and a next-day
    return."""
    X, r, sig = _aligned(positions, returns.next_day, vol)
    valid = X.notna() & r.notna() & sig.notna()
    captured = (X * (SIGMA_TGT / sig) * r).where(valid)
    n = valid.sum(axis=1)
    keep = n > 0
    return StrategyReturns(asset_returns=captured,
                           portfolio=captured.mean(axis=1)[keep],
                           n_assets=n[keep])


def rescale_to_target(portfolio: pd.Series, whole_sample: bool = False,
                      cap: float = LEVERAGE_CAP) -> pd.Series:
    """Scale portfolio returns to the 15% volatility target.

    Default mode is causal: divide by the EWM (span 60, annualised) vol of
    the portfolio series known strictly before each date, the same
    estimator used per asset; warm-up dates are dropped.  The leverage
    ratio sigma_tgt/sigma_hat is capped.  whole_sample=True instead uses
    the full-sample std: non-causal, for table reproduction only.
    """
    port = portfolio.dropna()
    if whole_sample:
        sd = port.std(ddof=1) * math.sqrt(TRADING_DAYS)
        factor = min(SIGMA_TGT / sd, cap) if sd > 0 else cap
        return port * factor
    if len(port) <= VOL_SPAN:
        raise ValueError(f"need more than {VOL_SPAN} portfolio returns")
    sigma_hat = (ewm_std(port, span=VOL_SPAN, min_periods=VOL_SPAN)
                 * math.sqrt(TRADING_DAYS)).shift(1)
    factor = (SIGMA_TGT / sigma_hat).clip(upper=cap)
    return (port * factor).dropna()


def turnover(positions: PositionFrame, vol: VolSeries,
             sigma_tgt: float = SIGMA_TGT) -> TurnoverFrame:
    """zeta per asset over its tradeable dates; gaps are skipped (the last
    tradeable day's position carries over) and the first tradeable day
    starts from a zero position."""
    X = positions.positions
    sig = vol.ann.reindex(X.index)[X.columns]
    out = {}
    for aid in X.columns:
        scaled = (X[aid] / sig[aid]).dropna()
        if scaled.empty:
            out[aid] = pd.Series(np.nan, index=X.index)
            continue
        prev = scaled.shift(1)
        prev.iloc[0] = 0.0
        out[aid] = (sigma_tgt * (scaled - prev).abs()).reindex(X.index)
    frame = pd.DataFrame(out, index=X.index)[X.columns]
    return TurnoverFrame(asset_turnover=frame, average=frame.mean(axis=1))


def apply_costs(strategy: StrategyReturns, turn: TurnoverFrame,
                c: float) -> StrategyReturns:
    """Cost-adjusted captured returns R(i,t) - c*zeta(i,t), re-aggregated
    as the equal-weight portfolio over the same valid set."""
    if c < 0:
        raise ValueError("cost must be nonnegative")
    R = strategy.asset_returns
    zeta = turn.asset_turnover.reindex(R.index)[R.columns]
    adjusted = (R - c * zeta).where(R.notna())
    return StrategyReturns(asset_returns=adjusted,
                           portfolio=adjusted.mean(axis=1)[strategy.n_assets.index],
                           n_assets=strategy.n_assets.copy())


def cost_sweep(strategy: StrategyReturns, turn: TurnoverFrame,
               costs_bps=DEFAULT_COST_GRID_BPS) -> pd.DataFrame:
    """Ex-cost annualised Sharpe per transaction-cost assumption, as a
    plot-ready frame with columns cost_bps, sharpe."""
    costs = list(costs_bps)
    if any(b < 0 for b in costs) or costs != sorted(costs):
        raise ValueError("costs must be nonnegative and ascending")
    rows = []
    for bps in costs:
        adj = apply_costs(strategy, turn, bps * 1e-4)
        rows.append({"cost_bps": float(bps),
                     "sharpe": annualised_sharpe(adj.portfolio)})
    return pd.DataFrame(rows)
