"""Benchmark trading signals: Long Only, Sgn(Returns), and the MACD
trend-strength rule with phi position sizing."""

from __future__ import annotations

import math

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .market_data import MACD_SCALES, AssetSeries, ReturnsFrame, VolSeries

PRICE_STD_WINDOW = 63
SIGNAL_STD_WINDOW = 252


@dataclass
class PositionFrame:
    """Per asset, per date position X_t in [-1, 1]; NaN marks masked entries."""

    positions: pd.DataFrame

    def __post_init__(self):
        vals = self.positions.to_numpy(dtype=float)
        finite = vals[np.isfinite(vals)]
        if finite.size and (np.max(np.abs(finite)) > 1.0 + 1e-12):
            raise ValueError("positions must lie in [-1, 1]")

    @property
    def valid(self) -> pd.DataFrame:
        return self.positions.notna()

    def to_csv(self, path) -> None:
        rows = []
        for aid in self.positions.columns:
            col = self.positions[aid]
            block = pd.DataFrame({
                "asset_id": aid,
                "position": col,
                "valid": col.notna().astype(int),
            })
            block.index.name = "date"
            rows.append(block.reset_index())
        pd.concat(rows, ignore_index=True).to_csv(path, index=False,
                                                  date_format="%Y-%m-%d")

    @classmethod
    def from_csv(cls, path) -> "PositionFrame":
        df = pd.read_csv(path, parse_dates=["date"])
        wide = df.pivot(index="date", columns="asset_id", values="position")
        wide.columns = [str(c) for c in wide.columns]
        wide.columns.name = None
        return cls(wide.sort_index())


def long_only(vol: VolSeries) -> PositionFrame:
    """X_t = 1 wherever the asset has a valid volatility estimate."""
    pos = vol.ann.notna().astype(float)
    pos[vol.ann.isna()] = np.nan
    return PositionFrame(pos)


def sgn_returns(returns: ReturnsFrame, lookback: int = 252) -> PositionFrame:
    """X_t = sgn(r_{t-252,t}); sgn(0) = 0 (flat on an exact tie).

    Masked until the asset has `lookback` prior observations.
    """
    if lookback not in returns.horizon:
        raise KeyError(f"returns frame has no {lookback}-day horizon")
    r = returns.horizon[lookback]
    pos = pd.DataFrame(np.sign(r.to_numpy(dtype=float)),
                       index=r.index, columns=r.columns)
    return PositionFrame(pos)


def macd_halflife(scale: int) -> float:
    """Half-life of the price EWM at time scale S: log(0.5)/log(1 - 1/S)."""
    if scale < 2:
        raise ValueError(f"scale must be >= 2, got {scale}")
    return math.log(0.5) / math.log(1.0 - 1.0 / scale)


def macd_indicator(asset: AssetSeries, short: int, long: int) -> pd.Series:
    """Volatility-normalised MACD trend strength Y_t on the asset's calendar.

    m(S) is the EWM price average with decay 1 - 1/S (half-life
    log(0.5)/log(1-1/S)); MACD = m(short) - m(long); q_t = MACD / std of the
    trailing 63 prices; Y_t = q_t / std of the trailing 252 q values.  The
    rolling stds are plain sample standard deviations over windows of
    exactly 63 and 252 observations inclusive of t.  Zero denominators
    (constant prices) mask the value.
    """
    if not (long > short >= 2):
        raise ValueError(f"need long > short >= 2, got short={short} long={long}")
    p = asset.prices
    m_s = p.ewm(alpha=1.0 / short, adjust=True).mean()
    m_l = p.ewm(alpha=1.0 / long, adjust=True).mean()
    std_p = p.rolling(PRICE_STD_WINDOW).std(ddof=1)
    q = (m_s - m_l) / std_p
    q = q.replace([np.inf, -np.inf], np.nan)
    std_q = q.rolling(SIGNAL_STD_WINDOW).std(ddof=1)
    y = q / std_q
    return y.replace([np.inf, -np.inf], np.nan).rename(asset.asset_id)


def phi(y):
    """Position-sizing response y * exp(-y^2/4) / 0.89; peaks at |y| = sqrt(2)."""
    y = np.asarray(y, dtype=float)
    out = y * np.exp(-(y ** 2) / 4.0) / 0.89
    return out if out.ndim else float(out)


def macd_rule(assets: list[AssetSeries], average: bool = False) -> PositionFrame:
    """Composite MACD position: Y~_t = sum of Y_t(S,L) over the three scale
    pairs (8,24), (16,48), (32,96); X_t = phi(Y~_t) clamped to [-1, 1].

    The sum follows the composite signal definition literally; `average`
    divides by the number of scale pairs instead.  A masked constituent
    masks the position.
    """
    from .market_data import union_calendar

    cal = union_calendar(assets)
    cols = {}
    for a in assets:
        total = None
        for s, l in MACD_SCALES:
            y = macd_indicator(a, s, l)
            total = y if total is None else total + y  # NaN propagates
        if average:
            total = total / len(MACD_SCALES)
        cols[a.asset_id] = pd.Series(
            np.clip(phi(total.to_numpy()), -1.0, 1.0),
            index=total.index).reindex(cal)
    pos = pd.DataFrame(cols, index=cal)[[a.asset_id for a in assets]]
    return PositionFrame(pos)
