"""Price ingestion, returns, ex-ante volatility and the 8-feature input matrix.

Conventions used throughout the package:

* dates are pandas Timestamps; each asset keeps its own calendar and frames
  are aligned on the union calendar with NaN for unobserved days (no
  forward-fill);
* returns are simple (arithmetic), r_{t,t+1} = p_{t+1}/p_t - 1, indexed at
  the position date t;
* EWM statistics use the span convention alpha = 2/(span+1) with explicit
  normalised prefix weights and bias-uncorrected variance, half-life inputs
  use lambda = 0.5^(1/HL);
* annualisation constant is 252 trading days.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

TRADING_DAYS = 252
VOL_SPAN = 60
SIGMA_TGT = 0.15
HORIZONS = (1, 21, 63, 126, 252)
MACD_SCALES = ((8, 24), (16, 48), (32, 96))
FEATURE_COLUMNS = tuple(f"ret_norm_{k}" for k in HORIZONS) + tuple(
    f"macd_{s}_{l}" for s, l in MACD_SCALES)

# vols at or below this (annualised) mark the asset untradeable that day
MIN_VOL = 1e-12


class DataError(ValueError):
    """Malformed or unusable input data (CLI exit code 2)."""


@dataclass
class AssetSeries:
    """One instrument's dated price history.

    Dates strictly increasing, prices strictly positive, no duplicates.
    """

    asset_id: str
    prices: pd.Series

    def __post_init__(self):
        if not isinstance(self.prices.index, pd.DatetimeIndex):
            raise DataError(f"{self.asset_id}: index must be datetimes")
        if len(self.prices) == 0:
            raise DataError(f"{self.asset_id}: empty series")
        if self.prices.index.has_duplicates:
            raise DataError(f"{self.asset_id}: duplicate dates")
        if not self.prices.index.is_monotonic_increasing:
            self.prices = self.prices.sort_index()
        vals = self.prices.to_numpy(dtype=float)
        if not np.all(np.isfinite(vals) & (vals > 0)):
            raise DataError(f"{self.asset_id}: prices must be positive finite")
        self.prices = self.prices.astype(float)
        self.prices.name = self.asset_id

    def __len__(self) -> int:
        return len(self.prices)


@dataclass
class LoadResult:
    assets: list[AssetSeries]
    dropped_rows: int


@dataclass
class ReturnsFrame:
    """Union-calendar return frames.

    next_day: r_{t,t+1} indexed at t (the return a position at t captures).
    past_day: r_{t-1,t} indexed at t (the latest realised daily return).
    horizon[k]: r_{t-k,t}, defined once the asset has >= k prior observations.
    All shifts are per asset on its own calendar, not the union calendar.
    """

    next_day: pd.DataFrame
    past_day: pd.DataFrame
    horizon: dict[int, pd.DataFrame] = field(default_factory=dict)


@dataclass
class VolSeries:
    """Annualised ex-ante volatility per asset; NaN where undefined or where
    the estimate degenerates to zero (untradeable days)."""

    ann: pd.DataFrame


def union_calendar(assets: list[AssetSeries]) -> pd.DatetimeIndex:
    idx = pd.DatetimeIndex([])
    for a in assets:
        idx = idx.union(a.prices.index)
    return idx


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_dates(raw: pd.Series, line_offset: int = 2) -> pd.DatetimeIndex:
    parsed = pd.to_datetime(raw, format="ISO8601", errors="coerce")
    bad = parsed.isna()
    if bad.any():
        row = int(np.argmax(bad.to_numpy())) + line_offset
        raise DataError(f"unparseable date {raw.iloc[int(np.argmax(bad.to_numpy()))]!r} "
                        f"at line {row}")
    return pd.DatetimeIndex(parsed)


def load_csv(path, schema: str = "wide") -> LoadResult:
    """Read a price CSV into per-asset series.

    Two schemas: wide (`date,<asset1>,<asset2>,...`) and long
    (`date,asset_id,price`).  Dates must be ISO-8601.  Cells with
    non-numeric or non-positive prices are dropped and counted; empty cells
    in the wide schema just mean the asset did not trade that day.
    Duplicate (asset, date) pairs reject the whole file.
    """
    if schema not in ("wide", "long"):
        raise DataError(f"unknown schema {schema!r} (use 'wide' or 'long')")
    try:
        df = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if df.shape[1] < 2:
        raise DataError(f"{path}: need at least a date column and one price column")
    df.columns = [str(c).strip() for c in df.columns]

    if schema == "long":
        required = {"date", "asset_id", "price"}
        if set(df.columns) != required:
            raise DataError(f"long schema needs columns {sorted(required)}, "
                            f"got {list(df.columns)}")
        dates = _parse_dates(df["date"])
        keys = pd.MultiIndex.from_arrays([df["asset_id"], dates])
        dup = keys.duplicated()
        if dup.any():
            row = int(np.argmax(dup)) + 2
            raise DataError(f"duplicate (asset,date) pair at line {row}")
        raw = df["price"]
        absent = raw.isna() | (raw.str.strip() == "")
        values = pd.to_numeric(raw, errors="coerce")
        good = (~absent) & values.notna() & (values > 0)
        dropped = int((~good & ~absent).sum())
        assets = []
        for aid in df["asset_id"].drop_duplicates():
            sel = good.to_numpy() & (df["asset_id"] == aid).to_numpy()
            if not sel.any():
                raise DataError(f"empty series for asset {aid!r}")
            s = pd.Series(values.to_numpy(dtype=float)[sel], index=dates[sel])
            assets.append(AssetSeries(str(aid), s))
        return LoadResult(assets, dropped)

    # wide
    if df.columns[0] != "date":
        raise DataError(f"wide schema needs first column 'date', got {df.columns[0]!r}")
    dates = _parse_dates(df["date"])
    dup = dates.duplicated()
    if dup.any():
        row = int(np.argmax(dup)) + 2
        raise DataError(f"duplicate date at line {row}")
    dropped = 0
    assets = []
    for col in df.columns[1:]:
        raw = df[col]
        absent = raw.isna() | (raw.str.strip() == "")
        values = pd.to_numeric(raw, errors="coerce")
        good = (~absent) & values.notna() & (values > 0)
        dropped += int((~good & ~absent).sum())
        if not good.any():
            raise DataError(f"empty series for asset {col!r}")
        s = pd.Series(values.to_numpy(dtype=float)[good.to_numpy()],
                      index=dates[good.to_numpy()])
        assets.append(AssetSeries(str(col), s))
    return LoadResult(assets, dropped)


# ---------------------------------------------------------------------------
# EWM moments


def _check_span(span: int) -> float:
    if span < 2:
        raise ValueError(f"span must be >= 2, got {span}")
    return 2.0 / (span + 1.0)


def ewm_mean(series: pd.Series, span: int, min_periods: int | None = None) -> pd.Series:
    """Causal EWM mean with normalised prefix weights (1-alpha)^k."""
    _check_span(span)
    mp = min(span, 10) if min_periods is None else min_periods
    return series.ewm(span=span, adjust=True, min_periods=mp).mean()


def ewm_std(series: pd.Series, span: int, min_periods: int | None = None) -> pd.Series:
    """Causal EWM standard deviation, decay alpha = 2/(span+1).

    Uses the bias-uncorrected second moment (E_w[x^2] - E_w[x]^2 under
    normalised prefix weights) so values match an explicit-weight
    computation exactly.  Warm-up: first min(span, 10) points are masked
    unless min_periods overrides.
    """
    _check_span(span)
    mp = min(span, 10) if min_periods is None else min_periods
    var = series.ewm(span=span, adjust=True, min_periods=mp).var(bias=True)
    return np.sqrt(var.clip(lower=0.0))


def halflife_std(series: pd.Series, halflife: float,
                 min_periods: int = 10) -> pd.Series:
    """EWM std under the half-life convention lambda = 0.5^(1/HL)."""
    if halflife <= 0:
        raise ValueError(f"halflife must be positive, got {halflife}")
    var = series.ewm(halflife=halflife, adjust=True,
                     min_periods=min_periods).var(bias=True)
    return np.sqrt(var.clip(lower=0.0))


# ---------------------------------------------------------------------------
# returns and volatility


def compute_returns(assets: list[AssetSeries],
                    horizons: tuple[int, ...] = HORIZONS) -> ReturnsFrame:
    cal = union_calendar(assets)
    nxt, past, hor = {}, {}, {k: {} for k in horizons}
    for a in assets:
        p = a.prices
        past[a.asset_id] = (p / p.shift(1) - 1.0).reindex(cal)
        nxt[a.asset_id] = (p.shift(-1) / p - 1.0).reindex(cal)
        for k in horizons:
            hor[k][a.asset_id] = (p / p.shift(k) - 1.0).reindex(cal)
    cols = [a.asset_id for a in assets]
    return ReturnsFrame(
        next_day=pd.DataFrame(nxt, index=cal)[cols],
        past_day=pd.DataFrame(past, index=cal)[cols],
        horizon={k: pd.DataFrame(v, index=cal)[cols] for k, v in hor.items()},
    )


def exante_vol(returns: ReturnsFrame, span: int = VOL_SPAN) -> VolSeries:
    """sigma_t = EWM std of daily returns (span 60) * sqrt(252), annualised.

    Strictly causal: sigma_t uses returns up to and including r_{t-1,t}.
    Requires 60 daily returns before the first emitted value.  Degenerate
    zero estimates (constant prices) are masked: the asset is untradeable
    until its variance becomes positive again.
    """
    out = {}
    for aid in returns.past_day.columns:
        r = returns.past_day[aid].dropna()
        if len(r) < span:
            out[aid] = pd.Series(np.nan, index=returns.past_day.index)
            continue
        sd = ewm_std(r, span=span, min_periods=span) * math.sqrt(TRADING_DAYS)
        sd[sd <= MIN_VOL] = np.nan
        out[aid] = sd.reindex(returns.past_day.index)
    return VolSeries(ann=pd.DataFrame(out, index=returns.past_day.index)[
        list(returns.past_day.columns)])


# ---------------------------------------------------------------------------
# winsorisation


def winsorise(series: pd.Series, halflife: float = 252.0, n_std: float = 5.0,
              warmup: int = 10) -> pd.Series:
    """Cap/floor each value to within n_std EWM standard deviations of the
    EWM mean, decay lambda = 0.5^(1/halflife).

    The statistics at t are computed over the strict prefix of already
    clipped outputs, which makes the transform causal and exactly
    idempotent.  The first `warmup` observations pass through unchanged, as
    does any point whose prefix std is zero (degenerate constant prefix).
    """
    lam = 0.5 ** (1.0 / halflife)
    x = series.to_numpy(dtype=float)
    out = x.copy()
    sw = sx = sx2 = 0.0  # decayed weight / first / second moment sums
    seen = 0
    for t in range(len(x)):
        if not math.isfinite(x[t]):
            continue
        if seen >= warmup:
            m = sx / sw
            sd = math.sqrt(max(sx2 / sw - m * m, 0.0))
            if sd > 0.0:
                lo, hi = m - n_std * sd, m + n_std * sd
                out[t] = min(max(x[t], lo), hi)
        sw = lam * sw + 1.0
        sx = lam * sx + out[t]
        sx2 = lam * sx2 + out[t] * out[t]
        seen += 1
    return pd.Series(out, index=series.index, name=series.name)


# ---------------------------------------------------------------------------
# feature matrix


@dataclass
class FeatureMatrix:
    """Per asset, per date: 5 vol-normalised returns + 3 MACD indicators.

    Each frame has FEATURE_COLUMNS plus a boolean `valid` column; a row is
    valid only when all 8 entries are finite.
    """

    frames: dict[str, pd.DataFrame]

    @property
    def asset_ids(self) -> list[str]:
        return list(self.frames)

    def to_csv(self, path) -> None:
        rows = []
        for aid, frame in self.frames.items():
            block = frame[list(FEATURE_COLUMNS)].copy()
            block.columns = [f"f{i}" for i in range(1, 9)]
            block.insert(0, "asset_id", aid)
            block["valid"] = frame["valid"].astype(int)
            block.index.name = "date"
            rows.append(block.reset_index())
        pd.concat(rows, ignore_index=True).to_csv(path, index=False, date_format="%Y-%m-%d")

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        df = pd.read_csv(path, parse_dates=["date"])
        frames = {}
        for aid, g in df.groupby("asset_id", sort=False):
            g = g.sort_values("date").set_index("date")
            frame = g[[f"f{i}" for i in range(1, 9)]].copy()
            frame.columns = list(FEATURE_COLUMNS)
            frame["valid"] = g["valid"].astype(bool)
            frames[str(aid)] = frame
        return cls(frames)


def build_features(assets: list[AssetSeries],
                   returns: ReturnsFrame | None = None,
                   vol: VolSeries | None = None) -> FeatureMatrix:
    """Assemble u_t per asset: r_{t-k,t}/(sigma_daily*sqrt(k)) for
    k in {1,21,63,126,252} with sigma_daily = sigma_t/sqrt(252), plus the
    three composite MACD indicators Y_t for (S,L) in {(8,24),(16,48),(32,96)}.
    """
    from . import classical_rules  # late import; classical_rules uses our types

    if returns is None:
        returns = compute_returns(assets)
    if vol is None:
        vol = exante_vol(returns)
    frames = {}
    for a in assets:
        own = a.prices.index
        sigma_daily = (vol.ann[a.asset_id] / math.sqrt(TRADING_DAYS)).reindex(own)
        frame = pd.DataFrame(index=own)
        for k in HORIZONS:
            rk = returns.horizon[k][a.asset_id].reindex(own)
            frame[f"ret_norm_{k}"] = rk / (sigma_daily * math.sqrt(k))
        for s, l in MACD_SCALES:
            frame[f"macd_{s}_{l}"] = classical_rules.macd_indicator(a, s, l)
        vals = frame.to_numpy(dtype=float)
        frame["valid"] = np.isfinite(vals).all(axis=1)
        frame.loc[~frame["valid"], list(FEATURE_COLUMNS)] = np.nan
        frames[a.asset_id] = frame
    return FeatureMatrix(frames)
