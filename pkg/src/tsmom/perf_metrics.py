"""Performance statistics for daily return series: annualised return/vol,
downside deviation, maximum drawdown, Sharpe/Sortino/Calmar, hit rate and
profit/loss asymmetry, plus block-wise cross-validation aggregates.

Reporting uses the sample (M-1) standard deviation; the population form is
reserved for the training objective.  Metrics that are undefined on a given
series (no losing days, zero volatility) are carried as NaN and rendered as
"n/a".
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np
import pandas as pd

from .market_data import TRADING_DAYS

# column order used by every emitted table
METRIC_COLUMNS = ("E[Return]", "Vol.", "Downside Dev.", "MDD", "Sharpe",
                  "Sortino", "Calmar", "% +ve", "AveP/AveL")


@dataclass(frozen=True)
class PerfReport:
    expected_return: float
    volatility: float
    downside_deviation: float
    max_drawdown: float
    sharpe: float
    sortino: float
    calmar: float
    frac_positive: float
    ave_p_over_l: float

    def as_row(self) -> dict:
        return dict(zip(METRIC_COLUMNS, (
            self.expected_return, self.volatility, self.downside_deviation,
            self.max_drawdown, self.sharpe, self.sortino, self.calmar,
            self.frac_positive, self.ave_p_over_l)))


def _ratio(num: float, den: float) -> float:
    if not math.isfinite(den) or den == 0.0:
        return math.nan
    return num / den


def _clean(returns) -> np.ndarray:
    r = np.asarray(pd.Series(returns).dropna(), dtype=float)
    if r.size == 0:
        raise ValueError("empty return series")
    return r


def _sample_std(x: np.ndarray) -> float:
    """ddof=1 std with an exactness guard: a constant series has zero
    sample deviation by definition, but mean-subtraction rounding would
    otherwise leave ~1e-17 residue and fake a finite ratio."""
    if x.size < 2:
        return math.nan
    if np.ptp(x) == 0.0:
        return 0.0
    return float(x.std(ddof=1))


def max_drawdown(returns, compound: bool = True) -> float:
    """Worst peak-to-trough decline of the wealth curve W = prod(1 + r)
    (leading wealth 1), as a fraction of the peak.  compound=False uses the
    additive curve 1 + cumsum(r) instead."""
    r = _clean(returns)
    if compound:
        wealth = np.concatenate([[1.0], np.cumprod(1.0 + r)])
    else:
        wealth = np.concatenate([[1.0], 1.0 + np.cumsum(r)])
    peak = np.maximum.accumulate(wealth)
    return float(np.max((peak - wealth) / peak))


def annualised_sharpe(returns) -> float:
    r = _clean(returns)
    return _ratio(r.mean() * TRADING_DAYS,
                  _sample_std(r) * math.sqrt(TRADING_DAYS))


def summarise(returns) -> PerfReport:
    """All headline statistics of a daily return series.

    Downside deviation is the sample std over strictly negative days only
    (zeros excluded), annualised; %+ve counts strictly positive days.
    """
    r = _clean(returns)
    if r.size < 2:
        raise ValueError("need at least 2 returns")
    ann_ret = r.mean() * TRADING_DAYS
    ann_vol = _sample_std(r) * math.sqrt(TRADING_DAYS)
    neg = r[r < 0]
    pos = r[r > 0]
    downside = _sample_std(neg) * math.sqrt(TRADING_DAYS)
    mdd = max_drawdown(r)
    ave_p = pos.mean() if pos.size else math.nan
    ave_l = abs(neg.mean()) if neg.size else math.nan
    return PerfReport(
        expected_return=float(ann_ret),
        volatility=float(ann_vol),
        downside_deviation=float(downside),
        max_drawdown=mdd,
        sharpe=_ratio(ann_ret, ann_vol),
        sortino=_ratio(ann_ret, downside),
        calmar=_ratio(ann_ret, mdd),
        frac_positive=float((r > 0).mean()),
        ave_p_over_l=_ratio(ave_p, ave_l),
    )


@dataclass(frozen=True)
class CrossValReport:
    """Per metric: mean and +/- 2 sample-std band across evaluation blocks;
    blocks where a metric is n/a are excluded from that metric's aggregate
    and counted."""

    mean: dict[str, float]
    band: dict[str, float]
    n_excluded: dict[str, int]
    n_blocks: int


def crossval_report(reports: list[PerfReport]) -> CrossValReport:
    if not reports:
        raise ValueError("no blocks")
    mean, band, excl = {}, {}, {}
    for f, col in zip(fields(PerfReport), METRIC_COLUMNS):
        vals = np.array([getattr(rep, f.name) for rep in reports], dtype=float)
        ok = vals[np.isfinite(vals)]
        excl[col] = int(len(vals) - len(ok))
        mean[col] = float(ok.mean()) if len(ok) else math.nan
        band[col] = 2.0 * _sample_std(ok)
    return CrossValReport(mean=mean, band=band, n_excluded=excl,
                          n_blocks=len(reports))


# ---------------------------------------------------------------------------
# emission


def _fmt(v: float) -> str:
    return "n/a" if not math.isfinite(v) else f"{v:.6g}"


def reports_to_frame(reports: dict[str, PerfReport]) -> pd.DataFrame:
    return pd.DataFrame({name: rep.as_row() for name, rep in reports.items()},
                        index=list(METRIC_COLUMNS)).T


def write_reports_csv(reports: dict[str, PerfReport], path) -> None:
    frame = reports_to_frame(reports)
    frame.index.name = "strategy"
    frame.to_csv(path)


def write_reports_json(reports: dict[str, PerfReport], path) -> None:
    payload = {name: {k: (None if not math.isfinite(v) else v)
                      for k, v in rep.as_row().items()}
               for name, rep in reports.items()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def write_crossval_csv(report: CrossValReport, path) -> None:
    rows = [{"metric": col,
             "mean": _fmt(report.mean[col]),
             "band_2sd": _fmt(report.band[col]),
             "n_excluded": report.n_excluded[col]}
            for col in METRIC_COLUMNS]
    pd.DataFrame(rows).to_csv(path, index=False)
