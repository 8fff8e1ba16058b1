"""Time-series momentum strategies: classical signal rules, learned trading
signals trained by direct Sharpe optimisation, and a volatility-scaled
walk-forward backtest."""

from .backtester import (apply_costs, cost_sweep, rescale_to_target,
                         tsmom_returns, turnover)
from .classical_rules import (PositionFrame, long_only, macd_rule, phi,
                              sgn_returns)
from .market_data import (AssetSeries, DataError, build_features,
                          compute_returns, exante_vol, load_csv)
from .momentum_networks import (ARCHITECTURES, LOSS_KINDS, build_model,
                                load_checkpoint, save_checkpoint)
from .objectives import Batch, compute_loss
from .perf_metrics import (crossval_report, max_drawdown, summarise,
                           reports_to_frame)
from .synth import synth_prices
from .trainer import (HyperParams, TrainConfig, TrainingError, random_search,
                      train_model, walk_forward)

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES", "AssetSeries", "Batch", "DataError", "HyperParams",
    "LOSS_KINDS", "PositionFrame", "TrainConfig", "TrainingError",
    "apply_costs", "build_features", "build_model", "compute_loss",
    "compute_returns", "cost_sweep", "crossval_report", "exante_vol",
    "load_checkpoint", "load_csv", "long_only", "macd_rule", "max_drawdown",
    "phi", "random_search", "reports_to_frame", "rescale_to_target",
    "save_checkpoint", "sgn_returns", "summarise", "synth_prices",
    "train_model", "tsmom_returns", "turnover", "walk_forward",
]
