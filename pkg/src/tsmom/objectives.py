"""Training objectives, all differentiable end-to-end through diff_engine.

Forecast losses (mse, binary cross-entropy) compare predictions Y against
volatility-normalised next-day returns; direct-output losses (average
return, Sharpe, cost-adjusted Sharpe) score the captured strategy returns
R = X_t * (sigma_tgt / sigma_t) * r_{t,t+1} of the emitted positions.
The Sharpe statistic is computed within each minibatch, so larger batches
give a less noisy estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diff_engine as de
from .diff_engine import Tensor
from .market_data import SIGMA_TGT, TRADING_DAYS

SHARPE_EPS = 1e-12      # variance guard for degenerate batches
PROB_CLAMP = 1e-7       # binary cross-entropy probability clamp
SQRT_252 = math.sqrt(TRADING_DAYS)


@dataclass
class Batch:
    """One minibatch of predictions and their targets.

    predictions: Tensor, shape (M,) for window models or (B, T) for
    sequence models; every element enters the loss.
    returns: next-day returns r_{t,t+1}, same shape.
    sigma_ann: annualised ex-ante vol sigma_t, same shape, strictly positive.

    For the cost-adjusted loss on window models the trainer supplies the
    model's prediction on the previous day's window plus sigma_{t-1};
    prev_valid = False marks samples with no previous day (X_{t-1} = 0).
    Sequence batches leave prev_predictions None: the previous position is
    the prediction one step earlier in the same trajectory.
    """

    predictions: Tensor
    returns: np.ndarray
    sigma_ann: np.ndarray
    prev_predictions: Tensor | None = None
    prev_sigma_ann: np.ndarray | None = None
    prev_valid: np.ndarray | None = None

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=float)
        self.sigma_ann = np.asarray(self.sigma_ann, dtype=float)
        shape = self.predictions.shape
        if self.returns.shape != shape or self.sigma_ann.shape != shape:
            raise ValueError(
                f"batch arrays must share shape {shape}, got returns "
                f"{self.returns.shape}, sigma {self.sigma_ann.shape}")
        if self.size == 0:
            raise ValueError("empty batch")
        if not np.all(np.isfinite(self.returns)):
            raise ValueError("non-finite returns in batch")
        if not np.all(np.isfinite(self.sigma_ann) & (self.sigma_ann > 0)):
            raise ValueError("sigma_ann must be positive and finite")
        if self.prev_predictions is not None:
            if self.prev_predictions.shape != shape:
                raise ValueError("prev_predictions shape mismatch")
            if self.prev_sigma_ann is None:
                raise ValueError("prev_predictions requires prev_sigma_ann")
            self.prev_sigma_ann = np.asarray(self.prev_sigma_ann, dtype=float)

    @property
    def size(self) -> int:
        return self.predictions.size


def _require(batch: Batch, min_size: int = 1) -> None:
    if batch.size < min_size:
        raise ValueError(f"loss needs at least {min_size} samples, "
                         f"got {batch.size}")


def mse_loss(batch: Batch) -> Tensor:
    """(1/M) sum (Y - r/sigma_daily)^2 with sigma_daily = sigma_ann/sqrt(252)."""
    _require(batch)
    target = batch.returns / (batch.sigma_ann / SQRT_252)
    return de.mean(de.square(batch.predictions - Tensor(target)))


def bce_loss(batch: Batch) -> Tensor:
    """Binary cross-entropy against the up-move indicator r/sigma > 0
    (strict: a zero return counts as a down day)."""
    _require(batch)
    ind = (batch.returns > 0).astype(float)
    y = de.clip(batch.predictions, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = de.mul(Tensor(ind), de.log(y))
    neg = de.mul(Tensor(1.0 - ind), de.log(Tensor(1.0) - y))
    return de.neg(de.mean(pos + neg))


def _captured_returns(x: Tensor, batch: Batch) -> Tensor:
    # R = X * (sigma_tgt * r / sigma); the scale factor is input data
    return de.mul(x, Tensor(SIGMA_TGT * batch.returns / batch.sigma_ann))


def avg_returns_loss(batch: Batch) -> Tensor:
    """Negative mean captured return."""
    _require(batch)
    return de.neg(de.mean(_captured_returns(batch.predictions, batch)))


def _neg_annualised_sharpe(r: Tensor) -> Tensor:
    mu = de.mean(r)
    var = de.mean(de.square(r)) - de.square(mu)  # population form
    return de.neg(de.div(de.mul(mu, Tensor(SQRT_252)),
                         de.sqrt(var + Tensor(SHARPE_EPS))))


def sharpe_loss(batch: Batch) -> Tensor:
    """Negative annualised in-batch Sharpe of the captured returns."""
    _require(batch, min_size=2)
    return _neg_annualised_sharpe(_captured_returns(batch.predictions, batch))


def cost_adjusted_sharpe_loss(batch: Batch, c: float) -> Tensor:
    """Sharpe loss on cost-adjusted returns
    R~ = sigma_tgt * [X_t r/sigma_t - c|X_t/sigma_t - X_{t-1}/sigma_{t-1}|].

    c is a fractional transaction cost (10 bps = 0.001).  With c = 0 this
    reduces to sharpe_loss exactly.  The first observation of each
    trajectory/asset run uses X_{t-1} = 0.
    """
    if c < 0:
        raise ValueError(f"cost must be nonnegative, got {c}")
    _require(batch, min_size=2)
    x = batch.predictions
    sigma = batch.sigma_ann

    if batch.prev_predictions is None:
        if x.values.ndim != 2:
            raise ValueError("flat batches need explicit prev_predictions; "
                             "only (B, T) sequence batches derive them")
        b = x.shape[0]
        x_prev = de.concat([Tensor(np.zeros((b, 1))), x[:, :-1]], axis=1)
        sigma_prev = np.concatenate([sigma[:, :1], sigma[:, :-1]], axis=1)
    else:
        x_prev = batch.prev_predictions
        sigma_prev = batch.prev_sigma_ann
        if batch.prev_valid is not None:
            mask = np.asarray(batch.prev_valid, dtype=float)
            x_prev = de.mul(x_prev, Tensor(mask))
            sigma_prev = np.where(batch.prev_valid, sigma_prev, sigma)

    base = _captured_returns(x, batch)
    scaled_now = de.mul(x, Tensor(1.0 / sigma))
    scaled_prev = de.mul(x_prev, Tensor(1.0 / sigma_prev))
    cost = de.mul(Tensor(c * SIGMA_TGT), de.absolute(scaled_now - scaled_prev))
    return _neg_annualised_sharpe(base - cost)


def l1_penalty(weights: Tensor, alpha: float) -> Tensor:
    """alpha * sum |w|; the sparsity term for the linear model's weight
    vector (biases excluded by the caller)."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    return de.mul(Tensor(alpha), de.tsum(de.absolute(weights)))


def compute_loss(loss_kind: str, batch: Batch, cost_c: float = 0.0) -> Tensor:
    """Dispatch by loss name: mse | binary | returns | sharpe | sharpe_cost."""
    if loss_kind == "mse":
        return mse_loss(batch)
    if loss_kind == "binary":
        return bce_loss(batch)
    if loss_kind == "returns":
        return avg_returns_loss(batch)
    if loss_kind == "sharpe":
        return sharpe_loss(batch)
    if loss_kind == "sharpe_cost":
        return cost_adjusted_sharpe_loss(batch, cost_c)
    raise ValueError(f"unknown loss kind {loss_kind!r}")
