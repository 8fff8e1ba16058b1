"""Training loop: Adam with global gradient clipping, chronological
train/validation splits, early stopping, random-search hyperparameter
optimisation, and walk-forward recalibration on an expanding window."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from . import objectives as obj
from .diff_engine import Graph, Tensor
from .market_data import FeatureMatrix, ReturnsFrame, VolSeries, FEATURE_COLUMNS
from .momentum_networks import (Model, build_model, head_for_loss,
                                positions_from_predictions, TRAJECTORY_LEN)
from .classical_rules import PositionFrame


class TrainingError(RuntimeError):
    """Unrecoverable training failure (CLI exit code 3)."""


class DivergenceError(TrainingError):
    """A single candidate produced non-finite losses or gradients."""


# ---------------------------------------------------------------------------
# hyperparameters

GRID = {
    "dropout_rate": (0.1, 0.2, 0.3, 0.4, 0.5),
    "hidden_size": (5, 10, 20, 40, 80),
    "minibatch_size": (256, 512, 1024, 2048),
    "learning_rate": (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0),
    "max_grad_norm": (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0),
    "l1_alpha": (1e-5, 1e-4, 1e-3, 1e-2, 1e-1),
}


@dataclass(frozen=True)
class HyperParams:
    learning_rate: float
    minibatch_size: int
    max_grad_norm: float
    dropout_rate: float = 0.0     # NN architectures only
    hidden_size: int | None = None
    l1_alpha: float = 0.0         # linear architecture only

    def as_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "minibatch_size": self.minibatch_size,
            "max_grad_norm": self.max_grad_norm,
            "dropout_rate": self.dropout_rate,
            "hidden_size": self.hidden_size,
            "l1_alpha": self.l1_alpha,
        }


def draw_hyperparams(rng: np.random.Generator, architecture: str) -> HyperParams:
    """One uniform draw per grid dimension (with replacement across draws).

    The linear model has no hidden layer or dropout but draws the L1
    penalty weight; the networks do the opposite.  Draw order is fixed so
    a given rng state always yields the same candidate.
    """
    def pick(key):
        return GRID[key][rng.integers(len(GRID[key]))]

    lr = pick("learning_rate")
    mb = int(pick("minibatch_size"))
    gn = pick("max_grad_norm")
    if architecture == "linear":
        return HyperParams(learning_rate=lr, minibatch_size=mb,
                           max_grad_norm=gn, l1_alpha=pick("l1_alpha"))
    return HyperParams(learning_rate=lr, minibatch_size=mb, max_grad_norm=gn,
                       dropout_rate=pick("dropout_rate"),
                       hidden_size=int(pick("hidden_size")))


@dataclass(frozen=True)
class TrainConfig:
    architecture: str
    loss_kind: str
    seed: int = 0
    max_epochs: int = 100
    patience: int = 25
    validation_fraction: float = 0.1
    random_search_iters: int = 50
    cost_c: float = 0.0           # transaction cost inside sharpe_cost
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be below max_epochs")


# ---------------------------------------------------------------------------
# optimiser


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(m={k: np.zeros_like(p.values) for k, p in params.items()},
                   v={k: np.zeros_like(p.values) for k, p in params.items()})


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update with bias-corrected moments."""
    state.t += 1
    b1t = 1.0 - beta1 ** state.t
    b2t = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name}")
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / b1t
        v_hat = state.v[name] / b2t
        params[name].values = params[name].values - lr * m_hat / (np.sqrt(v_hat) + eps)


def clip_gradients(grads: dict[str, np.ndarray],
                   max_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients by max_norm/norm when the global L2 norm exceeds
    max_norm; identity otherwise."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


# ---------------------------------------------------------------------------
# samples


@dataclass
class SampleSet:
    """Training samples: feature windows (or 63-step trajectories) plus
    targets, ordered by (asset, date).

    Window samples: X (n, W, 8), returns/sigma/dates (n,).
    Trajectories:   X (n, 63, 8), returns/sigma/dates (n, 63).
    prev_* carry the previous day's window for the turnover cost term;
    prev_valid = False marks samples whose previous day has no usable
    window (their prev_X rows are zero-filled).
    """

    X: np.ndarray
    returns: np.ndarray
    sigma: np.ndarray
    dates: np.ndarray
    assets: np.ndarray
    prev_X: np.ndarray | None = None
    prev_sigma: np.ndarray | None = None
    prev_valid: np.ndarray | None = None
    sequence: bool = False

    def __len__(self) -> int:
        return len(self.X)


def _asset_arrays(features: FeatureMatrix, returns: ReturnsFrame,
                  vol: VolSeries, asset_id: str):
    frame = features.frames[asset_id]
    own = frame.index
    feats = frame[list(FEATURE_COLUMNS)].to_numpy(dtype=float)
    valid = frame["valid"].to_numpy(dtype=bool)
    sigma = vol.ann[asset_id].reindex(own).to_numpy(dtype=float)
    nxt = returns.next_day[asset_id].reindex(own).to_numpy(dtype=float)
    return own, feats, valid, sigma, nxt


def build_window_samples(features: FeatureMatrix, returns: ReturnsFrame,
                         vol: VolSeries, window_len: int,
                         end: pd.Timestamp | None = None,
                         with_prev: bool = False) -> SampleSet:
    """One sample per (asset, date) where the trailing `window_len` feature
    rows are all valid and sigma_t plus the next-day return exist.  `end`
    keeps only samples whose return realises strictly before it (the
    walk-forward training boundary)."""
    xs, rs, sg, dt, aid = [], [], [], [], []
    pxs, psg, pvalid = [], [], []
    w = window_len
    for asset in features.asset_ids:
        own, feats, valid, sigma, nxt = _asset_arrays(features, returns, vol, asset)
        for i in range(w - 1, len(own)):
            if not (valid[i - w + 1: i + 1].all()
                    and np.isfinite(sigma[i]) and np.isfinite(nxt[i])):
                continue
            if end is not None and not own[i + 1] < end:
                continue
            xs.append(feats[i - w + 1: i + 1])
            rs.append(nxt[i])
            sg.append(sigma[i])
            dt.append(own[i])
            aid.append(asset)
            if with_prev:
                ok = (i - 1 >= w - 1 and valid[i - w: i].all()
                      and np.isfinite(sigma[i - 1]))
                pvalid.append(ok)
                pxs.append(feats[i - w: i] if ok else np.zeros((w, len(FEATURE_COLUMNS))))
                psg.append(sigma[i - 1] if ok else sigma[i])
    if not xs:
        return SampleSet(X=np.zeros((0, w, len(FEATURE_COLUMNS))),
                         returns=np.zeros(0), sigma=np.zeros(0),
                         dates=np.zeros(0, dtype="datetime64[ns]"),
                         assets=np.zeros(0, dtype=object))
    base = SampleSet(X=np.stack(xs), returns=np.array(rs), sigma=np.array(sg),
                     dates=np.array(dt, dtype="datetime64[ns]"),
                     assets=np.array(aid, dtype=object))
    if with_prev:
        base.prev_X = np.stack(pxs)
        base.prev_sigma = np.array(psg)
        base.prev_valid = np.array(pvalid, dtype=bool)
    return base


def build_trajectory_samples(features: FeatureMatrix, returns: ReturnsFrame,
                             vol: VolSeries, traj_len: int = TRAJECTORY_LEN,
                             end: pd.Timestamp | None = None) -> SampleSet:
    """Non-overlapping `traj_len`-step trajectories cut from each asset's
    maximal runs of consecutive usable rows (valid features, sigma, next
    return, and inside the training boundary); leftovers shorter than
    `traj_len` are dropped."""
    xs, rs, sg, dt, aid = [], [], [], [], []
    for asset in features.asset_ids:
        own, feats, valid, sigma, nxt = _asset_arrays(features, returns, vol, asset)
        usable = valid & np.isfinite(sigma) & np.isfinite(nxt)
        if end is not None:
            inside = np.zeros(len(own), dtype=bool)
            inside[:-1] = own[1:] < end
            usable &= inside
        i = 0
        n = len(own)
        while i < n:
            if not usable[i]:
                i += 1
                continue
            j = i
            while j < n and usable[j]:
                j += 1
            for s in range(i, j - traj_len + 1, traj_len):
                sl = slice(s, s + traj_len)
                xs.append(feats[sl])
                rs.append(nxt[sl])
                sg.append(sigma[sl])
                dt.append(own[sl].to_numpy())
                aid.append(asset)
            i = j
    if not xs:
        return SampleSet(X=np.zeros((0, traj_len, len(FEATURE_COLUMNS))),
                         returns=np.zeros((0, traj_len)),
                         sigma=np.zeros((0, traj_len)),
                         dates=np.zeros((0, traj_len), dtype="datetime64[ns]"),
                         assets=np.zeros(0, dtype=object), sequence=True)
    return SampleSet(X=np.stack(xs), returns=np.stack(rs), sigma=np.stack(sg),
                     dates=np.stack(dt), assets=np.array(aid, dtype=object),
                     sequence=True)


def build_samples(features: FeatureMatrix, returns: ReturnsFrame,
                  vol: VolSeries, config: TrainConfig,
                  end: pd.Timestamp | None = None) -> SampleSet:
    model = build_model(config.architecture, head=head_for_loss(config.loss_kind),
                        hidden_size=5)
    if model.sequence_output:
        return build_trajectory_samples(features, returns, vol,
                                        model.window_len, end=end)
    with_prev = config.loss_kind == "sharpe_cost"
    return build_window_samples(features, returns, vol, model.window_len,
                                end=end, with_prev=with_prev)


def chronological_split(samples: SampleSet,
                        val_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Per asset: earliest (1 - f) of samples train, latest f validate.
    Samples are already date-ordered within each asset."""
    train, val = [], []
    for asset in pd.unique(samples.assets):
        idx = np.flatnonzero(samples.assets == asset)
        n_val = max(1, int(len(idx) * val_fraction))
        if len(idx) - n_val < 1:
            raise TrainingError(
                f"asset {asset}: {len(idx)} samples cannot fill train and "
                f"validation sets")
        train.append(idx[:-n_val])
        val.append(idx[-n_val:])
    if not train:
        raise TrainingError("no samples at all")
    return np.concatenate(train), np.concatenate(val)


# ---------------------------------------------------------------------------
# single fit


@dataclass
class FitResult:
    params: dict[str, Tensor]
    best_val_loss: float
    epochs_run: int
    curve: list[tuple[float, float]]   # (mean train loss, val loss) per epoch
    hyperparams: HyperParams
    config: TrainConfig


def _model_for(config: TrainConfig, hp: HyperParams) -> Model:
    linear = config.architecture == "linear"
    return build_model(
        config.architecture,
        head=head_for_loss(config.loss_kind),
        hidden_size=None if linear else hp.hidden_size,
        dropout_rate=0.0 if linear else hp.dropout_rate,
    )


def _batch_loss(model: Model, params, samples: SampleSet, idx: np.ndarray,
                config: TrainConfig, hp: HyperParams, training: bool,
                rng: np.random.Generator | None) -> Tensor:
    preds = model.forward(params, samples.X[idx], training=training, rng=rng)
    kwargs = {}
    if config.loss_kind == "sharpe_cost" and not samples.sequence:
        kwargs = {
            "prev_predictions": model.forward(params, samples.prev_X[idx],
                                              training=training, rng=rng),
            "prev_sigma_ann": samples.prev_sigma[idx],
            "prev_valid": samples.prev_valid[idx],
        }
    batch = obj.Batch(predictions=preds, returns=samples.returns[idx],
                      sigma_ann=samples.sigma[idx], **kwargs)
    loss = obj.compute_loss(config.loss_kind, batch, cost_c=config.cost_c)
    # the l1 term regularises fitting only; validation scores the pure
    # objective, otherwise selection is biased toward small weights
    if training and config.architecture == "linear" and hp.l1_alpha > 0:
        loss = loss + obj.l1_penalty(params["w"], hp.l1_alpha)
    return loss


def _min_batch(samples: SampleSet, loss_kind: str) -> int:
    # the in-batch Sharpe statistic needs at least two scalar returns
    if loss_kind in ("sharpe", "sharpe_cost") and not samples.sequence:
        return 2
    return 1


def train_model(samples: SampleSet, hp: HyperParams,
                config: TrainConfig) -> FitResult:
    """Minibatch SGD with Adam; early stop after `patience` epochs without
    validation improvement; returns the best-validation checkpoint."""
    if len(samples) == 0:
        raise TrainingError("no training samples")
    model = _model_for(config, hp)
    rng = np.random.default_rng(config.seed)
    params = model.init_params(rng)
    state = AdamState.init(params)
    train_idx, val_idx = chronological_split(samples, config.validation_fraction)
    min_b = _min_batch(samples, config.loss_kind)

    best_val = math.inf
    best_params: dict[str, Tensor] = {k: Tensor(p.values.copy(), requires_grad=True)
                                      for k, p in params.items()}
    best_epoch = 0
    since_improve = 0
    curve: list[tuple[float, float]] = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(train_idx)
        train_losses = []
        for lo in range(0, len(perm), hp.minibatch_size):
            idx = perm[lo: lo + hp.minibatch_size]
            if len(idx) < min_b:
                continue
            with Graph():
                loss = _batch_loss(model, params, samples, idx, config, hp,
                                   training=True, rng=rng)
                value = loss.item()
                if not math.isfinite(value):
                    raise DivergenceError(
                        f"non-finite training loss at epoch {epoch}")
                loss.backward()
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            grads = clip_gradients(grads, hp.max_grad_norm)
            adam_step(params, grads, state, hp.learning_rate)
            for p in params.values():
                p.grad = None
            train_losses.append(value)

        val_loss = _batch_loss(model, params, samples, val_idx, config, hp,
                               training=False, rng=None).item()
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        curve.append((float(np.mean(train_losses)) if train_losses else math.nan,
                      val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: Tensor(p.values.copy(), requires_grad=True)
                           for k, p in params.items()}
            best_epoch = epoch
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= config.patience:
                break
    if not math.isfinite(best_val):
        raise DivergenceError("validation loss never became finite")
    return FitResult(params=best_params, best_val_loss=best_val,
                     epochs_run=epoch, curve=curve, hyperparams=hp,
                     config=config)


# ---------------------------------------------------------------------------
# random search


@dataclass
class SearchResult:
    best: FitResult
    best_index: int
    diagnostics: list[str] = field(default_factory=list)
    n_candidates: int = 0
    n_failed: int = 0


def _candidate_seed(seed: int, index: int) -> int:
    return (seed ^ (index + 1)) & 0x7FFFFFFF


def _run_candidate(args) -> tuple[int, FitResult | None, str | None]:
    samples, hp, config, index = args
    try:
        fit = train_model(samples, hp, replace(config,
                                               seed=_candidate_seed(config.seed, index)))
        return index, fit, None
    except DivergenceError as e:
        return index, None, f"candidate {index} ({hp.as_dict()}): {e}"


def random_search(samples: SampleSet, config: TrainConfig,
                  n_iters: int | None = None,
                  hyperparams: HyperParams | None = None) -> SearchResult:
    """Uniform random search over the hyperparameter grids.

    Draws are made with replacement from a dedicated rng so the candidate
    list depends only on the seed; each candidate trains with its own
    derived seed.  Divergent candidates are discarded with a diagnostic.
    The winner is the lowest validation loss (ties: lowest index), which is
    deterministic regardless of worker scheduling.

    Passing `hyperparams` skips the drawing and trains that single fixed
    configuration, for controlled comparisons where everything but one
    knob is held equal.
    """
    if hyperparams is not None:
        draws = [hyperparams]
    else:
        n = config.random_search_iters if n_iters is None else n_iters
        draw_rng = np.random.default_rng(config.seed)
        draws = [draw_hyperparams(draw_rng, config.architecture)
                 for _ in range(n)]
    tasks = [(samples, hp, config, i) for i, hp in enumerate(draws)]

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_candidate, tasks))
    else:
        outcomes = [_run_candidate(t) for t in tasks]

    diagnostics = [msg for _, _, msg in outcomes if msg]
    fits = [(i, fit) for i, fit, _ in outcomes if fit is not None]
    if not fits:
        raise TrainingError(
            "all random-search candidates diverged:\n" + "\n".join(diagnostics))
    best_index, best = min(fits, key=lambda pair: (pair[1].best_val_loss, pair[0]))
    return SearchResult(best=best, best_index=best_index,
                        diagnostics=diagnostics, n_candidates=len(draws),
                        n_failed=len(diagnostics))


# ---------------------------------------------------------------------------
# walk-forward recalibration


@dataclass
class BlockRecord:
    boundary: pd.Timestamp
    block_end: pd.Timestamp
    hyperparams: HyperParams
    val_loss: float
    n_samples: int
    params: dict[str, Tensor]
    model_manifest: dict
    diagnostics: list[str] = field(default_factory=list)


@dataclass
class WalkForwardResult:
    positions: PositionFrame
    predictions: pd.DataFrame
    blocks: list[BlockRecord]
    skipped: list[str] = field(default_factory=list)

    def manifest(self) -> dict:
        return {
            "blocks": [{
                "boundary": str(b.boundary.date()),
                "block_end": str(b.block_end.date()),
                "hyperparams": b.hyperparams.as_dict(),
                "val_loss": b.val_loss,
                "n_samples": b.n_samples,
                "n_failed_candidates": len(b.diagnostics),
            } for b in self.blocks],
            "skipped": self.skipped,
        }


def block_boundaries(first: pd.Timestamp, last: pd.Timestamp,
                     block_years: int) -> list[pd.Timestamp]:
    """Recalibration dates: 1 Jan every `block_years` calendar years from the
    first observation's year, while data remains to predict."""
    if block_years < 1:
        raise ValueError("block_years must be >= 1")
    out = []
    year = first.year + block_years
    while pd.Timestamp(year=year, month=1, day=1) <= last:
        out.append(pd.Timestamp(year=year, month=1, day=1))
        year += block_years
    return out


def _predict_block(model: Model, params, features: FeatureMatrix,
                   start: pd.Timestamp, end: pd.Timestamp,
                   loss_kind: str) -> dict[str, pd.Series]:
    """Out-of-sample predictions for dates in [start, end), per asset.

    Feed-forward models score every date with a fully valid trailing
    window.  The LSTM runs stateful across the asset's valid rows inside
    the block (state starts at zero at the block boundary; invalid rows are
    skipped without touching the state)."""
    out: dict[str, pd.Series] = {}
    for asset in features.asset_ids:
        frame = features.frames[asset]
        own = frame.index
        feats = frame[list(FEATURE_COLUMNS)].to_numpy(dtype=float)
        valid = frame["valid"].to_numpy(dtype=bool)
        in_block = (own >= start) & (own < end)
        if model.sequence_output:
            sel = np.flatnonzero(in_block & valid)
            if len(sel) == 0:
                continue
            z = model.forward(params, feats[sel][None, :, :]).values[0]
            out[asset] = pd.Series(z, index=own[sel])
        else:
            w = model.window_len
            rows, dates = [], []
            for i in np.flatnonzero(in_block):
                if i >= w - 1 and valid[i - w + 1: i + 1].all():
                    rows.append(feats[i - w + 1: i + 1])
                    dates.append(own[i])
            if not rows:
                continue
            z = model.forward(params, np.stack(rows)).values
            out[asset] = pd.Series(z, index=pd.DatetimeIndex(dates))
    return out


def walk_forward(features: FeatureMatrix, returns: ReturnsFrame,
                 vol: VolSeries, config: TrainConfig,
                 block_years: int = 5,
                 n_iters: int | None = None,
                 hyperparams: HyperParams | None = None) -> WalkForwardResult:
    """Recalibrate from scratch at every block boundary on all data up to
    it (expanding window), then predict only the following block.  The
    concatenated predictions are strictly out-of-sample.

    `hyperparams` pins every block to one fixed configuration instead of
    searching (see random_search)."""
    calendar = returns.next_day.index
    boundaries = block_boundaries(calendar[0], calendar[-1], block_years)
    if not boundaries:
        raise TrainingError(
            f"data from {calendar[0].date()} to {calendar[-1].date()} spans "
            f"fewer than two {block_years}-year blocks")

    blocks: list[BlockRecord] = []
    skipped: list[str] = []
    pred_cols: dict[str, list[pd.Series]] = {a: [] for a in features.asset_ids}
    horizon_end = calendar[-1] + pd.Timedelta(days=1)
    for k, boundary in enumerate(boundaries):
        block_end = boundaries[k + 1] if k + 1 < len(boundaries) else horizon_end
        samples = build_samples(features, returns, vol, config, end=boundary)
        if len(samples) == 0:
            skipped.append(f"no training samples before {boundary.date()}")
            continue
        search = random_search(samples, config, n_iters=n_iters,
                               hyperparams=hyperparams)
        model = _model_for(config, search.best.hyperparams)
        preds = _predict_block(model, search.best.params, features,
                               boundary, block_end, config.loss_kind)
        for asset, series in preds.items():
            pred_cols[asset].append(series)
        blocks.append(BlockRecord(
            boundary=boundary, block_end=block_end,
            hyperparams=search.best.hyperparams,
            val_loss=search.best.best_val_loss,
            n_samples=len(samples),
            params=search.best.params,
            model_manifest=model.manifest(),
            diagnostics=search.diagnostics,
        ))
    if not blocks:
        raise TrainingError("every block was skipped: " + "; ".join(skipped))

    predictions = pd.DataFrame({
        asset: pd.concat(chunks).reindex(calendar) if chunks
        else pd.Series(np.nan, index=calendar)
        for asset, chunks in pred_cols.items()
    }, index=calendar)
    pos_values = positions_from_predictions(predictions.to_numpy(), config.loss_kind)
    positions = PositionFrame(pd.DataFrame(pos_values, index=calendar,
                                           columns=predictions.columns))
    return WalkForwardResult(positions=positions, predictions=predictions,
                             blocks=blocks, skipped=skipped)
