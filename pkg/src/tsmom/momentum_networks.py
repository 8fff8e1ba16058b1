"""Signal-generating architectures: linear, MLP, WaveNet-style multi-scale
convolution, and LSTM.

All four expose the same contract: ``init_params(rng)`` builds named
parameter tensors, ``forward(params, x, training, rng)`` maps a batch of
feature windows to predictions Z through a task-dependent output head
(regression -> linear, classification -> sigmoid, direct position -> tanh).
Feed-forward models consume windows of ``window_len`` consecutive valid
feature rows and emit shape (B,); the LSTM consumes 63-step trajectories
and emits shape (B, 63).
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import diff_engine as de
from .diff_engine import Tensor

N_FEATURES = 8
WINDOW_LEN = 6          # u_{t-5:t} expanded explicitly: 6 rows
TRAJECTORY_LEN = 63
ARCHITECTURES = ("linear", "mlp", "wavenet", "lstm")
HEADS = ("linear", "sigmoid", "tanh")
LOSS_KINDS = ("mse", "binary", "returns", "sharpe", "sharpe_cost")

# lags at which the WaveNet reuses lower-frequency states; the deepest
# weekly block (57) plus its 6-day window gives a 63-day receptive field
_MONTHLY_LAGS = (0, 5, 10, 15)
_QUARTERLY_LAGS = (0, 21, 42)
_WEEKLY_LAGS = tuple(sorted({q + m for q in _QUARTERLY_LAGS for m in _MONTHLY_LAGS}))


def head_for_loss(loss_kind: str) -> str:
    """Output activation implied by the training objective."""
    if loss_kind == "mse":
        return "linear"
    if loss_kind == "binary":
        return "sigmoid"
    if loss_kind in ("returns", "sharpe", "sharpe_cost"):
        return "tanh"
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def positions_from_predictions(z: np.ndarray, loss_kind: str) -> np.ndarray:
    """Trading position implied by a prediction: sgn of the return forecast,
    sgn of (probability - 1/2), or the direct output itself."""
    z = np.asarray(z, dtype=float)
    if loss_kind == "mse":
        return np.sign(z)
    if loss_kind == "binary":
        return np.sign(z - 0.5)
    if loss_kind in ("returns", "sharpe", "sharpe_cost"):
        return z
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def _apply_head(z: Tensor, head: str) -> Tensor:
    if head == "linear":
        return z
    if head == "sigmoid":
        return de.sigmoid(z)
    if head == "tanh":
        return de.tanh(z)
    raise ValueError(f"unknown head {head!r}")


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _as_input(x, expected_window: int) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=float))
    if t.values.ndim != 3 or t.shape[1] != expected_window or t.shape[2] != N_FEATURES:
        raise de.ShapeError(
            f"expected input (B, {expected_window}, {N_FEATURES}), got {t.shape}")
    return t


class Model:
    """Common interface; concrete classes fill in params and forward."""

    architecture: str
    window_len: int
    sequence_output = False

    def __init__(self, hidden_size: int | None = None, head: str = "tanh",
                 dropout_rate: float = 0.0):
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {dropout_rate}")
        self.hidden_size = hidden_size
        self.head = head
        self.dropout_rate = dropout_rate

    def init_params(self, rng: np.random.Generator) -> dict[str, Tensor]:
        raise NotImplementedError

    def forward(self, params, x, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError

    def manifest(self) -> dict:
        return {
            "architecture": self.architecture,
            "hidden_size": self.hidden_size,
            "head": self.head,
            "dropout_rate": self.dropout_rate,
            "window_len": self.window_len,
        }

    def _require_hidden(self) -> int:
        if not self.hidden_size or self.hidden_size < 1:
            raise ValueError(f"{self.architecture} needs a positive hidden_size")
        return int(self.hidden_size)


class LinearModel(Model):
    """Z = g(w . concat(window) + b); 48 inputs.  No dropout or hidden layer;
    sparsity comes from the L1 penalty during training."""

    architecture = "linear"
    window_len = WINDOW_LEN

    def init_params(self, rng):
        n_in = self.window_len * N_FEATURES
        return {"w": _uniform(rng, (n_in, 1), n_in), "b": _zeros((1,))}

    def forward(self, params, x, training=False, rng=None):
        x = _as_input(x, self.window_len)
        b = x.shape[0]
        flat = de.reshape(x, (b, self.window_len * N_FEATURES))
        z = de.matmul(flat, params["w"]) + params["b"]
        return _apply_head(de.reshape(z, (b,)), self.head)


class MLPModel(Model):
    """One tanh hidden layer; dropout on the input window and on the hidden
    activations in training mode."""

    architecture = "mlp"
    window_len = WINDOW_LEN

    def init_params(self, rng):
        h = self._require_hidden()
        n_in = self.window_len * N_FEATURES
        return {
            "W_h": _uniform(rng, (n_in, h), n_in),
            "b_h": _zeros((h,)),
            "W_z": _uniform(rng, (h, 1), h),
            "b_z": _zeros((1,)),
        }

    def forward(self, params, x, training=False, rng=None):
        x = _as_input(x, self.window_len)
        b = x.shape[0]
        flat = de.reshape(x, (b, self.window_len * N_FEATURES))
        flat = de.dropout(flat, self.dropout_rate, rng, training)
        h = de.tanh(de.matmul(flat, params["W_h"]) + params["b_h"])
        h = de.dropout(h, self.dropout_rate, rng, training)
        z = de.matmul(h, params["W_z"]) + params["b_z"]
        return _apply_head(de.reshape(z, (b,)), self.head)


class WaveNetModel(Model):
    """Multi-scale gated residual network.

    One gated block psi(u) = tanh(uW) * sigmoid(uV) + uA + b per frequency:
    weekly states from 6-day input windows, monthly states from weekly
    states at lags (0,5,10,15), quarterly states from monthly states at lags
    (0,21,42).  The current weekly/monthly/quarterly states are concatenated
    into a 2-layer head.  All blocks share one hidden size; the receptive
    field is exactly 63 days.  Dropout on the raw inputs and the pre-head
    concat.
    """

    architecture = "wavenet"
    window_len = TRAJECTORY_LEN

    def init_params(self, rng):
        h = self._require_hidden()
        sizes = {"w": WINDOW_LEN * N_FEATURES,
                 "m": len(_MONTHLY_LAGS) * h,
                 "q": len(_QUARTERLY_LAGS) * h}
        params: dict[str, Tensor] = {}
        for tag, n_in in sizes.items():
            for kind in ("W", "V", "A"):
                params[f"{kind}_{tag}"] = _uniform(rng, (n_in, h), n_in)
            params[f"b_{tag}"] = _zeros((h,))
        params["W_h1"] = _uniform(rng, (3 * h, h), 3 * h)
        params["b_h1"] = _zeros((h,))
        params["W_h2"] = _uniform(rng, (h, 1), h)
        params["b_h2"] = _zeros((1,))
        return params

    @staticmethod
    def _gated(params, tag: str, u: Tensor) -> Tensor:
        gate = de.mul(de.tanh(de.matmul(u, params[f"W_{tag}"])),
                      de.sigmoid(de.matmul(u, params[f"V_{tag}"])))
        return gate + de.matmul(u, params[f"A_{tag}"]) + params[f"b_{tag}"]

    def forward(self, params, x, training=False, rng=None):
        x = _as_input(x, self.window_len)
        b = x.shape[0]
        x = de.dropout(x, self.dropout_rate, rng, training)
        weekly: dict[int, Tensor] = {}
        for lag in _WEEKLY_LAGS:
            lo = self.window_len - WINDOW_LEN - lag
            window = x[:, lo:lo + WINDOW_LEN, :]
            weekly[lag] = self._gated(params, "w",
                                      de.reshape(window, (b, WINDOW_LEN * N_FEATURES)))
        monthly: dict[int, Tensor] = {}
        for lag in _QUARTERLY_LAGS:
            stack = de.concat([weekly[lag + m] for m in _MONTHLY_LAGS], axis=1)
            monthly[lag] = self._gated(params, "m", stack)
        quarterly = self._gated(
            params, "q", de.concat([monthly[lag] for lag in _QUARTERLY_LAGS], axis=1))
        merged = de.concat([weekly[0], monthly[0], quarterly], axis=1)
        merged = de.dropout(merged, self.dropout_rate, rng, training)
        h = de.tanh(de.matmul(merged, params["W_h1"]) + params["b_h1"])
        z = de.matmul(h, params["W_h2"]) + params["b_h2"]
        return _apply_head(de.reshape(z, (b,)), self.head)


class LSTMModel(Model):
    """Standard LSTM over 63-step trajectories, prediction at every step.

    Variational dropout: one mask per trajectory for inputs, recurrent
    state and outputs, reused at every time step.  Training starts from
    zero state per trajectory; at inference the caller may thread state
    through consecutive calls (stateful within a recalibration block).
    """

    architecture = "lstm"
    window_len = TRAJECTORY_LEN
    sequence_output = True

    GATES = ("f", "i", "o", "c")

    def init_params(self, rng):
        h = self._require_hidden()
        params: dict[str, Tensor] = {}
        for gate in self.GATES:
            params[f"W_{gate}"] = _uniform(rng, (N_FEATURES, h), N_FEATURES)
            params[f"V_{gate}"] = _uniform(rng, (h, h), h)
            params[f"b_{gate}"] = _zeros((h,))
        params["W_z"] = _uniform(rng, (h, 1), h)
        params["b_z"] = _zeros((1,))
        return params

    def forward(self, params, x, training=False, rng=None, state=None,
                return_state=False):
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=float))
        if t.values.ndim != 3 or t.shape[2] != N_FEATURES:
            raise de.ShapeError(f"expected input (B, T, {N_FEATURES}), got {t.shape}")
        x = t
        b, n_steps, _ = x.shape
        h_size = self._require_hidden()

        masks = None
        if training and self.dropout_rate > 0.0:
            if rng is None:
                raise ValueError("training-mode dropout needs an rng")
            masks = (de.dropout_mask((b, N_FEATURES), self.dropout_rate, rng),
                     de.dropout_mask((b, h_size), self.dropout_rate, rng),
                     de.dropout_mask((b, h_size), self.dropout_rate, rng))

        if state is None:
            c = Tensor(np.zeros((b, h_size)))
            h = Tensor(np.zeros((b, h_size)))
        else:
            c = Tensor(np.asarray(state[0], dtype=float))
            h = Tensor(np.asarray(state[1], dtype=float))

        outs = []
        for step in range(n_steps):
            xt = x[:, step, :]
            if masks is not None:
                xt = de.apply_mask(xt, masks[0])
                h_in = de.apply_mask(h, masks[1])
            else:
                h_in = h
            f = de.sigmoid(de.matmul(xt, params["W_f"]) + de.matmul(h_in, params["V_f"]) + params["b_f"])
            i = de.sigmoid(de.matmul(xt, params["W_i"]) + de.matmul(h_in, params["V_i"]) + params["b_i"])
            o = de.sigmoid(de.matmul(xt, params["W_o"]) + de.matmul(h_in, params["V_o"]) + params["b_o"])
            c_hat = de.tanh(de.matmul(xt, params["W_c"]) + de.matmul(h_in, params["V_c"]) + params["b_c"])
            c = de.mul(f, c) + de.mul(i, c_hat)
            h = de.mul(o, de.tanh(c))
            h_out = de.apply_mask(h, masks[2]) if masks is not None else h
            outs.append(de.matmul(h_out, params["W_z"]) + params["b_z"])
        z = _apply_head(de.concat(outs, axis=1), self.head)
        if return_state:
            return z, (c.values.copy(), h.values.copy())
        return z


_CLASSES = {cls.architecture: cls
            for cls in (LinearModel, MLPModel, WaveNetModel, LSTMModel)}


def build_model(architecture: str, head: str = "tanh",
                hidden_size: int | None = None,
                dropout_rate: float = 0.0) -> Model:
    if architecture not in _CLASSES:
        raise ValueError(f"unknown architecture {architecture!r}; "
                         f"choose from {ARCHITECTURES}")
    return _CLASSES[architecture](hidden_size=hidden_size, head=head,
                                  dropout_rate=dropout_rate)


# ---------------------------------------------------------------------------
# checkpoints: manifest + named parameter tensors


def save_checkpoint(model: Model, params: dict[str, Tensor], path) -> None:
    blob = {
        "manifest": model.manifest(),
        "params": {name: {"shape": list(t.shape),
                          "values": t.values.ravel().tolist()}
                   for name, t in params.items()},
    }
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_checkpoint(path) -> tuple[Model, dict[str, Tensor]]:
    with open(path) as fh:
        blob = json.load(fh)
    man = blob["manifest"]
    model = build_model(man["architecture"], head=man["head"],
                        hidden_size=man["hidden_size"],
                        dropout_rate=man["dropout_rate"])
    params = {
        name: Tensor(np.asarray(rec["values"]).reshape(rec["shape"]),
                     requires_grad=True)
        for name, rec in blob["params"].items()
    }
    return model, params
