"""Training a linear momentum signal by maximising Sharpe directly.

Builds (asset, date) training samples from a synthetic panel, fits one
linear model with a fixed hyperparameter configuration, and shows the
validation curve plus what the model learned to weight.

Run: python demos/03_train_linear_signal.py
"""

import numpy as np

from tsmom.market_data import (FEATURE_COLUMNS, build_features,
                               compute_returns, exante_vol)
from tsmom.synth import synth_prices
from tsmom.trainer import (HyperParams, TrainConfig, build_samples,
                           train_model)

assets, _ = synth_prices(n_assets=6, periods=1500, seed=1, kind="trend")
returns = compute_returns(assets)
vol = exante_vol(returns)
features = build_features(assets, returns, vol)

config = TrainConfig(architecture="linear", loss_kind="sharpe", seed=0)
samples = build_samples(features, returns, vol, config)
print(f"{len(samples)} samples of shape {samples.X.shape[1:]} "
      f"(window x features)")

hp = HyperParams(learning_rate=1e-2, minibatch_size=512, max_grad_norm=10.0,
                 l1_alpha=1e-4)
fit = train_model(samples, hp, config)
print(f"\ntrained {fit.epochs_run} epochs "
      f"(early stopping patience {config.patience})")
print(f"best validation loss {fit.best_val_loss:+.4f} "
      f"= annualised sharpe {-fit.best_val_loss:.2f} on the held-out tail")
curve = [val for _, val in fit.curve]
marks = {0: curve[0], len(curve) // 2: curve[len(curve) // 2],
         len(curve) - 1: curve[-1]}
print("validation curve: " + "  ".join(f"epoch {e}: {v:+.3f}"
                                       for e, v in marks.items()))

# weight mass per feature, summed over the input window rows
w = fit.params["w"].values.reshape(-1, len(FEATURE_COLUMNS))
mass = np.abs(w).sum(axis=0)
print("\nlearned |weight| mass by feature:")
for name, m in sorted(zip(FEATURE_COLUMNS, mass), key=lambda p: -p[1]):
    bar = "#" * int(round(40 * m / mass.max()))
    print(f"  {name:12s} {m:6.2f} {bar}")
