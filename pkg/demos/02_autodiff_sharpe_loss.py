"""Differentiating a Sharpe ratio with the built-in tape.

Builds the captured-return Sharpe objective out of Tensor operations,
runs reverse mode, and confirms the gradient against central finite
differences. This is the same machinery the trainer uses, just on a
problem small enough to inspect.

Run: python demos/02_autodiff_sharpe_loss.py
"""

import numpy as np

from tsmom.diff_engine import Graph, Tensor, tanh
from tsmom.objectives import Batch, compute_loss

rng = np.random.default_rng(0)
n = 12
returns = 0.01 * rng.normal(size=n)
sigma = rng.uniform(0.1, 0.3, size=n)

# a one-weight "model": position = tanh(w * momentum score)
score = rng.normal(size=n)
w = Tensor(np.array([0.5]), requires_grad=True)


def loss_for(weight: Tensor) -> Tensor:
    positions = tanh(weight * Tensor(score))
    batch = Batch(predictions=positions, returns=returns, sigma_ann=sigma)
    return compute_loss("sharpe", batch)


with Graph():
    loss = loss_for(w)
    loss.backward()
print(f"loss (negative annualised sharpe) = {loss.item():+.4f}")
print(f"reverse-mode dloss/dw             = {w.grad[0]:+.6f}")

eps = 1e-6
hi = loss_for(Tensor(w.values + eps)).item()
lo = loss_for(Tensor(w.values - eps)).item()
fd = (hi - lo) / (2 * eps)
print(f"finite-difference dloss/dw        = {fd:+.6f}")
print(f"relative error                    = {abs(w.grad[0] - fd) / abs(fd):.2e}")

# one manual gradient step makes the objective move the right way
stepped = loss_for(Tensor(w.values - 0.1 * w.grad)).item()
print(f"\nafter one step of size 0.1: loss {loss.item():+.4f} -> {stepped:+.4f}")
