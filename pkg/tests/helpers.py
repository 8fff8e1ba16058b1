"""Shared test utilities: gradient checking of full model/loss compositions."""

from __future__ import annotations

import numpy as np

from tsmom import diff_engine as de
from tsmom import objectives as obj
from tsmom.diff_engine import Graph, Tensor
from tsmom.momentum_networks import build_model, head_for_loss

from oracles import fd_gradient, max_rel_err


def grad_check(build_loss, params: dict[str, np.ndarray], tol=1e-4, eps=1e-5):
    """build_loss maps {name: Tensor} -> scalar Tensor; compares backward
    grads against central finite differences.  Returns the worst error."""
    tensors = {k: Tensor(v.copy(), requires_grad=True) for k, v in params.items()}
    with Graph():
        loss = build_loss(tensors)
        loss.backward()

    def f(ps):
        ts = {k: Tensor(v) for k, v in ps.items()}
        return build_loss(ts).item()

    fd = fd_gradient(f, {k: v.copy() for k, v in params.items()}, eps=eps)
    worst = 0.0
    for name in params:
        assert tensors[name].grad is not None, f"no grad for {name}"
        err = max_rel_err(tensors[name].grad, fd[name])
        assert err < tol, f"{name}: rel err {err:.3e}"
        worst = max(worst, err)
    return worst


def make_case(architecture: str, loss_kind: str, seed: int,
              batch: int = 4, hidden: int = 5, steps: int = 8):
    """Random small model instance + matching batch data for one
    architecture/loss pair.  Returns (model, params as numpy, build_loss)."""
    rng = np.random.default_rng(seed)
    model = build_model(
        architecture,
        head=head_for_loss(loss_kind),
        hidden_size=None if architecture == "linear" else hidden,
    )
    width = steps if model.sequence_output else model.window_len
    x = rng.normal(size=(batch, width, 8))
    if model.sequence_output:
        returns = 0.01 * rng.normal(size=(batch, steps))
        sigma = rng.uniform(0.1, 0.3, size=(batch, steps))
        prev = None
    else:
        returns = 0.01 * rng.normal(size=(batch,))
        sigma = rng.uniform(0.1, 0.3, size=(batch,))
        prev = {
            "x": rng.normal(size=(batch, width, 8)),
            "sigma": rng.uniform(0.1, 0.3, size=(batch,)),
            "valid": np.array([True] * (batch - 1) + [False]),
        }
    params0 = {k: t.values.copy()
               for k, t in model.init_params(rng).items()}

    def build_loss(tensors):
        preds = model.forward(tensors, x)
        kwargs = {}
        if loss_kind == "sharpe_cost" and prev is not None:
            kwargs = {
                "prev_predictions": model.forward(tensors, prev["x"]),
                "prev_sigma_ann": prev["sigma"],
                "prev_valid": prev["valid"],
            }
        b = obj.Batch(predictions=preds, returns=returns, sigma_ann=sigma,
                      **kwargs)
        loss = obj.compute_loss(loss_kind, b, cost_c=0.001)
        if architecture == "linear":
            loss = loss + obj.l1_penalty(tensors["w"], 0.01)
        return loss

    return model, params0, build_loss
