"""Parameter initialization, Adam with decoupled weight decay, scheduling.

Init schemes:
    xavier  — uniform on ±sqrt(6/(fan_in+fan_out)); fully-connected layers
    kaiming — normal with std sqrt(2/fan_in); graph-conv/attention projections
    zeros   — biases
    ones    — layer-norm gains

Each tensor draws from its own RNG stream derived from (seed, name), so the
result does not depend on parameter registration order.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from threatshare.diffcore.tensor import ParamSet


def _rng_for(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])


def _fans(shape) -> tuple[int, int]:
    if len(shape) == 0:
        return 1, 1
    if len(shape) == 1:
        return shape[0], shape[0]
    return shape[0], int(np.prod(shape[1:]))


def init_params(params: ParamSet, seed: int) -> ParamSet:
    """Fill every tensor in place according to its recorded scheme."""
    for name, t in params.items():
        scheme = params.scheme(name)
        shape = t.data.shape
        if scheme == "zeros":
            t.data = np.zeros(shape)
        elif scheme == "ones":
            t.data = np.ones(shape)
        elif scheme == "xavier":
            fan_in, fan_out = _fans(shape)
            a = np.sqrt(6.0 / (fan_in + fan_out))
            t.data = _rng_for(seed, name).uniform(-a, a, size=shape)
        elif scheme == "kaiming":
            fan_in, _ = _fans(shape)
            std = np.sqrt(2.0 / fan_in)
            t.data = _rng_for(seed, name).normal(0.0, std, size=shape)
        else:
            raise ValueError(f"unknown init scheme {scheme!r} for {name}")
    return params


@dataclass
class AdamState:
    """Optimizer state; moment buffers are keyed by parameter name."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def scalars(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "step_count": self.step_count,
        }


def adam_step(state: AdamState, params: ParamSet) -> None:
    """One Adam update with bias correction.

    Weight decay is decoupled: parameters shrink by lr*wd*param before the
    moment update, so decay never leaks into the moment estimates.
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if state.weight_decay:
            p.data = p.data * (1.0 - state.lr * state.weight_decay)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        p.data = p.data - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def schedule_and_stop(
    epoch: int,
    val_history,
    *,
    patience: int = 5,
    lr_step: int = 10,
    lr_gamma: float = 0.5,
) -> tuple[float, bool]:
    """Post-epoch decision: LR multiplier for the next epoch, and stop flag.

    ``epoch`` is 1-indexed and must equal ``len(val_history)``. The stop flag
    rises once the best validation loss has gone ``patience`` consecutive
    epochs without a strict improvement.
    """
    if epoch < 1 or epoch != len(val_history):
        raise ValueError(f"epoch {epoch} inconsistent with history length {len(val_history)}")
    multiplier = lr_gamma if epoch % lr_step == 0 else 1.0
    best = np.inf
    streak = 0
    for loss in val_history:
        if loss < best:
            best = loss
            streak = 0
        else:
            streak += 1
    return multiplier, streak >= patience
