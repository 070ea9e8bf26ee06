"""AdamW with decoupled weight decay and a per-epoch cosine schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import OptimizerError


@dataclass(frozen=True)
class AdamWConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class AdamWState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict, grads: dict, state: AdamWState, lr: float,
               config: AdamWConfig = AdamWConfig()) -> dict:
    """One in-place AdamW update of ``params`` (name -> array or Tensor).

    Decay is applied first, ``w <- w - lr*wd*w``, then the bias-corrected
    Adam step.  Returns ``params``.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite gradient for {name!r}")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        if name not in grads:
            continue
        w = p if isinstance(p, np.ndarray) else p.data
        g = np.asarray(grads[name], dtype=w.dtype)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        v = state.v[name]
        w -= lr * config.weight_decay * w
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= lr * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return params


def cosine_lr(epoch: float, total_epochs: int, lr_max: float, lr_min: float = None) -> float:
    if lr_min is None:
        lr_min = lr_max / 100.0
    if total_epochs <= 0:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * epoch / total_epochs))
