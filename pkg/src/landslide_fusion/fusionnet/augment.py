"""Random flip/rotation augmentation and flip-group test-time averaging."""
from __future__ import annotations

import numpy as np

from . import autograd as ag

FLIP_GROUP = (
    lambda x: x,
    lambda x: x[:, :, ::-1, :],        # horizontal flip
    lambda x: x[:, ::-1, :, :],        # vertical flip
    lambda x: x[:, ::-1, ::-1, :],
)


def hflip(x):
    return np.ascontiguousarray(np.asarray(x)[:, :, ::-1, :])


def vflip(x):
    return np.ascontiguousarray(np.asarray(x)[:, ::-1, :, :])


def augment(batch, probabilities=(0.5, 0.5, 0.5), rng=None) -> np.ndarray:
    """Per sample: hflip, vflip, rot90 each with its own probability.

    All channels of a sample receive the same transform.  Draws three
    uniforms per sample from ``rng`` regardless of outcome.
    """
    x = np.array(ag.as_array(batch), copy=True)
    if x.shape[1] != x.shape[2]:
        raise ValueError("augmentation needs square patches")
    rng = rng if rng is not None else np.random.default_rng()
    p_h, p_v, p_r = probabilities
    draws = rng.random((x.shape[0], 3))
    for i in range(x.shape[0]):
        s = x[i]
        if draws[i, 0] < p_h:
            s = s[:, ::-1]
        if draws[i, 1] < p_v:
            s = s[::-1]
        if draws[i, 2] < p_r:
            s = np.rot90(s, 1, axes=(0, 1))
        x[i] = s
    return x


def tta_predict(net, batch, batch_size: int = 64) -> np.ndarray:
    """Mean sigmoid over identity, hflip, vflip and both flips (eval mode)."""
    x = ag.as_array(batch)
    was_training = net.training
    net.eval()
    try:
        total = np.zeros(x.shape[0])
        with ag.no_grad():
            for t in FLIP_GROUP:
                total += net.predict_proba(np.ascontiguousarray(t(x)), batch_size)
    finally:
        net.training = was_training
    return total / len(FLIP_GROUP)
