"""Cross-validated training of fusion nets with out-of-fold prediction."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import PreconditionError, ShapeError, TrainingError
from . import autograd as ag
from .augment import augment, tta_predict
from .model import FusionConfig, FusionNet, backward, combined_loss
from .optim import AdamWConfig, AdamWState, adamw_step, cosine_lr

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr_max: float = 1e-3
    lr_min: float = None
    batch_size: int = 32
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    p_rot90: float = 0.5
    tta: bool = True
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 0:
            raise PreconditionError("epochs must be >= 0")
        if self.lr_max <= 0:
            raise PreconditionError("lr_max must be > 0")
        if self.batch_size < 2:
            raise PreconditionError("batch_size must be >= 2 (batch norm)")
        for p in (self.p_hflip, self.p_vflip, self.p_rot90):
            if not 0.0 <= p <= 1.0:
                raise PreconditionError("augmentation probabilities must lie in [0, 1]")

    @property
    def optimizer(self) -> AdamWConfig:
        return AdamWConfig(self.beta1, self.beta2, self.eps, self.weight_decay)

    def to_dict(self) -> dict:
        return asdict(self)


def _batches(idx, batch_size):
    out = [idx[s:s + batch_size] for s in range(0, len(idx), batch_size)]
    # batch norm is undefined on a single training sample: fold it into the previous batch
    if len(out) > 1 and len(out[-1]) == 1:
        out[-2] = np.concatenate([out[-2], out.pop()])
    return out


def fit_fusion_net(x, y, fusion_config: FusionConfig, train_config: TrainConfig,
                   seed: int = 0) -> FusionNet:
    """Train one net on ``x`` (N x H x W x C) with labels ``y``."""
    y = np.asarray(y)
    if y.min() == y.max():
        raise TrainingError("training portion contains a single class")
    if len(y) < 2:
        raise TrainingError("need at least two training samples")
    net = FusionNet(fusion_config, seed=seed, dtype=train_config.dtype)
    state = AdamWState()
    rng = np.random.default_rng(seed)
    tc = train_config
    probs = (tc.p_hflip, tc.p_vflip, tc.p_rot90)
    for epoch in range(tc.epochs):
        lr = cosine_lr(epoch, tc.epochs, tc.lr_max, tc.lr_min)
        net.train()
        losses = []
        for idx in _batches(rng.permutation(len(y)), tc.batch_size):
            xb = augment(x[idx], probs, rng)
            loss = combined_loss(net.forward(xb), y[idx])
            grads = {n: g for n, g in backward(net, loss).items() if n not in net.frozen}
            adamw_step(net.params, grads, state, lr, tc.optimizer)
            losses.append(float(loss.data))
        log.debug("epoch %d lr %.2e loss %.4f", epoch, lr, np.mean(losses))
    net.eval()
    return net


def predict_net(net: FusionNet, x, tta: bool = True) -> np.ndarray:
    net.eval()
    return tta_predict(net, x) if tta else net.predict_proba(x)


def train_nn(stack, labels, fusion_config: FusionConfig, train_config: TrainConfig,
             fold_assignment):
    """Fit one net per fold and return ``(nets, oof_probabilities)``.

    Every sample's OOF probability comes from the net trained without its fold.
    """
    x = ag.as_array(stack)
    y = np.asarray(getattr(labels, "labels", labels))
    folds = np.asarray(getattr(fold_assignment, "folds", fold_assignment))
    if not (len(x) == len(y) == len(folds)):
        raise ShapeError("stack, labels and fold assignment must be aligned")
    if (folds < 0).any():
        raise PreconditionError("fold assignment must cover every sample")
    oof = np.full(len(y), np.nan)
    nets = []
    for k in np.unique(folds):
        held = folds == k
        try:
            net = fit_fusion_net(x[~held], y[~held], fusion_config, train_config,
                                 seed=train_config.seed + int(k))
        except TrainingError as exc:
            raise TrainingError(f"fold {k}: {exc}") from exc
        oof[held] = predict_net(net, x[held], train_config.tta)
        nets.append(net)
    return nets, oof
