"""Toy-scale multi-encoder transformer on a numpy autodiff engine."""
from .augment import augment, hflip, tta_predict, vflip
from .autograd import Tensor, no_grad
from .io import load_weights, save_weights
from .model import (
    ARCHITECTURES,
    EncoderConfig,
    FusionConfig,
    FusionNet,
    backward,
    combined_loss,
    fusion_config,
    soft_f1_loss,
)
from .optim import AdamWConfig, AdamWState, adamw_step, cosine_lr
from .training import TrainConfig, fit_fusion_net, predict_net, train_nn

__all__ = [
    "ARCHITECTURES", "AdamWConfig", "AdamWState", "EncoderConfig", "FusionConfig", "FusionNet",
    "Tensor", "TrainConfig", "adamw_step", "augment", "backward", "combined_loss", "cosine_lr",
    "fit_fusion_net", "fusion_config", "hflip", "load_weights", "no_grad", "predict_net",
    "save_weights", "soft_f1_loss", "tta_predict", "train_nn", "vflip",
]
