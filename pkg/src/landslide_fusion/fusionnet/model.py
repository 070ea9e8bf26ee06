"""Multi-encoder transformer classifier with concatenation fusion.

Each encoder sees one group of input channels.  Its input is cut into
non-overlapping square token patches, linearly embedded, given learned
positional embeddings and passed through pre-norm transformer blocks; the
mean-pooled tokens are projected to a fixed-width feature vector.  The
fusion head concatenates all encoder vectors and applies
dense+ReLU -> batch norm -> dropout -> residual block -> single logit.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import zoom

from ..dataio import LAYOUT
from ..errors import PreconditionError, ShapeError, StateError
from . import autograd as ag
from .autograd import Tensor

__all__ = [
    "ARCHITECTURES",
    "EncoderConfig",
    "FusionConfig",
    "FusionNet",
    "backward",
    "combined_loss",
    "fusion_config",
    "soft_f1_loss",
]

SOFT_F1_EPS = 1e-8


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 64
    token_patch: int = 8
    embed_dim: int = 64
    depth: int = 2
    heads: int = 4
    mlp_ratio: int = 2
    out_features: int = 256

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise PreconditionError("embed_dim must be divisible by heads")
        if self.image_size % self.token_patch:
            raise PreconditionError("image_size must be divisible by token_patch")

    @property
    def n_tokens(self) -> int:
        return (self.image_size // self.token_patch) ** 2


@dataclass(frozen=True)
class FusionConfig:
    """``modality_assignment`` lists one channel-group tuple per encoder."""

    modality_assignment: tuple = (("RGBN",), ("SARdiff",), ("Indices",))
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    head_width: int = 256
    dropout: float = 0.3
    resize: int = 1             # integer bilinear upsampling factor applied to inputs

    def __post_init__(self):
        if int(self.resize) != self.resize or self.resize < 1:
            raise PreconditionError("resize must be a positive integer")
        groups = tuple(tuple(g) for g in self.modality_assignment)
        if not groups:
            raise PreconditionError("fusion net needs at least one encoder")
        flat = [name for g in groups for name in g]
        if len(flat) != len(set(flat)):
            raise PreconditionError("modality groups assigned to encoders must be disjoint")
        for name in flat:
            LAYOUT.channels_of([name])
        if not 0.0 <= self.dropout < 1.0:
            raise PreconditionError("dropout must lie in [0, 1)")
        object.__setattr__(self, "modality_assignment", groups)

    def channel_groups(self) -> list:
        return [LAYOUT.channels_of(g) for g in self.modality_assignment]

    def to_dict(self) -> dict:
        return {"modality_assignment": [list(g) for g in self.modality_assignment],
                "encoder": asdict(self.encoder), "head_width": self.head_width,
                "dropout": self.dropout, "resize": self.resize}

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        return cls(tuple(tuple(g) for g in d["modality_assignment"]),
                   EncoderConfig(**d["encoder"]), d["head_width"], d["dropout"],
                   d.get("resize", 1))


ARCHITECTURES = {
    "single": (("RGBN", "SAR", "SARdiff", "Indices"),),
    "combinedV2": (("RGBN",), ("SARdiff",)),
    "combinedV3": (("RGBN",), ("SARdiff",), ("Indices",)),
    "combinedV4": (("RGBN",), ("SAR",), ("SARdiff",), ("Indices",)),
}


def fusion_config(arch: str, channels: int = 18, resize: int = 1, **encoder_kwargs) -> FusionConfig:
    """Named encoder layout; groups needing index channels are dropped when ``channels == 12``.

    ``resize > 1`` upsamples inputs bilinearly and sizes the encoders to match.
    """
    if arch not in ARCHITECTURES:
        raise KeyError(f"unknown architecture {arch!r}")
    assignment = []
    for groups in ARCHITECTURES[arch]:
        kept = tuple(g for g in groups if max(LAYOUT.channels_of([g])) < channels)
        if kept:
            assignment.append(kept)
    encoder_kwargs.setdefault("image_size", 64 * resize)
    return FusionConfig(tuple(assignment), EncoderConfig(**encoder_kwargs), resize=resize)


def upsample(x, factor: int) -> np.ndarray:
    """Bilinear integer-factor upsampling of the spatial axes of ``B x H x W x C``."""
    if factor == 1:
        return x
    return zoom(x, (1, factor, factor, 1), order=1, mode="nearest", grid_mode=True)


def _patchify(x, p):
    b, h, w, c = x.shape
    t = x.reshape(b, h // p, p, w // p, p, c).transpose(0, 1, 3, 2, 4, 5)
    return t.reshape(b, (h // p) * (w // p), p * p * c)


class FusionNet:
    def __init__(self, config: FusionConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.groups = config.channel_groups()
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.frozen: set = set()
        self.running = {"head.bn.mean": np.zeros(config.head_width, self.dtype),
                        "head.bn.var": np.ones(config.head_width, self.dtype)}
        self.bn_momentum = 0.1
        self.training = True
        self.record_attention = False
        self.attention_maps: list = []
        self.rng = np.random.default_rng(seed)
        self._taped = False
        self._init_params(np.random.default_rng(seed))

    # -- parameters -------------------------------------------------------
    def _add(self, name, value):
        self.params[name] = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True)

    def _dense(self, rng, name, fan_in, fan_out, zero=False, gain=1.0):
        w = np.zeros((fan_in, fan_out)) if zero else rng.standard_normal((fan_in, fan_out)) * gain / np.sqrt(fan_in)
        self._add(f"{name}.weight", w)
        self._add(f"{name}.bias", np.zeros(fan_out))

    def _norm(self, name, dim):
        self._add(f"{name}.gamma", np.ones(dim))
        self._add(f"{name}.beta", np.zeros(dim))

    def _init_params(self, rng):
        enc = self.config.encoder
        d = enc.embed_dim
        for k, chans in enumerate(self.groups):
            pre = f"enc{k}"
            self._dense(rng, f"{pre}.embed", enc.token_patch ** 2 * len(chans), d)
            self._add(f"{pre}.pos", 0.02 * rng.standard_normal((enc.n_tokens, d)))
            for blk in range(enc.depth):
                b = f"{pre}.block{blk}"
                self._norm(f"{b}.ln1", d)
                self._dense(rng, f"{b}.attn.qkv", d, 3 * d)
                self._dense(rng, f"{b}.attn.out", d, d)
                self._norm(f"{b}.ln2", d)
                self._dense(rng, f"{b}.mlp.fc1", d, d * enc.mlp_ratio)
                self._dense(rng, f"{b}.mlp.fc2", d * enc.mlp_ratio, d)
            self._norm(f"{pre}.ln_final", d)
            self._dense(rng, f"{pre}.proj", d, enc.out_features)
        width = self.config.head_width
        self._dense(rng, "head.dense", enc.out_features * len(self.groups), width, gain=np.sqrt(2))
        self._norm("head.bn", width)
        self._dense(rng, "head.res1", width, width, gain=np.sqrt(2))
        self._dense(rng, "head.res2", width, width, zero=True)
        self._dense(rng, "head.out", width, 1)

    def parameters(self):
        return self.params

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def freeze(self, *names):
        for n in names:
            self.params[n].requires_grad = False
            self.frozen.add(n)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def gradients(self) -> dict:
        return {n: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for n, p in self.params.items()}

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    # -- forward ----------------------------------------------------------
    def _encoder(self, k, x):
        enc = self.config.encoder
        P = lambda name: self.params[f"enc{k}.{name}"]  # noqa: E731
        tokens = Tensor(_patchify(x, enc.token_patch))
        h = tokens @ P("embed.weight") + P("embed.bias") + P("pos")
        b, t, d = h.shape
        heads, dh = enc.heads, d // enc.heads
        for blk in range(enc.depth):
            pre = f"block{blk}"
            z = ag.layer_norm(h, P(f"{pre}.ln1.gamma"), P(f"{pre}.ln1.beta"))
            qkv = z @ P(f"{pre}.attn.qkv.weight") + P(f"{pre}.attn.qkv.bias")
            qkv = qkv.reshape(b, t, 3, heads, dh).transpose(2, 0, 3, 1, 4)
            q, kk, v = qkv[0], qkv[1], qkv[2]
            scores = (q @ kk.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
            attn = ag.softmax(scores, axis=-1)
            if self.record_attention:
                self.attention_maps.append(attn.data.copy())
            o = (attn @ v).transpose(0, 2, 1, 3).reshape(b, t, d)
            h = h + (o @ P(f"{pre}.attn.out.weight") + P(f"{pre}.attn.out.bias"))
            z = ag.layer_norm(h, P(f"{pre}.ln2.gamma"), P(f"{pre}.ln2.beta"))
            m = ag.gelu(z @ P(f"{pre}.mlp.fc1.weight") + P(f"{pre}.mlp.fc1.bias"))
            h = h + (m @ P(f"{pre}.mlp.fc2.weight") + P(f"{pre}.mlp.fc2.bias"))
        h = ag.layer_norm(h, P("ln_final.gamma"), P("ln_final.beta"))
        pooled = h.mean(axis=1)
        return pooled @ P("proj.weight") + P("proj.bias")

    def forward(self, batch) -> Tensor:
        """Logits of shape ``(B, 1)`` for a ``B x H x W x C`` batch."""
        x = ag.as_array(batch)
        if x.ndim != 4:
            raise ShapeError(f"batch must be B x H x W x C, got {x.shape}")
        need = max(max(g) for g in self.groups) + 1
        if x.shape[3] < need:
            raise ShapeError(f"batch has {x.shape[3]} channels, encoders need {need}")
        x = upsample(x, self.config.resize)
        size = self.config.encoder.image_size
        if x.shape[1] != size or x.shape[2] != size:
            raise ShapeError(f"encoders expect {size}x{size} patches, got {x.shape[1:3]}")
        if self.training and x.shape[0] < 2:
            raise PreconditionError("batch norm in training mode needs at least 2 samples")
        x = x.astype(self.dtype, copy=False)
        self.attention_maps = []
        feats = [self._encoder(k, x[..., list(ch)]) for k, ch in enumerate(self.groups)]
        z = feats[0] if len(feats) == 1 else ag.concat(feats, axis=1)
        P = self.params
        h = ag.relu(z @ P["head.dense.weight"] + P["head.dense.bias"])
        if self.training:
            h, (mu, var) = ag.batch_norm(h, P["head.bn.gamma"], P["head.bn.beta"])
            n = x.shape[0]
            m = self.bn_momentum
            self.running["head.bn.mean"] = ((1 - m) * self.running["head.bn.mean"] + m * mu).astype(self.dtype)
            unbiased = var * n / (n - 1)
            self.running["head.bn.var"] = ((1 - m) * self.running["head.bn.var"] + m * unbiased).astype(self.dtype)
            h = ag.dropout(h, self.config.dropout, self.rng)
        else:
            h, _ = ag.batch_norm(h, P["head.bn.gamma"], P["head.bn.beta"],
                                 stats=(self.running["head.bn.mean"], self.running["head.bn.var"]))
        r = ag.relu(h @ P["head.res1.weight"] + P["head.res1.bias"])
        h = h + (r @ P["head.res2.weight"] + P["head.res2.bias"])
        logits = h @ P["head.out.weight"] + P["head.out.bias"]
        self._taped = logits.requires_grad
        return logits

    __call__ = forward

    def predict_proba(self, batch, batch_size: int = 64) -> np.ndarray:
        x = ag.as_array(batch)
        out = []
        with ag.no_grad():
            for s in range(0, x.shape[0], batch_size):
                logit = self.forward(x[s:s + batch_size]).data[:, 0]
                out.append(0.5 * (1.0 + np.tanh(0.5 * logit.astype(np.float64))))
        return np.concatenate(out) if out else np.empty(0)


def soft_f1_loss(logits: Tensor, labels) -> Tensor:
    """``1 - 2*sum(p*y) / (sum(p) + sum(y) + eps)`` over the batch, ``p = sigmoid(logit)``."""
    y = np.asarray(labels, dtype=logits.dtype).reshape(logits.shape)
    p = ag.sigmoid(logits)
    tp = (p * y).sum()
    denom = p.sum() + float(y.sum()) + SOFT_F1_EPS
    return 1.0 - 2.0 * tp / denom


def combined_loss(logits, labels) -> Tensor:
    """Equal-weight average of logit BCE and the soft-F1 surrogate."""
    logits = logits if isinstance(logits, Tensor) else Tensor(np.asarray(logits, dtype=np.float64))
    y = np.asarray(labels).reshape(-1)
    if logits.data.size == 0 or y.size == 0:
        raise PreconditionError("combined_loss needs at least one sample")
    if logits.data.size != y.size:
        raise ShapeError(f"{logits.data.size} logits but {y.size} labels")
    if not np.isin(y, (0, 1)).all():
        raise PreconditionError("labels must be 0 or 1")
    return 0.5 * ag.bce_with_logits(logits, y) + 0.5 * soft_f1_loss(logits, y)


def backward(net: FusionNet, loss: Tensor) -> dict:
    """Populate parameter gradients from ``loss``; returns ``name -> gradient``."""
    if not net._taped or not isinstance(loss, Tensor) or not loss.requires_grad:
        raise StateError("backward called without a recorded training forward pass")
    net.zero_grad()
    loss.backward()
    net._taped = False
    return net.gradients()
