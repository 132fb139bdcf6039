"""The dual-stream script identification network and its single-stream slices."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InputError
from .fusion import FUSIONS, GatedFusion, baseline_fuse, classify_head, conditional_fuse
from .nn import Dense, Module
from .recurrent import LSTM
from .streams import OfflineStream, OnlineStream

ARCHS = ("dual", "online", "offline")


@dataclass
class ModelConfig:
    arch: str = "dual"
    fusion: str = "conditional"
    num_classes: int = 7
    hidden: int = 512
    online_widths: tuple = (32, 64, 128, 256, 256, 512)
    offline_widths: tuple = (64, 128, 256, 256, 512, 512, 512)

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise InputError(f"arch must be one of {ARCHS}")
        if self.fusion not in FUSIONS:
            raise InputError(f"fusion must be one of {FUSIONS}")
        self.online_widths = tuple(self.online_widths)
        self.offline_widths = tuple(self.offline_widths)


@dataclass
class Batch:
    """Network input. ``online`` [B, N, 1, 2] with even ``online_lengths``;
    ``offline`` [B, 32, W, 1] with ``offline_widths``; ``z`` [B, 2] one-hot
    original modality; ``labels`` [B] or None."""

    online: Optional[np.ndarray]
    online_lengths: Optional[np.ndarray]
    offline: Optional[np.ndarray]
    offline_widths: Optional[np.ndarray]
    z: np.ndarray
    labels: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.z)


class ScriptNet(Module):
    def __init__(self, config: ModelConfig, rng):
        self.config = config
        K = config.hidden
        if config.arch in ("dual", "online"):
            self.online = OnlineStream(rng, config.online_widths)
            self.online_lstm = LSTM(self.online.out_dim, K, rng)
        if config.arch in ("dual", "offline"):
            self.offline = OfflineStream(rng, config.offline_widths)
            self.offline_lstm = LSTM(self.offline.out_dim, K, rng)
        head_in = K
        if config.arch == "dual":
            if config.fusion == "conditional":
                self.fusion = GatedFusion(K, rng)
            elif config.fusion == "concat":
                head_in = 2 * K
        self.head = Dense(head_in, config.num_classes, rng)

    def features(self, batch: Batch):
        out = {}
        if hasattr(self, "online"):
            seq = self.online(batch.online, batch.online_lengths)
            out["online"] = self.online_lstm(seq.data, seq.true_length)
        if hasattr(self, "offline"):
            seq = self.offline(batch.offline, batch.offline_widths)
            out["offline"] = self.offline_lstm(seq.data, seq.true_length)
        return out

    def __call__(self, batch: Batch):
        feats = self.features(batch)
        cfg = self.config
        if cfg.arch != "dual":
            fused = feats[cfg.arch]
        elif cfg.fusion == "conditional":
            z = Tensor(np.asarray(batch.z, dtype=feats["online"].dtype))
            fused, _ = conditional_fuse(feats["online"], feats["offline"], z, self.fusion)
        else:
            fused = baseline_fuse(feats["online"], feats["offline"], cfg.fusion)
        return classify_head(fused, self.head)

    def loss(self, batch: Batch):
        logits = self(batch)
        return ad.softmax_cross_entropy(logits, batch.labels), logits
