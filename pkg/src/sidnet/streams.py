"""Online (1-D conv) and offline (2-D conv) feature extractors.

Both streams end in a global max-pooled vector broadcast back onto every
position, one more convolution, and a column-wise map-to-sequence.
"""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DegenerateInputError, InputError
from .nn import BatchNorm, Conv, Module
from .types import OfflineImage, OnlinePointSequence

OFFLINE_HEIGHT = 32
CHAR_SIZE = 32


@dataclass
class FeatureSequence:
    """``data`` [B, T, dim]; ``true_length`` [B] valid steps per row."""

    data: Tensor
    true_length: np.ndarray

    @property
    def T(self):
        return self.data.shape[1]

    @property
    def dim(self):
        return self.data.shape[2]


# ---------------------------------------------------------------- preprocessing

def preprocess_online(raw: OnlinePointSequence) -> np.ndarray:
    """Normalize a trajectory to the [N, 1, 2] network input.

    The bounding box's min corner moves to the origin and the height span is
    scaled to 1 (width span when the trajectory is flat). Strokes are
    concatenated in temporal order.
    """
    pts = raw.points()
    if len(pts) < 2:
        raise InputError(f"online input needs at least 2 points, has {len(pts)}")
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    scale = span[1] if span[1] > 0 else span[0]
    if scale <= 0:
        raise DegenerateInputError("all trajectory points coincide")
    out = (pts - lo) / scale
    return out.astype(np.float32).reshape(-1, 1, 2)


def _nearest_resize(img, height, width):
    H, W = img.shape
    rows = np.minimum(((np.arange(height) + 0.5) * H / height).astype(np.int64), H - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * W / width).astype(np.int64), W - 1)
    return img[rows][:, cols]


def preprocess_offline(raw: OfflineImage, mode="word") -> OfflineImage:
    """Invert to ink = 1 and scale to height 32 (nearest neighbour).

    ``mode="word"`` keeps the aspect ratio; ``mode="character"`` resizes to 32x32.
    """
    if mode not in ("word", "character"):
        raise InputError(f"preprocess mode {mode!r}")
    ink = raw.ink()
    if not (ink >= 0.5).any():
        raise DegenerateInputError("blank image")
    H, W = ink.shape
    if mode == "character":
        h, w = CHAR_SIZE, CHAR_SIZE
    else:
        h, w = OFFLINE_HEIGHT, max(1, int(round(W * OFFLINE_HEIGHT / H)))
    if (h, w) != (H, W):
        ink = _nearest_resize(ink, h, w)
    return OfflineImage(ink, ink_high=True)


def pad_online(d: np.ndarray, length: int) -> np.ndarray:
    """Pad an [N, 1, 2] signal to ``length`` by repeating its last point."""
    n = d.shape[0]
    if n >= length:
        return d
    return np.concatenate([d, np.repeat(d[-1:], length - n, axis=0)], axis=0)


def batch_online(signals):
    """Stack [N_i, 1, 2] signals into [B, N, 1, 2] plus even true lengths.

    Odd signals get one repeated point so every length is even; the batch is
    padded to the longest signal the same way.
    """
    lengths = np.array([s.shape[0] + (s.shape[0] % 2) for s in signals], dtype=np.int64)
    if lengths.min() < 4:
        raise InputError("online stream needs at least 4 points")
    N = int(lengths.max())
    return np.stack([pad_online(s, N) for s in signals]), lengths


def batch_offline(images):
    """Stack ink-high height-32 images into [B, 32, W, 1], padding on the right
    with background to the widest image rounded up to a multiple of 4."""
    widths = np.array([im.width for im in images], dtype=np.int64)
    if any(im.height != OFFLINE_HEIGHT for im in images):
        raise InputError("offline stream expects height-32 images")
    padded = widths + (-widths) % 4
    if padded.min() < 8:
        raise InputError("offline stream needs width >= 8")
    W = int(padded.max())
    out = np.zeros((len(images), OFFLINE_HEIGHT, W, 1), dtype=np.float32)
    for k, im in enumerate(images):
        out[k, :, :im.width, 0] = im.pixels
    return out, padded


# ---------------------------------------------------------------------- streams

class OnlineStream(Module):
    """conv32 conv64+BN pool(2x1) conv128 conv256+BN conv256 | global max |
    conv512, all 5x1 same-padded with ReLU."""

    def __init__(self, rng, widths=(32, 64, 128, 256, 256, 512), kernel=5):
        k = (kernel, 1)
        w1, w2, w3, w4, w5, w6 = widths
        self.conv1 = Conv(2, w1, k, rng)
        self.conv2 = Conv(w1, w2, k, rng, bias=False)
        self.bn2 = BatchNorm(w2)
        self.conv3 = Conv(w2, w3, k, rng)
        self.conv4 = Conv(w3, w4, k, rng, bias=False)
        self.bn4 = BatchNorm(w4)
        self.conv5 = Conv(w4, w5, k, rng)
        self.conv6 = Conv(2 * w5, w6, k, rng)
        self.out_dim = w6

    def __call__(self, d, lengths, ablate_global=False) -> FeatureSequence:
        """``d`` [B, N, 1, 2] with N even; ``lengths`` [B] even true point counts."""
        if not isinstance(d, Tensor):
            d = Tensor(d)
        B, N = d.shape[0], d.shape[1]
        if N < 4:
            raise InputError(f"online stream needs N >= 4, got {N}")
        if N % 2:
            raise InputError("online stream needs an even length; use batch_online")
        lengths = np.asarray(lengths, dtype=np.int64)
        x = ad.relu(self.conv1(d))
        x = ad.relu(self.bn2(self.conv2(x)))
        x = ad.maxpool(x, (2, 1))
        x = ad.relu(self.conv3(x))
        x = ad.relu(self.bn4(self.conv4(x)))
        x = ad.relu(self.conv5(x))
        T = x.shape[1]
        true_len = lengths // 2
        mask = (np.arange(T)[None, :] < true_len[:, None])[:, :, None]
        g = ad.global_maxpool(x, mask)
        if ablate_global:
            g = ad.mul(g, 0.0)
        x = ad.broadcast_concat_global(x, g)
        x = ad.relu(self.conv6(x))
        x = ad.reshape(x, (B, 1, T, x.shape[3]))
        return FeatureSequence(ad.map_to_sequence(x), true_len)


class OfflineStream(Module):
    """Seven 2x2 convolutions with four max pools (2x2, 2x2, 2x1, 2x1), batch
    norm after conv3 and conv5, a global max vector concatenated before the
    last convolution, which is valid-padded so the height collapses to 1."""

    def __init__(self, rng, widths=(64, 128, 256, 256, 512, 512, 512)):
        k = (2, 2)
        w1, w2, w3, w4, w5, w6, w7 = widths
        self.conv1 = Conv(1, w1, k, rng)
        self.conv2 = Conv(w1, w2, k, rng)
        self.conv3 = Conv(w2, w3, k, rng, bias=False)
        self.bn3 = BatchNorm(w3)
        self.conv4 = Conv(w3, w4, k, rng)
        self.conv5 = Conv(w4, w5, k, rng, bias=False)
        self.bn5 = BatchNorm(w5)
        self.conv6 = Conv(w5, w6, k, rng)
        self.conv7 = Conv(2 * w6, w7, k, rng, padding="valid")
        self.out_dim = w7

    @staticmethod
    def sequence_length(width):
        """Steps produced for an input of ``width`` columns (after right padding)."""
        width = width + (-width) % 4
        return width // 4 - 1

    def __call__(self, img, widths=None, ablate_global=False) -> FeatureSequence:
        """``img`` [B, 32, W, 1] ink-high, W a multiple of 4; ``widths`` [B]
        valid (padded-to-4) widths for masking the global max."""
        if not isinstance(img, Tensor):
            img = Tensor(img)
        B, H, W = img.shape[:3]
        if H != OFFLINE_HEIGHT:
            raise InputError(f"offline stream needs height {OFFLINE_HEIGHT}, got {H}")
        if W < 8:
            raise InputError(f"offline stream needs width >= 8, got {W}")
        if W % 4:
            raise InputError("offline width must be a multiple of 4; use batch_offline")
        widths = np.full(B, W) if widths is None else np.asarray(widths, dtype=np.int64)
        x = ad.maxpool(ad.relu(self.conv1(img)), (2, 2))
        x = ad.maxpool(ad.relu(self.conv2(x)), (2, 2))
        x = ad.relu(self.bn3(self.conv3(x)))
        x = ad.maxpool(ad.relu(self.conv4(x)), (2, 1))
        x = ad.relu(self.bn5(self.conv5(x)))
        x = ad.maxpool(ad.relu(self.conv6(x)), (2, 1))
        cols = widths // 4
        mask = np.broadcast_to((np.arange(x.shape[2])[None, :] < cols[:, None])[:, None, :],
                               (B, x.shape[1], x.shape[2]))
        g = ad.global_maxpool(x, mask)
        if ablate_global:
            g = ad.mul(g, 0.0)
        x = ad.broadcast_concat_global(x, g)
        x = ad.relu(self.conv7(x))
        return FeatureSequence(ad.map_to_sequence(x), cols - 1)


def online_stream_forward(d, stream: OnlineStream, mode="infer") -> FeatureSequence:
    """Single-sample convenience wrapper: ``d`` is [N, 1, 2]."""
    d = np.asarray(d.data if isinstance(d, Tensor) else d, dtype=np.float32)
    if d.shape[0] < 4:
        raise InputError(f"online stream needs N >= 4, got {d.shape[0]}")
    batch, lengths = batch_online([d])
    stream.train(mode == "train")
    return stream(batch, lengths)


def offline_stream_forward(img: OfflineImage, stream: OfflineStream, mode="infer") -> FeatureSequence:
    if img.height != OFFLINE_HEIGHT:
        raise InputError(f"offline stream needs height {OFFLINE_HEIGHT}, got {img.height}")
    if img.width < 8:
        raise InputError(f"offline stream needs width >= 8, got {img.width}")
    batch, widths = batch_offline([img])
    stream.train(mode == "train")
    return stream(batch, widths)
