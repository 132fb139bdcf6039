"""Plain data types shared by conversion, I/O and the networks."""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import InputError

ONLINE = "online"
OFFLINE = "offline"
MODALITIES = (ONLINE, OFFLINE)


@dataclass
class OnlinePointSequence:
    """Pen trajectory: ``strokes`` is a list of float arrays of shape [n_i, 2] holding (x, y)."""

    strokes: List[np.ndarray]

    def __post_init__(self):
        self.strokes = [np.asarray(s, dtype=np.float64).reshape(-1, 2) for s in self.strokes]
        if any(len(s) == 0 for s in self.strokes):
            raise InputError("empty stroke")

    @property
    def N(self):
        return sum(len(s) for s in self.strokes)

    def points(self):
        if not self.strokes:
            return np.zeros((0, 2))
        return np.concatenate(self.strokes, axis=0)

    def validate(self):
        if self.N < 2:
            raise InputError(f"trajectory needs at least 2 points, has {self.N}")
        if not np.all(np.isfinite(self.points())):
            raise InputError("non-finite coordinate")
        return self


@dataclass
class OfflineImage:
    """Grayscale raster with values in [0, 1].

    ``ink_high`` records polarity: False for images as stored on disk (dark
    ink on white), True after preprocessing inversion (ink = 1).
    """

    pixels: np.ndarray
    ink_high: bool = True

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 2 or 0 in self.pixels.shape:
            raise InputError(f"image must be a nonempty 2-D array, got {self.pixels.shape}")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def ink(self):
        """Ink intensity in [0, 1] regardless of polarity."""
        return self.pixels if self.ink_high else 1.0 - self.pixels

    def ink_mask(self, threshold=0.5):
        return self.ink() >= threshold


@dataclass(frozen=True)
class ModalityTag:
    """Original modality as a 2-bit one-hot: [1, 0] online, [0, 1] offline."""

    bits: tuple

    def __post_init__(self):
        if tuple(sorted(self.bits)) != (0, 1) or len(self.bits) != 2:
            raise InputError(f"modality tag must be one-hot of length 2, got {self.bits}")

    @classmethod
    def of(cls, modality):
        if modality == ONLINE:
            return cls((1, 0))
        if modality == OFFLINE:
            return cls((0, 1))
        raise InputError(f"unknown modality {modality!r}")

    @property
    def modality(self):
        return ONLINE if self.bits == (1, 0) else OFFLINE

    def flipped(self):
        return ModalityTag(self.bits[::-1])

    def vector(self, dtype=np.float32):
        return np.asarray(self.bits, dtype=dtype)


@dataclass
class Sample:
    id: str
    script: str
    level: str
    origin: ModalityTag
    online: Optional[OnlinePointSequence] = None
    offline: Optional[OfflineImage] = None
    meta: dict = field(default_factory=dict)
