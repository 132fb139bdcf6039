"""Turn manifest rows into network-ready pairs and batches.

Each sample is read in its original modality only; the counterpart is
always produced by conversion, the way it would be for real single-modality
data. The cross-modality protocol instead treats the counterpart as the
original: it is read from disk when present (or converted), the other side is
converted back from it, and the modality tag is flipped.
"""
from dataclasses import dataclass

import numpy as np

from .convert import convert
from .errors import DegenerateInputError, InputError
from .model import Batch
from .streams import batch_offline, batch_online, pad_online, preprocess_offline, preprocess_online
from .types import OFFLINE, ONLINE, Sample

PROTOCOLS = ("within_modality", "cross_modality")
MIN_ONLINE_POINTS = 4


@dataclass
class Prepared:
    id: str
    label: int
    origin: str
    online: np.ndarray        # [N, 1, 2] float32
    offline: object           # OfflineImage, height 32, ink-high
    z: np.ndarray             # [2] float32


def _online_signal(traj):
    try:
        d = preprocess_online(traj)
    except DegenerateInputError:
        # a recovered blob with no extent: feed a flat signal
        d = np.zeros((1, 1, 2), dtype=np.float32)
    return pad_online(d, MIN_ONLINE_POINTS)


def _swap_origin(desc, sample: Sample) -> Sample:
    """Present the counterpart modality as the original."""
    flipped = sample.origin.flipped()
    if flipped.modality == ONLINE:
        online = desc.load().online if desc.online_path else convert(sample).online
        return Sample(sample.id, sample.script, sample.level, flipped, online, None)
    offline = desc.load().offline if desc.offline_path else convert(sample).offline
    return Sample(sample.id, sample.script, sample.level, flipped, None, offline)


def prepare_sample(sample: Sample, label=-1, level=None) -> Prepared:
    """Convert a single-modality sample and preprocess both sides.

    ``level`` picks the offline preprocessing: "character" resizes to 32x32,
    "word" keeps the aspect ratio at height 32.
    """
    level = level or sample.level
    full = convert(sample)
    mode = "character" if level == "character" else "word"
    return Prepared(
        id=sample.id,
        label=label,
        origin=full.origin.modality,
        online=_online_signal(full.online),
        offline=preprocess_offline(full.offline, mode=mode),
        z=full.origin.vector(),
    )


def prepare(desc, registry, level=None, protocol="within_modality") -> Prepared:
    """Load one manifest row and return a converted, preprocessed pair."""
    if protocol not in PROTOCOLS:
        raise InputError(f"protocol must be one of {PROTOCOLS}")
    sample = desc.load(origin_only=True)
    if protocol == "cross_modality":
        sample = _swap_origin(desc, sample)
    return prepare_sample(sample, registry.index(desc.script), level or desc.level)


def make_batch(items) -> Batch:
    online, lengths = batch_online([p.online for p in items])
    offline, widths = batch_offline([p.offline for p in items])
    return Batch(
        online=online.astype(np.float32, copy=False),
        online_lengths=lengths,
        offline=offline,
        offline_widths=widths,
        z=np.stack([p.z for p in items]).astype(np.float32),
        labels=np.array([p.label for p in items], dtype=np.int64),
    )


def filter_source(items, source):
    """Keep samples whose original modality matches the training source."""
    if source == "both":
        return list(items)
    want = {"online_only": ONLINE, "offline_only": OFFLINE}.get(source)
    if want is None:
        raise InputError(f"train_source must be both, online_only or offline_only, got {source!r}")
    return [p for p in items if p.origin == want]
