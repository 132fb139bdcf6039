"""Split and prepare manifest rows for training and evaluation runs.

The split is drawn from ``make_folds`` over the rows of one level, keyed by a
split seed that is independent of the training seed, so runs with different
training seeds share the same train/val/test partition.
"""
from dataclasses import dataclass
from typing import List

from .dataio.folds import make_folds
from .errors import InputError
from .pipeline import prepare

SPLITS = ("train", "val", "test", "all")


@dataclass
class Split:
    train: List
    val: List
    test: List

    def part(self, name):
        if name == "all":
            return self.train + self.val + self.test
        if name not in SPLITS:
            raise InputError(f"split must be one of {SPLITS}")
        return getattr(self, name)


def split_descriptors(descriptors, registry, level, split_seed=0, fold=0) -> Split:
    """Stratified train/val/test descriptors for one level and fold."""
    rows = [d for d in descriptors if d.level == level]
    if not rows:
        raise InputError(f"manifest has no {level}-level samples")
    folds = make_folds([(d.id, registry.index(d.script)) for d in rows], split_seed)
    if not 0 <= fold < len(folds):
        raise InputError(f"fold must be in [0, {len(folds)})")
    spec = folds[fold]
    by_id = {d.id: d for d in rows}
    pick = lambda ids: [by_id[i] for i in sorted(ids)]  # noqa: E731
    return Split(pick(spec.train), pick(spec.val), pick(spec.test))


def prepare_all(descriptors, registry, level=None, protocol="within_modality"):
    return [prepare(d, registry, level, protocol) for d in descriptors]
