"""Stratified 10-fold train/val/test splits."""
from dataclasses import dataclass
from typing import List

import numpy as np

from ..errors import InputError

NUM_FOLDS = 10
TEST_FRACTION = 0.2
VAL_FRACTION = 0.1
MIN_PER_CLASS = 10


@dataclass
class FoldSpec:
    fold_index: int
    train: List[str]
    val: List[str]
    test: List[str]


def make_folds(items, seed, num_folds=NUM_FOLDS):
    """``items`` is a sequence of (id, label) pairs.

    Each class is shuffled once under ``seed``. Fold k rotates that order by
    k/num_folds of the class size, then takes 20% for test, the next 10% for
    validation and the rest for training, so every id lands in the test part
    of at least one fold.
    """
    items = list(items)
    ids = [i for i, _ in items]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate ids passed to make_folds")
    by_class = {}
    for sid, label in items:
        by_class.setdefault(label, []).append(sid)
    small = {k: len(v) for k, v in by_class.items() if len(v) < MIN_PER_CLASS}
    if small:
        raise InputError(f"classes with fewer than {MIN_PER_CLASS} samples: {small}")

    rng = np.random.default_rng(seed)
    orders = {}
    for label in sorted(by_class, key=str):
        members = sorted(by_class[label])
        orders[label] = [members[j] for j in rng.permutation(len(members))]

    folds = []
    for k in range(num_folds):
        train, val, test = [], [], []
        for label in sorted(orders, key=str):
            order = orders[label]
            n = len(order)
            shift = (k * n) // num_folds
            rot = order[shift:] + order[:shift]
            n_test = int(round(TEST_FRACTION * n))
            n_val = int(round(VAL_FRACTION * n))
            test += rot[:n_test]
            val += rot[n_test:n_test + n_val]
            train += rot[n_test + n_val:]
        folds.append(FoldSpec(k, train, val, test))
    return folds
