"""Evaluation protocols, confusion matrices and JSON reports."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError
from .fusion import predict_proba
from .pipeline import PROTOCOLS, make_batch, prepare
from .types import MODALITIES


def confusion_matrix(predictions, truths, num_classes=7):
    """Counts with rows = true class, columns = predicted class."""
    p = np.asarray(predictions, dtype=np.int64).ravel()
    t = np.asarray(truths, dtype=np.int64).ravel()
    if p.shape != t.shape:
        raise InputError(f"{len(p)} predictions for {len(t)} truths")
    if p.size and (min(p.min(), t.min()) < 0 or max(p.max(), t.max()) >= num_classes):
        raise InputError(f"label outside [0, {num_classes})")
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(m, (t, p), 1)
    return m


@dataclass
class EvalReport:
    accuracy: float
    accuracy_by_origin: dict
    confusion: list
    precision: list
    recall: list
    labels: list
    count: int
    metadata: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def report_from_predictions(preds, truths, origins, labels, metadata=None):
    n = len(labels)
    m = confusion_matrix(preds, truths, n)
    preds, truths, origins = np.asarray(preds), np.asarray(truths), np.asarray(origins)
    total = int(m.sum())
    by_origin = {}
    for mod in MODALITIES:
        sel = origins == mod
        if sel.any():
            by_origin[mod] = float((preds[sel] == truths[sel]).mean())
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.diag(m) / m.sum(axis=0)
        rec = np.diag(m) / m.sum(axis=1)
    clean = lambda a: [None if not np.isfinite(v) else float(v) for v in a]  # noqa: E731
    return EvalReport(
        accuracy=float(np.trace(m) / total) if total else 0.0,
        accuracy_by_origin=by_origin,
        confusion=m.tolist(),
        precision=clean(prec),
        recall=clean(rec),
        labels=list(labels),
        count=total,
        metadata=dict(metadata or {}),
    )


def predict(model, items, batch_size=32):
    """Class probabilities for prepared items; batches of one keep every
    sample at its own width."""
    model.eval()
    out = []
    for k in range(0, len(items), batch_size):
        logits = model(make_batch(items[k:k + batch_size]))
        out.append(predict_proba(logits))
    return np.concatenate(out) if out else np.zeros((0, model.config.num_classes))


def evaluate(model, registry, descriptors, protocol="within_modality", level="character",
             prepared=None, train_level=None):
    """Accuracy report over manifest rows of one level.

    Character-level samples run in batches of 32 at 32x32; word-level samples
    run one at a time at their own width. ``prepared`` may carry items that
    were already converted for this protocol and level.
    """
    if protocol not in PROTOCOLS:
        raise InputError(f"protocol must be one of {PROTOCOLS}")
    descs = [d for d in descriptors if d.level == level]
    if not descs:
        raise InputError(f"no {level}-level samples to evaluate")
    items = prepared if prepared is not None else [prepare(d, registry, level, protocol) for d in descs]
    probs = predict(model, items, batch_size=32 if level == "character" else 1)
    preds = probs.argmax(axis=1)
    meta = {"protocol": protocol, "test_level": level, "train_level": train_level,
            "arch": model.config.arch, "fusion": model.config.fusion}
    return report_from_predictions(preds, [p.label for p in items], [p.origin for p in items],
                                   registry.names, meta)
