"""Training: configuration, SGD with momentum, plateau schedule and the loop."""
import csv
import dataclasses
import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

from . import autodiff as ad
from .errors import ConsistencyError, DivergenceError, InputError
from .fusion import FUSIONS
from .model import ARCHS, ModelConfig, ScriptNet
from .pipeline import filter_source, make_batch

TRAIN_SOURCES = ("both", "online_only", "offline_only")
LEVELS = ("character", "word")
LOG_COLUMNS = ("iteration", "lr", "train_loss", "val_loss", "val_acc")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    weight_decay: float = 5e-4
    max_iterations: int = 450
    plateau_patience: int = 5
    lr_factor: float = 0.1
    lr_floor: float = 1e-6
    val_interval: int = 200
    seed: int = 0
    train_source: str = "both"
    train_level: str = "character"
    arch: str = "dual"
    fusion: str = "conditional"
    hidden: int = 512

    def validate(self):
        for name in ("learning_rate", "batch_size", "max_iterations", "plateau_patience",
                     "val_interval", "hidden", "lr_floor"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if not 0 <= self.momentum < 1:
            raise InputError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise InputError("weight_decay must be >= 0")
        if not 0 < self.lr_factor < 1:
            raise InputError("lr_factor must be in (0, 1)")
        if self.train_source not in TRAIN_SOURCES:
            raise InputError(f"train_source must be one of {TRAIN_SOURCES}")
        if self.train_level not in LEVELS:
            raise InputError(f"train_level must be one of {LEVELS}")
        if self.arch not in ARCHS:
            raise InputError(f"arch must be one of {ARCHS}")
        if self.fusion not in FUSIONS:
            raise InputError(f"fusion must be one of {FUSIONS}")
        return self

    def model_config(self, num_classes):
        return ModelConfig(arch=self.arch, fusion=self.fusion, num_classes=num_classes,
                           hidden=self.hidden)


def _coerce(kind, value):
    if kind is int:
        f = float(value)
        if not f.is_integer():
            raise ValueError(value)
        return int(f)
    return kind(value)


def parse_config(text, base=None) -> TrainConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(type(getattr(TrainConfig, key)), value)
        except ValueError:
            raise InputError(f"config line {lineno}: bad value {value!r} for {key}") from None
    cfg = dataclasses.replace(base or TrainConfig(), **values)
    return cfg.validate()


# ------------------------------------------------------------------ optimizer

class OptimizerState:
    """Zero-initialized velocity per parameter name."""

    def __init__(self, params):
        self.velocity = {k: np.zeros_like(p.data) for k, p in params.items()}


def sgd_momentum_step(params: Dict[str, ad.Tensor], state: OptimizerState, cfg, lr=None):
    """g' = g + wd*w; v = momentum*v + g'; w -= lr*v; then clear gradients."""
    lr = cfg.learning_rate if lr is None else lr
    for name, p in params.items():
        if p.grad is None:
            raise ConsistencyError(f"parameter {name} has no gradient")
    for name, p in params.items():
        g = p.grad
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.data
        v = state.velocity[name]
        v *= cfg.momentum
        v += g
        p.data -= (lr * v).astype(p.data.dtype, copy=False)
        p.grad = np.zeros_like(p.data)


def lr_plateau_schedule(val_errors, cfg) -> float:
    """Learning rate after a history of validation errors.

    Every ``plateau_patience`` consecutive evaluations without a new best
    multiply the rate by ``lr_factor``, never below ``lr_floor``.
    """
    lr = cfg.learning_rate
    best, stale = math.inf, 0
    for e in val_errors:
        if e < best:
            best, stale = e, 0
        else:
            stale += 1
        if stale >= cfg.plateau_patience:
            lr = max(lr * cfg.lr_factor, cfg.lr_floor)
            stale = 0
    return lr


# ------------------------------------------------------------------ loop

@dataclass
class TrainResult:
    model: ScriptNet
    losses: list
    log: list
    initial_loss: float


def batch_loss(model, items):
    batch = make_batch(items)
    loss, logits = model.loss(batch)
    return loss, logits, batch


def validate(model, items, batch_size=32):
    """Mean loss and accuracy in inference mode."""
    if not items:
        return float("nan"), float("nan")
    model.eval()
    total, correct = 0.0, 0
    for k in range(0, len(items), batch_size):
        chunk = items[k:k + batch_size]
        loss, logits, batch = batch_loss(model, chunk)
        total += loss.item() * len(chunk)
        correct += int((logits.data.argmax(axis=1) == batch.labels).sum())
    model.train()
    return total / len(items), correct / len(items)


def train(train_items, val_items, cfg: TrainConfig, num_classes, log_path=None, progress=None):
    """Train a fresh model on prepared samples.

    ``train_items`` / ``val_items`` are :class:`~sidnet.pipeline.Prepared`.
    Sampling is without replacement inside each epoch, driven by one
    generator seeded from ``cfg.seed`` (which also seeds initialization).
    """
    cfg.validate()
    pool = filter_source(train_items, cfg.train_source)
    if not pool:
        raise InputError(f"no training samples for source {cfg.train_source!r}")
    rng = np.random.default_rng(cfg.seed)
    model = ScriptNet(cfg.model_config(num_classes), rng).train()
    params = model.named_parameters()
    opt = OptimizerState(params)
    order, cursor = rng.permutation(len(pool)), 0
    lr, val_errors, losses, log = cfg.learning_rate, [], [], []
    window = []
    for it in range(1, cfg.max_iterations + 1):
        idx = []
        while len(idx) < min(cfg.batch_size, len(pool)):
            if cursor == len(order):
                order, cursor = rng.permutation(len(pool)), 0
            idx.append(order[cursor])
            cursor += 1
        loss, _, _ = batch_loss(model, [pool[i] for i in idx])
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"loss became {value} at iteration {it} (lr={lr:g})")
        ad.backward(loss)
        sgd_momentum_step(params, opt, cfg, lr=lr)
        losses.append(value)
        window.append(value)
        if progress is not None:
            progress(it, value)
        if it % cfg.val_interval == 0 or it == cfg.max_iterations:
            val_loss, val_acc = validate(model, val_items, cfg.batch_size)
            if np.isfinite(val_acc):
                val_errors.append(1.0 - val_acc)
            log.append({"iteration": it, "lr": lr, "train_loss": float(np.mean(window)),
                        "val_loss": val_loss, "val_acc": val_acc})
            window = []
            lr = lr_plateau_schedule(val_errors, cfg)
    if log_path is not None:
        write_log(log_path, log)
    return TrainResult(model.eval(), losses, log, losses[0])


def write_log(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([r["iteration"], f"{r['lr']:.8g}", f"{r['train_loss']:.6f}",
                        f"{r['val_loss']:.6f}", f"{r['val_acc']:.6f}"])
