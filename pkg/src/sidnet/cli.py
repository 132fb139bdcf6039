"""Command-line entry point: ``sidnet <command> ...``.

Results go to stdout as JSON; diagnostics go to stderr. Exit codes: 0 ok,
1 usage error, 2 data/format error, 3 numeric failure.
"""
import argparse
import json
import os
import sys

import numpy as np

from .errors import (ConsistencyError, DivergenceError, FormatError, InputError,
                     ManifestError, SidnetError)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

PROTOCOL_FLAGS = {"within": "within_modality", "cross": "cross_modality"}
SOURCE_FLAGS = {"both": "both", "online": "online_only", "offline": "offline_only"}
# aspect ratio above which `predict --level auto` treats an input as a word
WORD_ASPECT = 1.5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=False) + "\n")
    sys.stdout.flush()


def _say(msg):
    print(msg, file=sys.stderr, flush=True)


def _read(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None


def _write(path, data):
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc.strerror}") from None


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


# ------------------------------------------------------------------ commands

def cmd_synth(args):
    from .dataio import DEFAULT_SCRIPTS, SynthConfig, synth_dataset
    if args.scripts > len(DEFAULT_SCRIPTS):
        raise UsageError(f"--scripts must be at most {len(DEFAULT_SCRIPTS)}")
    cfg = SynthConfig(seed=args.seed, num_scripts=args.scripts, chars_per_script=args.chars,
                      samples_per_char=args.samples, words_per_script=args.words)
    try:
        path = synth_dataset(cfg, args.out)
    except OSError as exc:
        raise FormatError(f"cannot write corpus to {args.out}: {exc.strerror}") from None
    count = args.scripts * (args.chars * args.samples + args.words)
    _emit({"manifest": path, "samples": count})
    return EXIT_OK


def cmd_convert(args):
    from .convert import image_to_trajectory, rasterize_trajectory
    from .dataio import parse_pgm, parse_trajectory_file, write_pgm, write_trajectory_file
    data = _read(args.input)
    if args.direction == "on2off":
        traj = parse_trajectory_file(data).validate()
        out = write_pgm(rasterize_trajectory(traj, thickness_radius=args.radius))
    else:
        out = write_trajectory_file(image_to_trajectory(parse_pgm(data)))
    _write(args.out, out)
    _emit({"input": args.input, "output": args.out, "direction": args.direction})
    return EXIT_OK


def _load_manifest(path):
    from .dataio import LabelRegistry, load_manifest
    if not os.path.isfile(path):
        raise FormatError(f"manifest not found: {path}")
    registry = LabelRegistry()
    return registry, load_manifest(path, registry)


def cmd_train(args):
    import dataclasses

    from .checkpoint import save_model
    from .experiment import prepare_all, split_descriptors
    from .train import TrainConfig, parse_config, train

    cfg = TrainConfig()
    if args.config:
        cfg = parse_config(_read(args.config).decode("utf-8"), cfg)
    overrides = {}
    if args.train_source:
        overrides["train_source"] = SOURCE_FLAGS[args.train_source]
    for key in ("level", "fusion", "arch", "seed", "max_iterations"):
        value = getattr(args, key)
        if value is not None:
            overrides["train_level" if key == "level" else key] = value
    cfg = dataclasses.replace(cfg, **overrides).validate()

    registry, descs = _load_manifest(args.manifest)
    split = split_descriptors(descs, registry, cfg.train_level, args.split_seed, args.fold)
    _say(f"preparing {len(split.train)} train / {len(split.val)} val {cfg.train_level} samples")
    train_items = prepare_all(split.train, registry, cfg.train_level)
    val_items = prepare_all(split.val, registry, cfg.train_level)

    log_path = args.log or args.out + ".log.csv"
    every = max(1, cfg.max_iterations // 20)

    def progress(it, loss):
        if args.verbose and (it % every == 0 or it == 1):
            _say(f"iteration {it}/{cfg.max_iterations} loss {loss:.4f}")

    # overflow on the way to a non-finite loss is reported once, as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        result = train(train_items, val_items, cfg, len(registry), log_path=log_path,
                       progress=progress)
    try:
        save_model(args.out, result.model, registry)
    except OSError as exc:
        raise FormatError(f"cannot write checkpoint {args.out}: {exc.strerror}") from None
    last = result.log[-1] if result.log else {}
    _emit({"checkpoint": args.out, "log": log_path, "iterations": len(result.losses),
           "initial_loss": result.initial_loss, "final_loss": result.losses[-1],
           "val_acc": last.get("val_acc"), "lr": last.get("lr"),
           "arch": cfg.arch, "fusion": cfg.fusion, "train_source": cfg.train_source,
           "train_level": cfg.train_level, "seed": cfg.seed})
    return EXIT_OK


def cmd_eval(args):
    from .checkpoint import load_model
    from .evaluate import evaluate
    from .experiment import split_descriptors

    model, registry = load_model(args.ckpt)
    ck_reg, descs = _load_manifest(args.manifest)
    if ck_reg != registry:
        raise InputError("manifest label registry differs from the checkpoint's")
    if args.split == "all":
        rows = [d for d in descs if d.level == args.level]
    else:
        rows = split_descriptors(descs, registry, args.level, args.split_seed, args.fold).part(args.split)
    protocol = PROTOCOL_FLAGS[args.protocol]
    report = evaluate(model, registry, rows, protocol, args.level)
    report.metadata.update({"checkpoint": args.ckpt, "split": args.split,
                            "split_seed": args.split_seed, "fold": args.fold})
    if args.report:
        _write(args.report, report.to_json().encode("utf-8"))
    _emit({"accuracy": report.accuracy, "accuracy_by_origin": report.accuracy_by_origin,
           "count": report.count, "protocol": protocol, "level": args.level,
           "report": args.report})
    return EXIT_OK


def _perturb_hook(scale):
    def hook(grads):
        return {k: g * (1.0 + scale) + scale for k, g in grads.items()}
    return hook


def cmd_gradcheck(args):
    from .gradsuite import SCOPES, run_all
    scopes = SCOPES if args.scope == "all" else (args.scope,)
    hook = _perturb_hook(args.perturb) if args.perturb else None
    failed = []
    for res in run_all(args.tol, args.trials, args.seed, scopes, grad_hook=hook):
        _emit({"scope": res.scope, "max_relative_error": res.max_relative_error,
               "passed": bool(res.passed), "checked": res.checked,
               "skipped_kinks": res.skipped_kinks, "seconds": round(res.seconds, 3),
               "per_case": res.per_case})
        if not res.passed:
            failed.append(res.scope)
    if failed:
        _say(f"gradient check failed at tolerance {args.tol:g}: {', '.join(failed)}")
        return EXIT_NUMERIC
    return EXIT_OK


def _input_level(args, sample):
    if args.level != "auto":
        return args.level
    if sample.offline is not None:
        h, w = sample.offline.pixels.shape
    else:
        pts = sample.online.validate().points()
        w, h = np.ptp(pts, axis=0) + 1.0
    return "word" if w > WORD_ASPECT * h else "character"


def cmd_predict(args):
    from .checkpoint import load_model
    from .dataio import parse_pgm, parse_trajectory_file
    from .evaluate import predict
    from .pipeline import prepare_sample
    from .types import ModalityTag, Sample

    model, registry = load_model(args.ckpt)
    data = _read(args.input)
    if args.modality == "online":
        sample = Sample(args.input, "", "", ModalityTag.of("online"),
                        online=parse_trajectory_file(data).validate())
    else:
        sample = Sample(args.input, "", "", ModalityTag.of("offline"), offline=parse_pgm(data))
    level = _input_level(args, sample)
    probs = predict(model, [prepare_sample(sample, level=level)], batch_size=1)[0]
    probs = probs.astype(np.float64)
    _emit({"label": registry.name(int(probs.argmax())), "labels": list(registry.names),
           "probabilities": [float(p) for p in probs], "modality": args.modality,
           "level": level})
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser():
    p = _Parser(prog="sidnet", description="Multi-modal handwritten script identification.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("synth", help="generate the synthetic paired corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=_nonneg_int, default=0)
    s.add_argument("--scripts", type=_positive_int, default=7)
    s.add_argument("--chars", type=_positive_int, default=20, help="characters per script")
    s.add_argument("--samples", type=_positive_int, default=60, help="samples per character")
    s.add_argument("--words", type=_nonneg_int, default=2000, help="words per script")
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("convert", help="convert one sample between modalities")
    c.add_argument("--input", required=True)
    c.add_argument("--direction", required=True, choices=("on2off", "off2on"))
    c.add_argument("--out", required=True)
    c.add_argument("--radius", type=_nonneg_int, default=1, help="pen radius for on2off")
    c.set_defaults(func=cmd_convert)

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    t.add_argument("--manifest", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--log", help="log CSV path (default: <out>.log.csv)")
    t.add_argument("--train-source", choices=tuple(SOURCE_FLAGS))
    t.add_argument("--level", choices=("character", "word"))
    t.add_argument("--fusion", choices=("conditional", "sum", "concat", "product"))
    t.add_argument("--arch", choices=("dual", "online", "offline"))
    t.add_argument("--seed", type=_nonneg_int)
    t.add_argument("--max-iterations", type=_positive_int)
    t.add_argument("--split-seed", type=_nonneg_int, default=0)
    t.add_argument("--fold", type=_nonneg_int, default=0)
    t.add_argument("--verbose", action="store_true", help="progress on stderr")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--protocol", choices=tuple(PROTOCOL_FLAGS), default="within")
    e.add_argument("--level", choices=("character", "word"), default="character")
    e.add_argument("--report")
    e.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    e.add_argument("--split-seed", type=_nonneg_int, default=0)
    e.add_argument("--fold", type=_nonneg_int, default=0)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    g.add_argument("--scope", choices=("all", "core", "lstm", "streams", "fusion"), default="all")
    g.add_argument("--tol", type=_positive_float, default=1e-5)
    g.add_argument("--trials", type=_positive_int, default=20)
    g.add_argument("--seed", type=_nonneg_int, default=0)
    # failure injection for tests: distort every analytic gradient
    g.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    r = sub.add_parser("predict", help="classify a single sample file")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--input", required=True)
    r.add_argument("--modality", required=True, choices=("online", "offline"))
    r.add_argument("--level", choices=("auto", "character", "word"), default="auto")
    r.set_defaults(func=cmd_predict)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _say(parser.format_usage().rstrip())
        _say(str(exc))
        return EXIT_USAGE
    except (DivergenceError, ConsistencyError) as exc:
        _say(f"sidnet: numeric failure: {exc}")
        return EXIT_NUMERIC
    except (FormatError, ManifestError, InputError) as exc:
        _say(f"sidnet: {exc}")
        return EXIT_DATA
    except SidnetError as exc:
        _say(f"sidnet: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
