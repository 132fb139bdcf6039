"""Compiled vs pure-numpy kernels on training-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--json]

Each case runs the same call through both backends, checks the outputs
agree, and reports the best-of-N wall time per call.
"""
import argparse
import json
import timeit

import numpy as np

from sidnet import _kernels
from sidnet.convert import rasterize_trajectory
from sidnet.dataio.synth import SynthConfig, synth_samples


def _cases():
    rng = np.random.default_rng(0)
    # first offline block at batch 32, a 32x32 character crop
    x1 = rng.normal(size=(32, 32, 32, 64)).astype(np.float32)
    # a deep block of the online stream: [B, N, 1, C] pooled 2x1
    x2 = rng.normal(size=(32, 64, 1, 256)).astype(np.float32)
    word = next(t for *_, lvl, _, t in synth_samples(SynthConfig(seed=1, chars_per_script=1,
                                                                samples_per_char=1, words_per_script=1))
                if lvl == "word")
    img = (rasterize_trajectory(word).pixels > 0.5).astype(np.uint8)

    def pool(x, ph, pw):
        def fwd(k):
            return k.maxpool_forward(x, ph, pw)

        def bwd(k):
            out, idx = k.maxpool_forward(x, ph, pw)
            return k.maxpool_backward(out, idx, x.shape[1], x.shape[2])
        return fwd, bwd

    f1, b1 = pool(x1, 2, 2)
    f2, b2 = pool(x2, 2, 1)
    return [
        ("maxpool fwd 32x32x32x64 / 2x2", f1),
        ("maxpool fwd+bwd 32x32x32x64 / 2x2", b1),
        ("maxpool fwd 32x64x1x256 / 2x1", f2),
        ("maxpool fwd+bwd 32x64x1x256 / 2x1", b2),
        (f"zhang-suen word image {img.shape[0]}x{img.shape[1]}", lambda k: k.zhang_suen(img)),
    ]


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="one JSON object per case")
    args = ap.parse_args(argv)
    if _kernels.compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rows = []
    for name, fn in _cases():
        if not _same(fn(_kernels.python), fn(_kernels.compiled)):
            raise SystemExit(f"backends disagree on {name}")
        t = {}
        for label, mod in (("python", _kernels.python), ("cython", _kernels.compiled)):
            timer = timeit.Timer(lambda: fn(mod))
            n, _ = timer.autorange()
            t[label] = min(timer.repeat(args.repeat, n)) / n
        rows.append({"case": name, "python_ms": t["python"] * 1e3, "cython_ms": t["cython"] * 1e3,
                     "speedup": t["python"] / t["cython"]})
    if args.json:
        for r in rows:
            print(json.dumps(r))
        return
    width = max(len(r["case"]) for r in rows)
    print(f"{'case':<{width}}  {'python ms':>10}  {'cython ms':>10}  {'speedup':>7}")
    for r in rows:
        print(f"{r['case']:<{width}}  {r['python_ms']:>10.3f}  {r['cython_ms']:>10.3f}  {r['speedup']:>6.1f}x")


if __name__ == "__main__":
    main()
