"""Gradient-check suites over every differentiable piece, at toy sizes.

Each case builds a fresh random float64 instantiation and compares backprop
with central differences. ``run_scope`` repeats every case ``trials`` times
with independent draws.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, ConvSpec, Tensor, grad_check
from .fusion import GatedFusion, classify_head, conditional_fuse
from .nn import Dense
from .recurrent import LSTM, LSTMLayer, LSTMState, lstm_cell_step, lstm_layer
from .streams import OfflineStream, OnlineStream

SCOPES = ("core", "lstm", "streams", "fusion")
F64 = np.float64


def _t(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0, scale, size=shape), requires_grad=True)


def _project(rng, out):
    """Random fixed weights so the loss depends on every output entry."""
    return Tensor(rng.normal(size=out.shape))


def _loss_of(out, w):
    return ad.sum_all(ad.mul(out, w))


# each case: rng -> (build_loss, params)

def case_elementwise(rng):
    a, b = _t(rng, 3, 4), _t(rng, 4)
    w = Tensor(rng.normal(size=(3, 4)))
    return (lambda: _loss_of(ad.add(ad.mul(a, b), ad.sub(a, b)), w)), {"a": a, "b": b}


def case_dense(rng):
    x, W, b = _t(rng, 3, 4), _t(rng, 4, 3), _t(rng, 3)
    w = Tensor(rng.normal(size=(3, 3)))
    return (lambda: _loss_of(ad.matmul_dense(x, W, b), w)), {"x": x, "W": W, "b": b}


def case_activations(rng):
    x = _t(rng, 2, 5)
    w = Tensor(rng.normal(size=(2, 5)))

    def build():
        return _loss_of(ad.add(ad.add(ad.sigmoid(x), ad.tanh(x)), ad.relu(x)), w)
    return build, {"x": x}


def case_conv2d(rng):
    x = _t(rng, 2, 5, 6, 2)
    mode = ("same", "valid", ("valid", "same"))[rng.integers(3)]
    spec = ConvSpec(_t(rng, 3, 2, 2, 2, scale=0.5), _t(rng, 3, scale=0.1), mode)
    out = ad.conv2d(x, spec)
    w = _project(rng, out)
    return (lambda: _loss_of(ad.conv2d(x, spec), w)), {"x": x, "W": spec.weights, "b": spec.bias}


def case_conv1d(rng):
    d = _t(rng, 7, 1, 2)
    spec = ConvSpec(_t(rng, 3, 5, 1, 2, scale=0.5), _t(rng, 3, scale=0.1), "same")
    w = Tensor(rng.normal(size=(7, 1, 3)))
    return (lambda: _loss_of(ad.conv1d(d, spec), w)), {"d": d, "W": spec.weights, "b": spec.bias}


def case_pooling(rng):
    x = _t(rng, 2, 4, 6, 3)
    mask = rng.random((2, 2, 3)) < 0.8
    mask[:, 0, 0] = True
    w1 = Tensor(rng.normal(size=(2, 2, 3, 3)))
    w2 = Tensor(rng.normal(size=(2, 2, 3, 6)))

    def build():
        p = ad.maxpool(x, (2, 2))
        g = ad.global_maxpool(p, mask)
        return ad.add(_loss_of(p, w1), _loss_of(ad.broadcast_concat_global(p, g), w2))
    return build, {"x": x}


def case_sequence_ops(rng):
    x = _t(rng, 2, 1, 4, 3)
    a, b = _t(rng, 2, 2), _t(rng, 2, 3)
    w = Tensor(rng.normal(size=(2, 4, 3)))
    w2 = Tensor(rng.normal(size=(2, 5)))

    def build():
        parts = ad.split(ad.concat([a, b], axis=1), [1, 4], axis=1)
        z = ad.concat(parts[::-1], axis=1)
        return ad.add(_loss_of(ad.map_to_sequence(x), w), _loss_of(ad.reshape(z, (2, 5)), w2))
    return build, {"x": x, "a": a, "b": b}


def case_batchnorm(rng):
    x = _t(rng, 3, 4, 2, 3)
    st = BatchNormState(3, dtype=F64)
    st.gamma.data[:] = rng.normal(1, 0.2, 3)
    st.beta.data[:] = rng.normal(0, 0.2, 3)
    w = Tensor(rng.normal(size=(3, 4, 2, 3)))
    mode = ("train", "infer")[rng.integers(2)]
    return (lambda: _loss_of(ad.batchnorm(x, st, mode), w)), {"x": x, "gamma": st.gamma, "beta": st.beta}


def case_softmax_ce(rng):
    logits = _t(rng, 4, 7, scale=2.0)
    labels = rng.integers(0, 7, size=4)
    return (lambda: ad.softmax_cross_entropy(logits, labels)), {"logits": logits}


def case_lstm_cell(rng):
    layer = LSTMLayer(3, 4, rng).astype(F64)
    x = _t(rng, 2, 3)
    prev = LSTMState(_t(rng, 2, 4, scale=0.5), _t(rng, 2, 4, scale=0.5))
    w = Tensor(rng.normal(size=(2, 4)))

    def build():
        s = lstm_cell_step(x, prev, layer)
        return ad.add(_loss_of(s.h, w), _loss_of(s.c, w))
    params = {"x": x, "h0": prev.h, "c0": prev.c}
    params.update(layer.named_parameters())
    return build, params


def case_lstm_layer(rng):
    layer = LSTMLayer(3, 4, rng).astype(F64)
    x = _t(rng, 3, 5, 3)
    lengths = rng.integers(1, 6, size=3)
    w = Tensor(rng.normal(size=(3, 5, 4)))
    params = {"x": x}
    params.update(layer.named_parameters())
    return (lambda: _loss_of(lstm_layer(x, layer, lengths, "sequence"), w)), params


def case_lstm_stack(rng):
    lstm = LSTM(3, 4, rng).astype(F64)
    x = _t(rng, 2, 4, 3)
    lengths = rng.integers(1, 5, size=2)
    w = Tensor(rng.normal(size=(2, 4)))
    params = {"x": x}
    params.update(lstm.named_parameters())
    return (lambda: _loss_of(lstm(x, lengths), w)), params


def _randomize_state(module, rng, train_bn=True):
    """Random biases (zero ones leave whole regions exactly on ReLU kinks)
    and random running statistics, so either batch-norm mode can be checked."""
    for name, p in module.named_parameters().items():
        if name.endswith("bias") or name.endswith("beta"):
            p.data[...] = rng.normal(0.1, 0.1, p.shape)
    for name, b in module.named_buffers().items():
        if name.endswith("running_mean"):
            b[...] = rng.normal(0.0, 0.2, b.shape)
        elif name.endswith("running_var"):
            b[...] = rng.uniform(0.5, 1.5, b.shape)
    return module.train(train_bn)


def case_online_stream(rng, train_bn=True):
    stream = _randomize_state(OnlineStream(rng, widths=(4, 4, 4, 4, 4, 4)).astype(F64), rng, train_bn)
    d = Tensor(rng.random((3, 16, 1, 2)))
    lengths = np.array([16, 12, 10])
    w = Tensor(rng.normal(size=(3, 8, 4)))
    params = stream.named_parameters()
    return (lambda: _loss_of(stream(d, lengths).data, w)), params


def case_offline_stream(rng, train_bn=True):
    stream = _randomize_state(OfflineStream(rng, widths=(4, 4, 4, 4, 4, 4, 4)).astype(F64), rng, train_bn)
    img = Tensor(rng.random((3, 32, 16, 1)))
    widths = np.array([16, 12, 8])
    w = Tensor(rng.normal(size=(3, 3, 4)))
    params = stream.named_parameters()
    return (lambda: _loss_of(stream(img, widths).data, w)), params


def case_fusion(rng):
    K = 3
    gate = GatedFusion(K, rng).astype(F64)
    gate.gate.bias.data[:] = rng.normal(0, 0.3, K)
    head = Dense(K, 7, rng).astype(F64)
    f_on, f_off = _t(rng, 2, K), _t(rng, 2, K)
    z = Tensor(np.eye(2)[rng.integers(0, 2, size=2)])
    labels = rng.integers(0, 7, size=2)

    def build():
        fused, _ = conditional_fuse(f_on, f_off, z, gate)
        return ad.softmax_cross_entropy(classify_head(fused, head), labels)
    params = {"F_online": f_on, "F_offline": f_off}
    params.update({"gate." + k: v for k, v in gate.named_parameters().items()})
    params.update({"head." + k: v for k, v in head.named_parameters().items()})
    return build, params


SUITES = {
    "core": {
        "elementwise": case_elementwise, "matmul_dense": case_dense,
        "activation": case_activations, "conv2d": case_conv2d, "conv1d": case_conv1d,
        "pooling": case_pooling, "sequence_ops": case_sequence_ops,
        "batchnorm": case_batchnorm, "softmax_cross_entropy": case_softmax_ce,
    },
    "lstm": {"lstm_cell": case_lstm_cell, "lstm_layer": case_lstm_layer, "lstm_stack": case_lstm_stack},
    "streams": {"online_stream": case_online_stream, "offline_stream": case_offline_stream},
    "fusion": {"conditional_fusion": case_fusion},
}
# larger graphs probe a random subset of coordinates per parameter
MAX_ENTRIES = {"online_stream": 6, "offline_stream": 4, "lstm_stack": 12}


@dataclass
class ScopeResult:
    scope: str
    max_relative_error: float
    passed: bool
    per_case: dict = field(default_factory=dict)
    seconds: float = 0.0
    checked: int = 0
    skipped_kinks: int = 0


def run_scope(scope, tolerance=1e-5, trials=20, seed=0, grad_hook=None):
    if scope not in SUITES:
        raise KeyError(scope)
    t0 = time.perf_counter()
    root = np.random.SeedSequence([seed, SCOPES.index(scope)])
    per_case, checked, skipped = {}, 0, 0
    for name, case in SUITES[scope].items():
        worst = 0.0
        for ss in root.spawn(trials):
            rng = np.random.default_rng(ss)
            build, params = case(rng)
            rep = grad_check(build, params, tolerance=tolerance,
                             max_entries=MAX_ENTRIES.get(name), rng=rng, grad_hook=grad_hook)
            checked += rep.checked
            skipped += rep.skipped_kinks
            worst = max(worst, rep.max_relative_error)
        per_case[name] = worst
    err = max(per_case.values())
    return ScopeResult(scope, err, err < tolerance, per_case, time.perf_counter() - t0,
                       checked, skipped)


def run_all(tolerance=1e-5, trials=20, seed=0, scopes=SCOPES, grad_hook=None):
    return [run_scope(s, tolerance, trials, seed, grad_hook) for s in scopes]
