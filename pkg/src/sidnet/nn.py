"""Parameter containers and layers on top of :mod:`sidnet.autodiff`."""
import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, ConvSpec, Tensor


def xavier_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    """Tree of named parameters and buffers.

    Subclasses assign child modules, :class:`Tensor` parameters and numpy
    buffers as attributes; traversal follows attribute insertion order, so
    names are stable.
    """

    training = True

    def _children(self):
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value

    def named_parameters(self, prefix=""):
        out = {}
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[prefix + key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(prefix + key + "."))
        return out

    def named_buffers(self, prefix=""):
        out = {}
        for key, value in vars(self).items():
            if isinstance(value, np.ndarray):
                out[prefix + key] = value
            elif isinstance(value, Module):
                out.update(value.named_buffers(prefix + key + "."))
        return out

    def state_dict(self):
        state = {k: p.data for k, p in self.named_parameters().items()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state):
        params, buffers = self.named_parameters(), self.named_buffers()
        expected = set(params) | set(buffers)
        missing = expected - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)}")
        for k, p in params.items():
            if state[k].shape != p.data.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.data.shape}")
            p.data[...] = state[k]
        for k, b in buffers.items():
            b[...] = state[k]

    def train(self, flag=True):
        self.training = flag
        for _, child in self._children():
            child.train(flag)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.zero_grad()

    def astype(self, dtype):
        """Convert parameters and buffers in place (used for float64 grad checks)."""
        for key, value in list(vars(self).items()):
            if isinstance(value, Tensor) and value.requires_grad:
                value.data = value.data.astype(dtype)
                value.grad = np.zeros_like(value.data)
            elif isinstance(value, np.ndarray) and np.issubdtype(value.dtype, np.floating):
                setattr(self, key, value.astype(dtype))
            elif isinstance(value, Module):
                value.astype(dtype)
        return self


class Dense(Module):
    def __init__(self, in_features, out_features, rng, zero=False):
        shape = (in_features, out_features)
        w = np.zeros(shape, np.float32) if zero else xavier_uniform(rng, shape, in_features, out_features)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, np.float32), requires_grad=True)

    def __call__(self, x):
        return ad.matmul_dense(x, self.weight, self.bias)


class Conv(Module):
    """Convolution layer; ``kernel`` is (kh, kw). Layers feeding batch norm
    go without bias since the norm's shift absorbs it."""

    def __init__(self, in_channels, num_filters, kernel, rng, padding="same", bias=True):
        kh, kw = kernel
        shape = (num_filters, kh, kw, in_channels)
        w = xavier_uniform(rng, shape, kh * kw * in_channels, kh * kw * num_filters)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(num_filters, np.float32), requires_grad=True) if bias else None
        self.padding = padding

    @property
    def spec(self):
        return ConvSpec(self.weight, self.bias, self.padding)

    def __call__(self, x):
        return ad.conv2d(x, self.spec)


class BatchNorm(Module):
    def __init__(self, channels):
        self._state = BatchNormState(channels)
        self.gamma = self._state.gamma
        self.beta = self._state.beta
        self.running_mean = self._state.running_mean
        self.running_var = self._state.running_var

    def astype(self, dtype):
        super().astype(dtype)
        s = self._state
        s.running_mean, s.running_var = self.running_mean, self.running_var
        return self

    def __call__(self, x):
        return ad.batchnorm(x, self._state, "train" if self.training else "infer")
