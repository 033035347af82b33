"""Trainable layers built on the tensor core."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor, constant


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def parameter(value, name=None):
    return Tensor(value, requires_grad=True, name=name)


class Module:
    """Minimal parameter container: walks attributes for Tensors and sub-modules."""

    def named_parameters(self, prefix=""):
        for attr, value in vars(self).items():
            yield from _walk(value, f"{prefix}{attr}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def _walk(value, path):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=path + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{path}.{i}")
    elif isinstance(value, dict):
        for key, item in value.items():
            yield from _walk(item, f"{path}.{key}")


class DenseLayer(Module):
    """``activation(x @ weight + bias)`` with weight [in_dim x out_dim]."""

    def __init__(self, in_dim, out_dim, activation="identity", rng=None, bias=True):
        if activation not in ops.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = np.random.default_rng() if rng is None else rng
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.weight = parameter(glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim))
        self.bias = parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x):
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"dense: input dim {x.shape[-1]} != in_dim {self.in_dim}")
        out = ops.matmul(x, self.weight)
        if self.bias is not None:
            out = ops.add(out, self.bias)
        return ops.ACTIVATIONS[self.activation](out)


class Conv1DBank(Module):
    """Parallel same-padded time convolutions whose outputs are concatenated.

    ``branches`` is a list of ``(width, filters)``; every branch sees all
    input channels, so the output dim is the total filter count.
    """

    def __init__(self, in_dim, branches=((3, 64), (5, 64)), rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.in_dim = in_dim
        self.branches = [tuple(b) for b in branches]
        self.weights = []
        self.biases = []
        for width, filters in self.branches:
            if width % 2 == 0:
                raise ValueError(f"kernel widths must be odd, got {width}")
            self.weights.append(
                parameter(glorot_uniform(rng, (width, in_dim, filters), width * in_dim, width * filters))
            )
            self.biases.append(parameter(np.zeros(filters)))

    @property
    def out_dim(self):
        return sum(f for _, f in self.branches)

    def __call__(self, x, lengths=None):
        if x.shape[0] == 0:
            raise ShapeError("conv1d: empty sequence")
        outs = [ops.conv1d(x, w, b, lengths=lengths) for w, b in zip(self.weights, self.biases)]
        return outs[0] if len(outs) == 1 else ops.concat(outs, axis=1)


class LSTMStack(Module):
    """Stacked (bi)directional LSTM over packed sequences.

    Gate blocks are ordered input, forget, cell, output; forget biases start
    at 1.  Layer ``l > 0`` reads the concatenated direction outputs of layer
    ``l - 1``.
    """

    def __init__(self, in_dim, hidden, num_layers=1, bidirectional=True, rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.in_dim = in_dim
        self.hidden = hidden
        self.num_layers = num_layers
        self.bidirectional = bidirectional
        self.layers = []
        dirs = 2 if bidirectional else 1
        layer_in = in_dim
        for _ in range(num_layers):
            cells = []
            for _ in range(dirs):
                w_in = np.concatenate(
                    [glorot_uniform(rng, (layer_in, hidden), layer_in, hidden) for _ in range(4)], axis=1
                )
                w_hid = np.concatenate(
                    [glorot_uniform(rng, (hidden, hidden), hidden, hidden) for _ in range(4)], axis=1
                )
                bias = np.zeros(4 * hidden)
                bias[hidden : 2 * hidden] = 1.0
                cells.append({"w_in": parameter(w_in), "w_hid": parameter(w_hid), "bias": parameter(bias)})
            self.layers.append(cells)
            layer_in = hidden * dirs

    @property
    def out_dim(self):
        return self.hidden * (2 if self.bidirectional else 1)

    def __call__(self, x, lengths=None):
        """Return ``(H, last)``: packed outputs [N x out_dim] and per-sequence
        final states [B x out_dim] (forward state at the last step, backward
        state at the first step)."""
        n = x.shape[0]
        lengths = np.array([n] if lengths is None else lengths, dtype=np.intp)
        ends = np.cumsum(lengths) - 1
        starts = ends - lengths + 1
        h = x
        for cells in self.layers:
            outs = [
                ops.lstm_scan(h, c["w_in"], c["w_hid"], c["bias"], lengths=lengths, reverse=(d == 1))
                for d, c in enumerate(cells)
            ]
            h = outs[0] if len(outs) == 1 else ops.concat(outs, axis=1)
        finals = [ops.take(outs[0], ends)]
        if self.bidirectional:
            finals.append(ops.take(outs[1], starts))
        last = finals[0] if len(finals) == 1 else ops.concat(finals, axis=1)
        return h, last


@dataclass
class DropoutSpec:
    rate: float = 0.1
    train: bool = True

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")


def dropout_apply(spec, x, rng=None):
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not spec.train or spec.rate == 0.0:
        return x
    keep = rng.random(x.shape) >= spec.rate
    return ops.mul(x, constant(keep / (1.0 - spec.rate)))


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under ``logits``."""
    labels = np.asarray(labels, dtype=np.intp)
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for batch {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"cross_entropy: labels must lie in [0, {classes}), got {labels.tolist()}")
    logp = ops.reshape(ops.log_softmax(logits), (-1,))
    picked = ops.take(logp, np.arange(batch) * classes + labels)
    return ops.mul(ops.mean(picked), -1.0)
