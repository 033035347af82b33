"""Functional wrappers over the primitive registry."""

from __future__ import annotations

import numpy as np

from .tensor import apply_primitive


def matmul(a, b):
    return apply_primitive("matmul", [a, b])


def add(a, b):
    return apply_primitive("add", [a, b])


def sub(a, b):
    return apply_primitive("sub", [a, b])


def mul(a, b):
    return apply_primitive("mul", [a, b])


def div(a, b):
    return apply_primitive("div", [a, b])


def neg(x):
    return apply_primitive("neg", [x])


def concat(xs, axis=0):
    return apply_primitive("concat", list(xs), axis=axis)


def stack_rows(xs):
    """Stack 1-D tensors of equal length into a 2-D tensor."""
    return concat([reshape(x, (1, -1)) for x in xs], axis=0)


def take(x, indices, axis=0):
    return apply_primitive("take", [x], indices=np.asarray(indices, dtype=np.intp), axis=axis)


def reshape(x, shape):
    return apply_primitive("reshape", [x], shape=tuple(shape))


def transpose(x, axes=None):
    return apply_primitive("transpose", [x], axes=axes)


def sum(x, axis=None, keepdims=False):  # noqa: A001
    return apply_primitive("sum", [x], axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    return apply_primitive("mean", [x], axis=axis, keepdims=keepdims)


def exp(x):
    return apply_primitive("exp", [x])


def log(x):
    return apply_primitive("log", [x])


def sqrt(x):
    return apply_primitive("sqrt", [x])


def sigmoid(x):
    return apply_primitive("sigmoid", [x])


def tanh(x):
    return apply_primitive("tanh", [x])


def relu(x):
    return apply_primitive("relu", [x])


def gelu(x):
    return apply_primitive("gelu", [x])


def mish(x):
    return apply_primitive("mish", [x])


def softplus(x):
    return apply_primitive("softplus", [x])


def softmax(x):
    return apply_primitive("softmax", [x])


def log_softmax(x):
    return apply_primitive("log_softmax", [x])


def clamp(x, min=-np.inf, max=np.inf):  # noqa: A002
    return apply_primitive("clamp", [x], min=min, max=max)


def l2_normalize(x):
    return apply_primitive("l2_normalize", [x])


def cosine_similarity(a, b):
    return apply_primitive("cosine_similarity", [a, b])


def conv1d(x, weight, bias, lengths=None):
    return apply_primitive("conv1d", [x, weight, bias], lengths=lengths)


def lstm_scan(x, w_in, w_hid, bias, lengths=None, reverse=False):
    return apply_primitive("lstm_scan", [x, w_in, w_hid, bias], lengths=lengths, reverse=reverse)


def segment_sum(x, segment_ids, num_segments):
    return apply_primitive("segment_sum", [x], segment_ids=segment_ids, num_segments=num_segments)


def segment_softmax(x, segment_ids, num_segments):
    return apply_primitive(
        "segment_softmax", [x], segment_ids=segment_ids, num_segments=num_segments
    )


ACTIVATIONS = {
    "identity": lambda x: x,
    "relu": relu,
    "tanh": tanh,
    "gelu": gelu,
    "mish": mish,
    "sigmoid": sigmoid,
}

