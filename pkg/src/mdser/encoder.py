"""Sequence encoders: time convolution -> Bi-LSTM -> single-query attention."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .nn import Conv1DBank, LSTMStack, Module, glorot_uniform, parameter
from .tensor import ShapeError, constant

SEQUENTIAL = "sequential"
VECTOR = "vector"


@dataclass
class EncoderConfig:
    """Sizes of one sequence encoder.

    Defaults follow the Allosaurus/wav2vec setting (two conv branches of 64
    filters, one Bi-LSTM layer of 128, attention width 256).  ``MFCC_ENCODER``
    is the lighter two-layer variant; its conv widths are not published, so
    3 and 5 are reused.
    """

    conv_widths: tuple = (3, 5)
    conv_filters: int = 64
    lstm_hidden: int = 128
    lstm_layers: int = 1
    attention_dim: int = 256

    def to_dict(self):
        return {
            "conv_widths": list(self.conv_widths),
            "conv_filters": self.conv_filters,
            "lstm_hidden": self.lstm_hidden,
            "lstm_layers": self.lstm_layers,
            "attention_dim": self.attention_dim,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "conv_widths" in data:
            data["conv_widths"] = tuple(data["conv_widths"])
        return cls(**data)


MFCC_ENCODER = EncoderConfig(conv_filters=32, lstm_hidden=64, lstm_layers=2, attention_dim=256)


@dataclass
class FeatureSpec:
    name: str
    kind: str
    dim: int
    encoder: EncoderConfig | None = field(default=None)

    def __post_init__(self):
        if self.kind not in (SEQUENTIAL, VECTOR):
            raise ValueError(f"feature {self.name!r}: kind must be sequential or vector")
        if self.dim < 1:
            raise ValueError(f"feature {self.name!r}: dim must be positive")
        if self.kind == SEQUENTIAL and self.encoder is None:
            self.encoder = EncoderConfig()
        if self.kind == VECTOR and self.encoder is not None:
            raise ValueError(f"vector feature {self.name!r} cannot have an encoder")

    @property
    def output_dim(self):
        return self.encoder.attention_dim if self.kind == SEQUENTIAL else self.dim


def scaled_dot_attention(q, keys, values):
    """``softmax(keys @ q / sqrt(a)) @ values`` for one query of width a."""
    if keys.shape[0] < 1:
        raise ShapeError("attention over an empty sequence")
    if q.shape[-1] != keys.shape[-1]:
        raise ShapeError(f"attention: query {q.shape} vs keys {keys.shape}")
    scale = 1.0 / math.sqrt(keys.shape[-1])
    weights = ops.softmax(ops.mul(ops.matmul(keys, q), scale))
    return ops.matmul(weights, values)


class EncoderStack(Module):
    """Maps a [L x d] feature sequence to a single attention-pooled vector.

    The Bi-LSTM's final states (forward at the last step, backward at the
    first) form the query; every per-step output is a key and a value.
    The dot products are scaled by sqrt(attention_dim).
    """

    def __init__(self, in_dim, config=None, rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.config = config or EncoderConfig()
        cfg = self.config
        self.conv = Conv1DBank(in_dim, [(w, cfg.conv_filters) for w in cfg.conv_widths], rng=rng)
        self.lstm = LSTMStack(self.conv.out_dim, cfg.lstm_hidden, cfg.lstm_layers, rng=rng)
        two_k, a = self.lstm.out_dim, cfg.attention_dim
        self.w_query = parameter(glorot_uniform(rng, (two_k, a), two_k, a))
        self.w_key = parameter(glorot_uniform(rng, (two_k, a), two_k, a))
        self.w_value = parameter(glorot_uniform(rng, (two_k, a), two_k, a))

    @property
    def output_dim(self):
        return self.config.attention_dim

    def encode_batch(self, sequences):
        """Encode a list of [L_b x d] arrays into a [B x a] tensor.

        Sequences are packed back to back; each is processed independently
        (no padding, no masking).
        """
        if not sequences:
            raise ShapeError("encode_batch: no sequences")
        lengths = np.array([len(s) for s in sequences], dtype=np.intp)
        if (lengths < 1).any():
            raise ShapeError("encode_batch: empty sequence")
        x = constant(np.concatenate([np.asarray(s, dtype=np.float64) for s in sequences], axis=0))
        z_conv = self.conv(x, lengths=lengths)
        hidden, last = self.lstm(z_conv, lengths=lengths)
        return self.attend(hidden, last, lengths)

    def attend(self, hidden, last, lengths):
        batch = len(lengths)
        seg = np.repeat(np.arange(batch), lengths)
        q = ops.matmul(last, self.w_query)
        k = ops.matmul(hidden, self.w_key)
        v = ops.matmul(hidden, self.w_value)
        scale = 1.0 / math.sqrt(self.config.attention_dim)
        scores = ops.mul(ops.sum(ops.mul(k, ops.take(q, seg)), axis=1), scale)
        weights = ops.segment_softmax(scores, seg, batch)
        return ops.segment_sum(ops.mul(v, ops.reshape(weights, (-1, 1))), seg, batch)

    def encode_sequence(self, z):
        """Encode one [L x d] sequence into a vector of length a."""
        return ops.reshape(self.encode_batch([z]), (-1,))


def assemble_representation(encoded):
    """Concatenate per-feature embeddings in the given order (last axis)."""
    if not encoded:
        raise ValueError("assemble_representation needs at least one feature")
    if len(encoded) == 1:
        return encoded[0]
    return ops.concat(encoded, axis=-1)
