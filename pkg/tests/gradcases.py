"""Randomized finite-difference cases shared by the unit and acceptance suites.

Each case builder takes a numpy Generator and returns ``(f, x)`` where ``f``
maps a leaf Tensor to a scalar Tensor.  Outputs are contracted with a fixed
random weight so that no coordinate's gradient vanishes by symmetry (a plain
``sum(softmax(x))`` has zero gradient everywhere).

The relative-error metric is per coordinate, so a true gradient of 1e-6 that
arises by cancellation would measure rounding in the central difference
rather than the vjp.  Contraction weights are therefore positive, and the
operands of (multi)linear ops and of the LSTM scan are positive too: every
partial derivative is then a sum of same-signed terms.  Signed inputs are
exercised separately with a norm-wise error in the unit tests.
"""

import numpy as np

from mdser import ops
from mdser.tensor import constant, tensor


def _away(rng, shape, lo=0.1, hi=2.0):
    """Values with |v| in [lo, hi]: keeps kinks (relu, clamp) out of reach."""
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(lo, hi, size=shape)


def _pos(shape, lo=0.2, hi=2.0):
    return lambda rng: rng.uniform(lo, hi, size=shape)


def _weights(rng, shape):
    return constant(rng.uniform(0.5, 1.5, size=shape))


def _unary(op, sampler):
    def build(rng):
        x = tensor(sampler(rng))
        w = _weights(rng, op(x).shape)
        return (lambda t: ops.sum(ops.mul(op(t), w))), x

    return build


def _binary(op, sample_a, sample_b, wrt):
    def build(rng):
        a, b = sample_a(rng), sample_b(rng)
        other = constant(b if wrt == 0 else a)
        x = tensor(a if wrt == 0 else b)
        w = _weights(rng, (op(x, other) if wrt == 0 else op(other, x)).shape)
        if wrt == 0:
            return (lambda t: ops.sum(ops.mul(op(t, other), w))), x
        return (lambda t: ops.sum(ops.mul(op(other, t), w))), x

    return build


def _mat(shape):
    return lambda rng: _away(rng, shape, 0.2, 2.0)


def _conv_case(rng, wrt):
    lengths = [3, 5]
    x = rng.uniform(0.2, 2.0, size=(8, 2))
    w = rng.uniform(0.2, 2.0, size=(3, 2, 4))
    b = rng.uniform(0.2, 2.0, size=4)
    args = [x, w, b]
    leaf = tensor(args[wrt])
    consts = [constant(a) for a in args]
    weight = _weights(rng, (8, 4))

    def f(t):
        ins = list(consts)
        ins[wrt] = t
        return ops.sum(ops.mul(ops.conv1d(ins[0], ins[1], ins[2], lengths=lengths), weight))

    return f, leaf


def _lstm_case(rng, wrt, reverse):
    lengths = [4, 2, 3]
    d, k = 3, 2
    # small positive values keep the gates away from saturation
    args = [
        rng.uniform(0.1, 1.0, size=(9, d)),
        rng.uniform(0.05, 0.5, size=(d, 4 * k)),
        rng.uniform(0.05, 0.5, size=(k, 4 * k)),
        rng.uniform(0.05, 0.5, size=4 * k),
    ]
    leaf = tensor(args[wrt])
    consts = [constant(a) for a in args]
    weight = _weights(rng, (9, k))

    def f(t):
        ins = list(consts)
        ins[wrt] = t
        return ops.sum(ops.mul(ops.lstm_scan(*ins, lengths=lengths, reverse=reverse), weight))

    return f, leaf


def _segment_case(rng, kind):
    seg = np.array([0, 0, 1, 1, 1, 2])
    if kind == "sum":
        x = tensor(rng.normal(size=(6, 3)))
        w = _weights(rng, (3, 3))
        return (lambda t: ops.sum(ops.mul(ops.segment_sum(t, seg, 3), w))), x
    x = tensor(rng.normal(size=6))
    w = _weights(rng, 6)
    return (lambda t: ops.sum(ops.mul(ops.segment_softmax(t, seg, 3), w))), x


def _cos_case(rng, wrt):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
    return _binary(ops.cosine_similarity, lambda r: a, lambda r: b, wrt)(rng)


PRIMITIVE_CASES = {
    "add": _binary(ops.add, _mat((3, 4)), _mat((4,)), 1),
    "add_lhs": _binary(ops.add, _mat((3, 4)), _mat((4,)), 0),
    "sub": _binary(ops.sub, _mat((3, 4)), _mat((3, 1)), 1),
    "mul": _binary(ops.mul, _mat((3, 4)), _mat((3, 4)), 0),
    "div": _binary(ops.div, _mat((3, 4)), lambda r: _away(r, (3, 4), 0.5, 2.0), 1),
    "div_num": _binary(ops.div, _mat((3, 4)), lambda r: _away(r, (3, 4), 0.5, 2.0), 0),
    "matmul": _binary(ops.matmul, _pos((3, 4)), _pos((4, 2)), 0),
    "matmul_rhs": _binary(ops.matmul, _pos((3, 4)), _pos((4, 2)), 1),
    "matmul_vec": _binary(ops.matmul, _pos((4,)), _pos((4, 2)), 0),
    "concat": _unary(lambda t: ops.concat([t, ops.mul(t, 2.0)], axis=1), _mat((3, 2))),
    "slice": _unary(lambda t: t[1:, :2], _mat((3, 4))),
    "take": _unary(lambda t: ops.take(t, [2, 0, 2]), _mat((3, 4))),
    "reshape": _unary(lambda t: ops.reshape(t, (2, 6)), _mat((3, 4))),
    "transpose": _unary(ops.transpose, _mat((3, 4))),
    "sum": _unary(lambda t: ops.sum(t, axis=0), _mat((3, 4))),
    "mean": _unary(lambda t: ops.mean(t, axis=1, keepdims=True), _mat((3, 4))),
    "neg": _unary(ops.neg, _mat((3, 4))),
    "exp": _unary(ops.exp, _mat((3, 4))),
    "log": _unary(ops.log, lambda r: r.uniform(0.2, 3.0, size=(3, 4))),
    "sqrt": _unary(ops.sqrt, lambda r: r.uniform(0.2, 3.0, size=(3, 4))),
    "sigmoid": _unary(ops.sigmoid, _mat((3, 4))),
    "tanh": _unary(ops.tanh, _mat((3, 4))),
    "relu": _unary(ops.relu, lambda r: _away(r, (3, 4))),
    "softplus": _unary(ops.softplus, _mat((3, 4))),
    "gelu": _unary(ops.gelu, _mat((3, 4))),
    "mish": _unary(ops.mish, _pos((3, 4), -0.8, 2.5)),
    "softmax": _unary(ops.softmax, _mat((3, 4))),
    "log_softmax": _unary(ops.log_softmax, _mat((3, 4))),
    "clamp": _unary(lambda t: ops.clamp(t, -1.0, 1.0), lambda r: np.where(r.random((3, 4)) < 0.5, _away(r, (3, 4), 0.05, 0.9), _away(r, (3, 4), 1.1, 2.0))),
    "l2_normalize": _unary(ops.l2_normalize, _mat((3, 4))),
    "cosine_similarity": lambda r: _cos_case(r, 0),
    "cosine_similarity_rhs": lambda r: _cos_case(r, 1),
    "conv1d_x": lambda r: _conv_case(r, 0),
    "conv1d_w": lambda r: _conv_case(r, 1),
    "conv1d_b": lambda r: _conv_case(r, 2),
    "lstm_scan_x": lambda r: _lstm_case(r, 0, False),
    "lstm_scan_w_in": lambda r: _lstm_case(r, 1, True),
    "lstm_scan_w_hid": lambda r: _lstm_case(r, 2, False),
    "lstm_scan_bias": lambda r: _lstm_case(r, 3, True),
    "segment_sum": lambda r: _segment_case(r, "sum"),
    "segment_softmax": lambda r: _segment_case(r, "softmax"),
}


# ---------------------------------------------------------------------------
# layers and losses
# ---------------------------------------------------------------------------


def param_case(build_loss, param):
    """Check ``build_loss()`` with respect to the parameter tensor ``param``.

    The parameter itself is the leaf: ``f`` ignores its argument because the
    closure already reads ``param.data``, which finite_diff_check nudges.
    """
    return (lambda t: build_loss()), param


def dense_case(rng, activation):
    from mdser.nn import DenseLayer

    layer = DenseLayer(4, 3, activation, rng=rng)
    layer.bias.data = rng.uniform(-0.5, 0.5, size=3)
    x = constant(_away(rng, (5, 4), 0.1, 1.5))
    w = _weights(rng, (5, 3))
    return param_case(lambda: ops.sum(ops.mul(layer(x), w)), layer.weight)


def conv_bank_case(rng):
    from mdser.nn import Conv1DBank

    bank = Conv1DBank(3, [(1, 2), (3, 2)], rng=rng)
    x = tensor(rng.normal(size=(7, 3)))
    w = _weights(rng, (7, 4))
    return (lambda t: ops.sum(ops.mul(bank(t, lengths=[3, 4]), w))), x


def lstm_stack_case(rng):
    from mdser.nn import LSTMStack

    stack = LSTMStack(3, 2, num_layers=2, rng=rng)
    x = tensor(rng.normal(size=(7, 3)))
    w_h, w_last = _weights(rng, (7, 4)), _weights(rng, (2, 4))

    def f(t):
        h, last = stack(t, lengths=[4, 3])
        return ops.add(ops.sum(ops.mul(h, w_h)), ops.sum(ops.mul(last, w_last)))

    return f, x


def encoder_case(rng):
    from mdser.encoder import EncoderConfig, EncoderStack

    enc = EncoderStack(3, EncoderConfig(conv_widths=(3,), conv_filters=3, lstm_hidden=2, attention_dim=3), rng=rng)
    seqs = [rng.normal(size=(4, 3)), rng.normal(size=(2, 3))]
    w = _weights(rng, (2, 3))
    return param_case(lambda: ops.sum(ops.mul(enc.encode_batch(seqs), w)), enc.w_key)


def cross_entropy_case(rng):
    from mdser.nn import cross_entropy

    x = tensor(rng.normal(size=(5, 4)))
    labels = rng.integers(0, 4, size=5)
    return (lambda t: cross_entropy(t, labels)), x


def dropout_case(rng):
    from mdser.nn import DropoutSpec, dropout_apply

    x = tensor(rng.normal(size=(5, 4)))
    seed = int(rng.integers(1 << 30))
    w = _weights(rng, (5, 4))
    # a fresh generator per call gives the same mask on every evaluation
    return (lambda t: ops.sum(ops.mul(dropout_apply(DropoutSpec(0.3), t, np.random.default_rng(seed)), w))), x


def gate_case(rng):
    from mdser.gating import GateBank, gated_combine

    bank = GateBank(["a", "b"], 3, 4)
    bank.matrices["a"].data = rng.normal(size=(3, 4))
    sel = constant(rng.normal(size=(5, 4)))
    feats = [constant(rng.normal(size=(5, 2))) for _ in range(3)]
    w = _weights(rng, (5, 2))
    return param_case(lambda: ops.sum(ops.mul(gated_combine(bank.gate_weights("a", sel), feats), w)), bank.matrices["a"])


def nas_case(rng, which):
    from mdser.nas import NasLayer

    layer = NasLayer(["a"], 3, 2)
    layer.log_kappa["a"].data = rng.uniform(-1.0, 1.0, size=(3, 3))
    for row in layer.transitions:
        for W in row:
            W.data = rng.normal(size=(2, 2))
    v = [constant(rng.normal(size=(4, 2))) for _ in range(3)]
    # noise kept where the gate is interior: clamp gradients are exactly 0 outside
    noise = rng.uniform(0.3, 0.7, size=(3, 3))
    w = _weights(rng, (4, 2))

    def loss():
        u = layer.transform("a", v, train=True, noise=noise)
        return ops.sum(ops.mul(ops.add(ops.add(u[0], u[1]), u[2]), w))

    target = layer.log_kappa["a"] if which == "kappa" else layer.transitions[1][2]
    return param_case(loss, target)


def aux_case(rng, exclude_self=False):
    from mdser.contrastive import SimilarityParams, auxiliary_loss

    labels = ["A"] * 6 + ["B"] * 7
    x = tensor(rng.normal(size=(13, 4)))
    params = SimilarityParams()
    return (lambda t: auxiliary_loss(t, labels, params, exclude_self=exclude_self)), x


LAYER_CASES = {
    "dense_identity": lambda r: dense_case(r, "identity"),
    "dense_tanh": lambda r: dense_case(r, "tanh"),
    "dense_gelu": lambda r: dense_case(r, "gelu"),
    "dense_mish": lambda r: dense_case(r, "mish"),
    "dense_relu": lambda r: dense_case(r, "relu"),
    "conv_bank": conv_bank_case,
    "lstm_stack": lstm_stack_case,
    "encoder": encoder_case,
    "cross_entropy": cross_entropy_case,
    "dropout": dropout_case,
    "gate": gate_case,
    "nas_log_kappa": lambda r: nas_case(r, "kappa"),
    "nas_transition": lambda r: nas_case(r, "W"),
}

AUX_CASES = {
    "aux_loss": aux_case,
    "aux_loss_exclude_self": lambda r: aux_case(r, True),
}


def full_model_case(rng, corpus, variant="Ours"):
    """Training-mode loss (CE + aux) of a tiny model w.r.t. one random parameter.

    Parameters start from a random point (gates and connectivity logits are
    moved off their symmetric initial values) and dropout is on; a fresh
    generator per evaluation replays the same dropout masks and gate noise.
    """
    from conftest import tiny_spec
    from mdser.models import build_model
    from mdser.training import batch_loss

    model = build_model(tiny_spec(variant, corpus.manifest, dropout=0.1), int(rng.integers(1 << 30)))
    if model.gates is not None:
        for W in model.gates.matrices.values():
            W.data = rng.normal(scale=0.5, size=W.shape)
    if model.nas is not None:
        for lk in model.nas.log_kappa.values():
            lk.data = rng.uniform(-1.0, 1.0, size=lk.shape)
    domain = "english"
    pool = [b for b in corpus.bundles if b.domain == domain]
    # six of one label so the auxiliary loss has a retained group
    anchor = [b for b in pool if b.label == pool[0].label][:6]
    others = [b for b in pool if b.label != pool[0].label]
    batch = anchor + [others[i] for i in rng.choice(len(others), 2, replace=False)]
    named = list(model.named_parameters())
    name, param = named[int(rng.integers(len(named)))]
    seed = int(rng.integers(1 << 30))

    def loss():
        return batch_loss(model, domain, batch, 0.1, train=True, rng=np.random.default_rng(seed))[0]

    f, x = param_case(loss, param)
    return f, x, name
