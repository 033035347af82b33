"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every differentiable operation is a *primitive* registered in ``PRIMITIVES``.
A primitive receives the raw numpy values of its inputs plus keyword
attributes and returns ``(output_value, vjp)`` where ``vjp(g)`` maps the
upstream gradient to one gradient per input (``None`` for "no gradient").

Node ids come from a process-wide monotone counter, so every input of a node
has a smaller id than the node itself.  Sorting the reachable nodes by
descending id is therefore a valid reverse topological order and the graph is
acyclic by construction.

Shape rules per primitive:

* ``add``/``sub``/``mul``/``div``: numpy broadcasting; gradients are summed
  back over broadcast axes.
* ``matmul``: 1-D or 2-D operands with numpy ``@`` semantics; inner
  dimensions must agree.
* ``concat``: all inputs share every axis except ``axis``.
* ``slice``: numpy basic indexing with a tuple of slices/ints (``key``).
* ``take``: integer gather along ``axis`` (repeats allowed, grads summed).
* ``reshape``/``transpose``: element count preserved / axes permutation.
* ``sum``/``mean``: reduce over ``axis`` (``None`` for all), ``keepdims``.
* elementwise unaries (``exp``, ``log``, ``sqrt``, ``sigmoid``, ``tanh``,
  ``relu``, ``gelu``, ``mish``, ``softplus``, ``neg``): shape preserved.
* ``softmax``/``log_softmax``/``l2_normalize``: along the last axis.
* ``clamp``: elementwise into ``[min, max]``; gradient 1 on the closed
  interval, 0 outside.
* ``cosine_similarity``: ``a`` [n x d], ``b`` [m x d] -> [n x m]; a pair whose
  either norm is below ``COS_EPS`` has similarity 0 and zero gradient.
* ``conv1d``: packed sequences ``x`` [N x d_in], kernel
  [width x d_in x filters], bias [filters]; same zero padding inside each
  sequence given by ``lengths`` (default: one sequence of length N).
* ``lstm_scan``: one LSTM direction over packed sequences (see
  :func:`_lstm_scan`).
* ``segment_sum``/``segment_softmax``: reductions over contiguous row
  segments identified by ``segment_ids``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import expit, log_softmax as _sp_log_softmax, softmax as _sp_softmax

__all__ = [
    "Tensor",
    "ShapeError",
    "PRIMITIVES",
    "apply_primitive",
    "backward",
    "finite_diff_check",
    "tensor",
    "constant",
]

L2_EPS = 1e-12
COS_EPS = 1e-12
_GELU_C = math.sqrt(2.0 / math.pi)

_node_ids = itertools.count()


class ShapeError(ValueError):
    """Raised when a primitive receives incompatible input shapes."""


class Tensor:
    """A float64 array that may participate in a differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "op", "parents", "_vjp", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node_id = next(_node_ids)
        self.op = None
        self.parents = ()
        self._vjp = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def backward(self):
        return backward(self)

    # operator sugar
    def __add__(self, other):
        return apply_primitive("add", [self, _as_tensor(other)])

    __radd__ = __add__

    def __sub__(self, other):
        return apply_primitive("sub", [self, _as_tensor(other)])

    def __rsub__(self, other):
        return apply_primitive("sub", [_as_tensor(other), self])

    def __mul__(self, other):
        return apply_primitive("mul", [self, _as_tensor(other)])

    __rmul__ = __mul__

    def __truediv__(self, other):
        return apply_primitive("div", [self, _as_tensor(other)])

    def __rtruediv__(self, other):
        return apply_primitive("div", [_as_tensor(other), self])

    def __neg__(self):
        return apply_primitive("neg", [self])

    def __matmul__(self, other):
        return apply_primitive("matmul", [self, _as_tensor(other)])

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return apply_primitive("slice", [self], key=key)

    @property
    def T(self):
        return apply_primitive("transpose", [self])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return apply_primitive("reshape", [self], shape=shape)

    def sum(self, axis=None, keepdims=False):
        return apply_primitive("sum", [self], axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return apply_primitive("mean", [self], axis=axis, keepdims=keepdims)


def tensor(data, requires_grad=False, name=None):
    return Tensor(data, requires_grad=requires_grad, name=name)


def constant(data):
    """Wrap a value (e.g. sampled noise) as a gradient-free leaf."""
    return Tensor(data, requires_grad=False)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# primitive registry
# ---------------------------------------------------------------------------

PRIMITIVES = {}


def _primitive(name):
    def register(fn):
        PRIMITIVES[name] = fn
        return fn

    return register


def apply_primitive(op_tag, inputs, **attrs):
    """Run primitive ``op_tag`` on ``inputs`` and record it for backward."""
    try:
        fn = PRIMITIVES[op_tag]
    except KeyError:
        raise KeyError(f"unknown primitive {op_tag!r}") from None
    inputs = [_as_tensor(t) for t in inputs]
    value, vjp = fn(*[t.data for t in inputs], **attrs)
    out = Tensor.__new__(Tensor)
    out.data = value if value.dtype == np.float64 else value.astype(np.float64)
    out.grad = None
    out.node_id = next(_node_ids)
    out.name = None
    out.op = op_tag
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.parents = tuple(inputs)
        out._vjp = vjp
    else:
        out.requires_grad = False
        out.parents = ()
        out._vjp = None
    return out


def _mismatch(op, a, b):
    return ShapeError(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _mismatch(op, a.shape, b.shape) from None


@_primitive("add")
def _add(a, b):
    _broadcast_shape("add", a, b)
    return a + b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


@_primitive("sub")
def _sub(a, b):
    _broadcast_shape("sub", a, b)
    return a - b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))


@_primitive("mul")
def _mul(a, b):
    _broadcast_shape("mul", a, b)
    return a * b, lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))


@_primitive("div")
def _div(a, b):
    _broadcast_shape("div", a, b)
    out = a / b
    return out, lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * out / b, b.shape))


@_primitive("neg")
def _neg(a):
    return -a, lambda g: (-g,)


@_primitive("matmul")
def _matmul(a, b):
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise _mismatch("matmul", a.shape, b.shape)
    out = a @ b

    def vjp(g):
        if a.ndim == 2 and b.ndim == 2:
            return g @ b.T, a.T @ g
        if a.ndim == 1 and b.ndim == 2:
            return b @ g, np.outer(a, g)
        if a.ndim == 2 and b.ndim == 1:
            return np.outer(g, b), a.T @ g
        return g * b, g * a

    return out, vjp


@_primitive("concat")
def _concat(*xs, axis=0):
    try:
        out = np.concatenate(xs, axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: incompatible shapes {[tuple(x.shape) for x in xs]} on axis {axis}"
        ) from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return out, lambda g: tuple(np.split(g, bounds, axis=axis))


@_primitive("slice")
def _slice(a, key=()):
    try:
        out = a[key]
    except IndexError as exc:
        raise ShapeError(f"slice: key {key!r} invalid for shape {a.shape}: {exc}") from None

    def vjp(g):
        full = np.zeros_like(a)
        full[key] = g
        return (full,)

    return np.array(out, dtype=np.float64), vjp


@_primitive("take")
def _take(a, indices=None, axis=0):
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < -a.shape[axis] or idx.max() >= a.shape[axis]):
        raise ShapeError(f"take: indices out of range for axis {axis} of shape {a.shape}")
    out = np.take(a, idx, axis=axis)

    def vjp(g):
        full = np.zeros_like(a)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (full,)

    return out, vjp


@_primitive("reshape")
def _reshape(a, shape=()):
    try:
        out = a.reshape(shape)
    except ValueError:
        raise _mismatch("reshape", a.shape, shape) from None
    return out, lambda g: (g.reshape(a.shape),)


@_primitive("transpose")
def _transpose(a, axes=None):
    out = np.transpose(a, axes)
    inv = None if axes is None else np.argsort(axes)
    return out, lambda g: (np.transpose(g, inv),)


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(np.reshape(g, (1,) * len(shape)), shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


@_primitive("sum")
def _sum(a, axis=None, keepdims=False):
    out = np.sum(a, axis=axis, keepdims=keepdims)
    return np.asarray(out), lambda g: (np.array(_expand_reduced(g, a.shape, axis, keepdims)),)


@_primitive("mean")
def _mean(a, axis=None, keepdims=False):
    out = np.mean(a, axis=axis, keepdims=keepdims)
    n = a.size / max(np.asarray(out).size, 1)
    return np.asarray(out), lambda g: (np.array(_expand_reduced(g, a.shape, axis, keepdims)) / n,)


@_primitive("exp")
def _exp(a):
    out = np.exp(a)
    return out, lambda g: (g * out,)


@_primitive("log")
def _log(a):
    return np.log(a), lambda g: (g / a,)


@_primitive("sqrt")
def _sqrt(a):
    out = np.sqrt(a)
    return out, lambda g: (g * 0.5 / out,)


@_primitive("sigmoid")
def _sigmoid(a):
    out = expit(a)
    return out, lambda g: (g * out * (1.0 - out),)


@_primitive("tanh")
def _tanh(a):
    out = np.tanh(a)
    return out, lambda g: (g * (1.0 - out * out),)


@_primitive("relu")
def _relu(a):
    mask = a > 0
    return a * mask, lambda g: (g * mask,)


@_primitive("softplus")
def _softplus(a):
    return np.logaddexp(0.0, a), lambda g: (g * expit(a),)


@_primitive("gelu")
def _gelu(a):
    # tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    inner = _GELU_C * (a + 0.044715 * a**3)
    t = np.tanh(inner)
    out = 0.5 * a * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * a * a)
        return (g * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * dinner),)

    return out, vjp


@_primitive("mish")
def _mish(a):
    # x * tanh(ln(1 + e^x))
    sp = np.logaddexp(0.0, a)
    t = np.tanh(sp)
    out = a * t

    def vjp(g):
        return (g * (t + a * (1.0 - t * t) * expit(a)),)

    return out, vjp


@_primitive("softmax")
def _softmax(a):
    out = _sp_softmax(a, axis=-1)

    def vjp(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return out, vjp


@_primitive("log_softmax")
def _log_softmax(a):
    out = _sp_log_softmax(a, axis=-1)

    def vjp(g):
        return (g - np.exp(out) * np.sum(g, axis=-1, keepdims=True),)

    return out, vjp


@_primitive("clamp")
def _clamp(a, min=-np.inf, max=np.inf):
    out = np.clip(a, min, max)
    active = (a >= min) & (a <= max)
    return out, lambda g: (g * active,)


@_primitive("l2_normalize")
def _l2_normalize(a):
    norm = np.sqrt(np.sum(a * a, axis=-1, keepdims=True))
    denom = np.maximum(norm, L2_EPS)
    out = a / denom
    live = norm > L2_EPS

    def vjp(g):
        proj = g - out * np.sum(g * out, axis=-1, keepdims=True)
        return (np.where(live, proj, g) / denom,)

    return out, vjp


@_primitive("cosine_similarity")
def _cosine_similarity(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise _mismatch("cosine_similarity", a.shape, b.shape)
    na = np.sqrt(np.sum(a * a, axis=1))
    nb = np.sqrt(np.sum(b * b, axis=1))
    ok_a = na >= COS_EPS
    ok_b = nb >= COS_EPS
    ua = a / np.where(ok_a, na, 1.0)[:, None]
    ub = b / np.where(ok_b, nb, 1.0)[:, None]
    live = np.outer(ok_a, ok_b)
    out = np.where(live, ua @ ub.T, 0.0)

    def vjp(g):
        g = np.where(live, g, 0.0)
        # d cos / d a_i = (ub_j - cos_ij ua_i) / |a_i|
        ga = (g @ ub - np.sum(g * out, axis=1)[:, None] * ua) / np.where(ok_a, na, 1.0)[:, None]
        gb = (g.T @ ua - np.sum(g * out, axis=0)[:, None] * ub) / np.where(ok_b, nb, 1.0)[:, None]
        return ga, gb

    return out, vjp


def _default_lengths(n, lengths):
    if lengths is None:
        return np.array([n], dtype=np.intp)
    lengths = np.asarray(lengths, dtype=np.intp)
    if lengths.sum() != n or (lengths < 1).any():
        raise ShapeError(f"lengths {lengths.tolist()} do not partition {n} rows")
    return lengths


def _window_index(lengths, width):
    """Row index [N x width] of the same-padded window around each row; -1 pads."""
    half = width // 2
    n = int(lengths.sum())
    starts = np.repeat(np.cumsum(lengths) - lengths, lengths)
    ends = starts + np.repeat(lengths, lengths)
    rows = np.arange(n)[:, None] + np.arange(-half, half + 1)[None, :]
    valid = (rows >= starts[:, None]) & (rows < ends[:, None])
    return np.where(valid, rows, -1)


@_primitive("conv1d")
def _conv1d(x, weight, bias, lengths=None):
    if x.ndim != 2 or weight.ndim != 3 or weight.shape[1] != x.shape[1]:
        raise _mismatch("conv1d", x.shape, weight.shape)
    width, d_in, filters = weight.shape
    if width % 2 == 0:
        raise ShapeError(f"conv1d: kernel width must be odd, got {width}")
    if bias.shape != (filters,):
        raise _mismatch("conv1d", weight.shape, bias.shape)
    n = x.shape[0]
    if n == 0:
        raise ShapeError("conv1d: empty sequence")
    lengths = _default_lengths(n, lengths)
    idx = _window_index(lengths, width)
    padded = np.vstack([x, np.zeros((1, d_in))])
    cols = padded[idx].reshape(n, width * d_in)
    wmat = weight.reshape(width * d_in, filters)
    out = cols @ wmat + bias

    def vjp(g):
        gw = (cols.T @ g).reshape(weight.shape)
        gcols = (g @ wmat.T).reshape(n, width, d_in)
        gpad = np.zeros((n + 1, d_in))
        np.add.at(gpad, idx, gcols)
        return gpad[:n], gw, g.sum(axis=0)

    return out, vjp


def _scan_positions(lengths, reverse):
    """[T x B] packed-row index of step t of sequence b, -1 past the end."""
    offsets = np.cumsum(lengths) - lengths
    t = np.arange(int(lengths.max()))[:, None]
    valid = t < lengths[None, :]
    if reverse:
        rows = offsets[None, :] + lengths[None, :] - 1 - t
    else:
        rows = offsets[None, :] + t
    return np.where(valid, rows, -1), valid


@_primitive("lstm_scan")
def _lstm_scan(x, w_in, w_hid, bias, lengths=None, reverse=False):
    """One LSTM direction over packed sequences.

    ``x`` is [N x d] holding sequences back to back (``lengths`` partition N).
    Gate blocks in ``w_in`` [d x 4k], ``w_hid`` [k x 4k], ``bias`` [4k] are
    ordered input, forget, cell, output.  Every sequence starts from zero
    state; with ``reverse`` each one is read back to front.  Output is the
    packed hidden state [N x k] aligned with the input rows.
    """
    k = w_hid.shape[0]
    if x.ndim != 2 or w_in.shape != (x.shape[1], 4 * k) or w_hid.shape != (k, 4 * k):
        raise _mismatch("lstm_scan", x.shape, w_in.shape)
    if bias.shape != (4 * k,):
        raise _mismatch("lstm_scan", w_hid.shape, bias.shape)
    n = x.shape[0]
    if n == 0:
        raise ShapeError("lstm_scan: empty sequence")
    lengths = _default_lengths(n, lengths)
    pos, valid = _scan_positions(lengths, reverse)
    steps, batch = pos.shape
    proj = np.vstack([x @ w_in + bias, np.zeros((1, 4 * k))])[pos]  # [T x B x 4k]

    gates = np.empty((steps, batch, 4 * k))
    cells = np.zeros((steps + 1, batch, k))
    hiddens = np.zeros((steps + 1, batch, k))
    tanh_c = np.empty((steps, batch, k))
    for t in range(steps):
        z = proj[t] + hiddens[t] @ w_hid
        act = gates[t]
        act[:, : 2 * k] = expit(z[:, : 2 * k])
        act[:, 2 * k : 3 * k] = np.tanh(z[:, 2 * k : 3 * k])
        act[:, 3 * k :] = expit(z[:, 3 * k :])
        cells[t + 1] = act[:, k : 2 * k] * cells[t] + act[:, :k] * act[:, 2 * k : 3 * k]
        tanh_c[t] = np.tanh(cells[t + 1])
        hiddens[t + 1] = act[:, 3 * k :] * tanh_c[t]

    out = np.zeros((n, k))
    out[pos[valid]] = hiddens[1:][valid]

    def vjp(g):
        gh_steps = np.zeros((steps, batch, k))
        gh_steps[valid] = g[pos[valid]]
        dproj = np.empty((steps, batch, 4 * k))
        g_w_hid = np.zeros_like(w_hid)
        dh_next = np.zeros((batch, k))
        dc_next = np.zeros((batch, k))
        for t in range(steps - 1, -1, -1):
            act = gates[t]
            i, f = act[:, :k], act[:, k : 2 * k]
            c_hat, o = act[:, 2 * k : 3 * k], act[:, 3 * k :]
            dh = gh_steps[t] + dh_next
            dc = dh * o * (1.0 - tanh_c[t] ** 2) + dc_next
            dz = dproj[t]
            dz[:, :k] = dc * c_hat * i * (1.0 - i)
            dz[:, k : 2 * k] = dc * cells[t] * f * (1.0 - f)
            dz[:, 2 * k : 3 * k] = dc * i * (1.0 - c_hat**2)
            dz[:, 3 * k :] = dh * tanh_c[t] * o * (1.0 - o)
            g_w_hid += hiddens[t].T @ dz
            dh_next = dz @ w_hid.T
            dc_next = dc * f
        dpacked = np.zeros((n, 4 * k))
        dpacked[pos[valid]] = dproj[valid]
        return dpacked @ w_in.T, x.T @ dpacked, g_w_hid, dpacked.sum(axis=0)

    return out, vjp


@_primitive("segment_sum")
def _segment_sum(a, segment_ids=None, num_segments=None):
    seg = np.asarray(segment_ids, dtype=np.intp)
    if seg.shape[0] != a.shape[0]:
        raise _mismatch("segment_sum", a.shape, seg.shape)
    out = np.zeros((num_segments,) + a.shape[1:])
    np.add.at(out, seg, a)
    return out, lambda g: (g[seg],)


@_primitive("segment_softmax")
def _segment_softmax(a, segment_ids=None, num_segments=None):
    """Softmax of a 1-D score vector within each contiguous segment."""
    seg = np.asarray(segment_ids, dtype=np.intp)
    if a.ndim != 1 or seg.shape != a.shape:
        raise _mismatch("segment_softmax", a.shape, seg.shape)
    peak = np.full(num_segments, -np.inf)
    np.maximum.at(peak, seg, a)
    e = np.exp(a - peak[seg])
    total = np.zeros(num_segments)
    np.add.at(total, seg, e)
    out = e / total[seg]

    def vjp(g):
        dot = np.zeros(num_segments)
        np.add.at(dot, seg, g * out)
        return (out * (g - dot[seg]),)

    return out, vjp


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf.

    Returns a mapping ``node_id -> gradient`` for those leaves.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    seen = {loss.node_id: loss}
    stack = [loss]
    while stack:
        node = stack.pop()
        for parent in node.parents:
            if parent.requires_grad and parent.node_id not in seen:
                seen[parent.node_id] = parent
                stack.append(parent)
    grads = {loss.node_id: np.ones_like(loss.data)}
    leaves = {}
    for node_id in sorted(seen, reverse=True):
        node = seen[node_id]
        g = grads.pop(node_id, None)
        if g is None:
            continue
        if node._vjp is None:
            leaves[node_id] = g
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.node_id in grads:
                grads[parent.node_id] = grads[parent.node_id] + pg
            else:
                grads[parent.node_id] = np.asarray(pg, dtype=np.float64)
    return leaves


def finite_diff_check(f, x, eps=1e-6, norm="coordinate"):
    """Max relative error between backward() and central differences.

    ``f`` maps the leaf ``x`` to a scalar Tensor; it is re-evaluated with each
    coordinate of ``x.data`` nudged by +-eps.  With ``norm="coordinate"`` the
    error per coordinate is ``|analytic - numeric| / (|numeric| + 1e-12)``
    and the worst one is returned.  ``norm="vector"`` gives
    ``||analytic - numeric|| / (||numeric|| + 1e-12)`` instead, which stays
    meaningful when some coordinates sit below the difference quotient's
    rounding floor (about ``1e-16 * |f| / eps``).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if norm not in ("coordinate", "vector"):
        raise ValueError(f"norm must be 'coordinate' or 'vector', got {norm!r}")
    x.requires_grad = True
    x.grad = None
    backward(f(x))
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None
    flat = x.data.reshape(-1)
    numeric = np.empty(flat.size)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        up = f(x).item()
        flat[i] = saved - eps
        down = f(x).item()
        flat[i] = saved
        numeric[i] = (up - down) / (2 * eps)
    diff = analytic.reshape(-1) - numeric
    if norm == "vector":
        return float(np.linalg.norm(diff) / (np.linalg.norm(numeric) + 1e-12))
    err = np.abs(diff) / (np.abs(numeric) + 1e-12)
    return float(err.max()) if err.size else 0.0
