"""Per-domain softmax gates over feature experts."""

from __future__ import annotations

import numpy as np

from . import ops
from .nn import Module, parameter
from .tensor import ShapeError


class GateBank(Module):
    """Gate logits ``W_k @ selector`` for each registered domain.

    With ``shared=True`` (one-gate mixture) a single matrix serves every
    domain.  Matrices start at zero, i.e. uniform weights.
    """

    def __init__(self, domains, n_features, selector_dim, selector_feature="ge2e", shared=False):
        self.domains = list(domains)
        self.n_features = n_features
        self.selector_dim = selector_dim
        self.selector_feature = selector_feature
        self.shared = shared
        keys = ["shared"] if shared else self.domains
        self.matrices = {k: parameter(np.zeros((n_features, selector_dim))) for k in keys}

    def matrix(self, domain):
        if domain not in self.domains:
            raise KeyError(f"unknown domain {domain!r}")
        return self.matrices["shared" if self.shared else domain]

    def gate_weights(self, domain, selector):
        """softmax(W_k x) for a [d_sel] or [B x d_sel] selector."""
        W = self.matrix(domain)
        if selector.shape[-1] != self.selector_dim:
            raise ShapeError(f"selector dim {selector.shape[-1]} != {self.selector_dim}")
        return ops.softmax(ops.matmul(selector, ops.transpose(W)))


def gated_combine(weights, features):
    """Weighted sum of expert outputs.

    ``weights`` is [M] or [B x M]; ``features`` holds M tensors of [D] or
    [B x D] respectively.
    """
    if weights.shape[-1] != len(features):
        raise ShapeError(f"{weights.shape[-1]} gate weights for {len(features)} features")
    dims = {f.shape for f in features}
    if len(dims) != 1:
        raise ShapeError(f"gated_combine: feature shapes differ {sorted(dims)}")
    out = None
    for i, feat in enumerate(features):
        if weights.ndim == 1:
            w = weights[i]
        else:
            w = ops.reshape(weights[:, i], (-1, 1))
        term = ops.mul(feat, w)
        out = term if out is None else ops.add(out, term)
    return out
