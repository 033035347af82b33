"""Centroid-based contrastive auxiliary loss over emotion groups in a batch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .nn import Module, parameter
from .tensor import Tensor, constant

MIN_GROUP = 5
W_FLOOR = 1e-6

# Auxiliary weight per language when a config does not set one.
DEFAULT_ALPHA = {"english": 0.1, "german": 0.01, "french": 0.015}


def default_alpha(domain, fallback=0.1):
    return DEFAULT_ALPHA.get(domain.lower(), fallback)


@dataclass
class ContrastiveBatch:
    """Retained, L2-normalized embeddings ordered group by group.

    ``x`` is [R x D]; rows of group j are ``x[offsets[j]:offsets[j] + counts[j]]``.
    """

    x: Tensor | None
    labels: list
    counts: np.ndarray

    @property
    def N(self):
        return len(self.labels)

    @property
    def group_ids(self):
        return np.repeat(np.arange(self.N), self.counts)

    @property
    def offsets(self):
        return np.cumsum(self.counts) - self.counts


class SimilarityParams(Module):
    def __init__(self, w=10.0, b=-5.0):
        self.w = parameter(np.array(w))
        self.b = parameter(np.array(b))

    def clamp_(self):
        """Keep the scale positive; call after every optimizer step."""
        self.w.data = np.maximum(self.w.data, W_FLOOR)


def group_batch(embeddings, labels, min_count=MIN_GROUP):
    """Keep labels seen more than ``min_count`` times, normalized and grouped.

    ``embeddings`` is a [B x D] tensor (or a list of 1-D tensors).
    """
    if isinstance(embeddings, (list, tuple)):
        if len(embeddings) != len(labels):
            raise ValueError("group_batch: embeddings and labels differ in length")
        if not embeddings:
            return ContrastiveBatch(None, [], np.zeros(0, dtype=np.intp))
        embeddings = ops.stack_rows(embeddings)
    labels = list(labels)
    if embeddings.shape[0] != len(labels):
        raise ValueError("group_batch: embeddings and labels differ in length")
    kept, rows, counts = [], [], []
    for label in sorted(set(labels), key=labels.index):
        idx = [i for i, lab in enumerate(labels) if lab == label]
        if len(idx) > min_count:
            kept.append(label)
            rows.extend(idx)
            counts.append(len(idx))
    if not kept:
        return ContrastiveBatch(None, [], np.zeros(0, dtype=np.intp))
    x = ops.l2_normalize(ops.take(embeddings, rows))
    return ContrastiveBatch(x, kept, np.array(counts, dtype=np.intp))


def centroids(batch):
    """[N x D] mean of each group's embeddings (the sample itself included)."""
    sums = ops.segment_sum(batch.x, batch.group_ids, batch.N)
    return ops.div(sums, constant(batch.counts[:, None].astype(np.float64)))


def similarity_matrix(batch, cents, params, exclude_self=False):
    """``S[r, k] = w * cos(x_r, c_k) + b``, shape [R x N].

    With ``exclude_self`` the own-group column uses the centroid computed
    without row r (requires groups of at least two).
    """
    cos = ops.cosine_similarity(batch.x, cents)
    if exclude_self:
        gid = batch.group_ids
        m = batch.counts[gid].astype(np.float64)[:, None]
        loo = ops.div(ops.sub(ops.mul(ops.take(cents, gid), constant(m)), batch.x), constant(m - 1.0))
        own = ops.sum(ops.mul(batch.x, ops.l2_normalize(loo)), axis=1)
        onehot = np.zeros((len(gid), batch.N))
        onehot[np.arange(len(gid)), gid] = 1.0
        cos = ops.add(
            ops.mul(cos, constant(1.0 - onehot)),
            ops.mul(ops.reshape(own, (-1, 1)), constant(onehot)),
        )
    return ops.add(ops.mul(cos, params.w), params.b)


def contrastive_loss(S, batch):
    """Sum over rows of ``-log softmax(S[r])[own group]``."""
    rows = S.shape[0]
    logp = ops.reshape(ops.log_softmax(S), (-1,))
    own = ops.take(logp, np.arange(rows) * batch.N + batch.group_ids)
    return ops.mul(ops.sum(own), -1.0)


def total_loss(ce, aux, alpha):
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha == 0 or aux is None:
        return ce
    return ops.add(ce, ops.mul(aux, float(alpha)))


def auxiliary_loss(embeddings, labels, params, exclude_self=False, min_count=MIN_GROUP):
    """Group, score and sum; ``None`` when no emotion has enough samples."""
    batch = group_batch(embeddings, labels, min_count=min_count)
    if batch.N == 0:
        return None
    S = similarity_matrix(batch, centroids(batch), params, exclude_self=exclude_self)
    return contrastive_loss(S, batch)
