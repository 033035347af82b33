"""Learned per-domain connectivity between feature embeddings.

Each higher-level embedding is ``u_i = sum_j xi_ij W_ij v_j``.  The transition
matrices ``W_ij`` are shared by all domains; the connectivity gates ``xi`` are
drawn from a stretched, clamped ("hard") concrete distribution whose
location ``log_kappa`` is learned separately for every domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import ops
from .nn import Module, parameter
from .tensor import constant


@dataclass(frozen=True)
class HardConcrete:
    beta: float = 0.9
    gamma: float = -0.1
    delta: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not self.gamma < 0.0 < 1.0 < self.delta:
            raise ValueError(f"need gamma < 0 < 1 < delta, got ({self.gamma}, {self.delta})")

    def stretch(self, s):
        # s*delta + (1-s)*gamma == s*(delta-gamma) + gamma, rounded more kindly
        return s * self.delta + (1.0 - s) * self.gamma

    def prob_zero(self, log_kappa):
        """P(xi == 0) under stochastic sampling."""
        return expit(self.beta * math.log(-self.gamma / self.delta) - np.asarray(log_kappa))

    def prob_one(self, log_kappa):
        """P(xi == 1) under stochastic sampling."""
        return expit(np.asarray(log_kappa) - self.beta * math.log((1.0 - self.gamma) / (self.delta - 1.0)))


def _stretch_tensor(s, hyper):
    return ops.add(ops.mul(s, hyper.delta), ops.mul(ops.sub(1.0, s), hyper.gamma))


def sample_hard_concrete(log_kappa, hyper, noise):
    """Differentiable gate sample; ``noise`` is uniform on the open (0, 1)."""
    noise = np.asarray(noise, dtype=np.float64)
    if np.any(noise <= 0.0) or np.any(noise >= 1.0):
        raise ValueError("hard concrete noise must lie strictly inside (0, 1)")
    logistic = constant(np.log(noise) - np.log1p(-noise))
    s = ops.sigmoid(ops.div(ops.add(logistic, log_kappa), hyper.beta))
    return ops.clamp(_stretch_tensor(s, hyper), 0.0, 1.0)


def deterministic_gate(log_kappa, hyper):
    """Noise-free gate used at evaluation time."""
    return ops.clamp(_stretch_tensor(ops.sigmoid(log_kappa), hyper), 0.0, 1.0)


def deterministic_gate_value(log_kappa, hyper):
    s = expit(np.asarray(log_kappa, dtype=np.float64))
    return np.clip(hyper.stretch(s), 0.0, 1.0)


class NasLayer(Module):
    """Transition matrices [M x M] of [D x D] plus per-domain log_kappa [M x M].

    Diagonal transitions start at the identity and off-diagonal ones at zero,
    so at initialisation each u_i equals v_i; ``log_kappa`` starts at 2 so
    every connection is (nearly) open.
    """

    def __init__(self, domains, n_features, dim, hyper=None, log_kappa_init=2.0, l0_penalty=0.0):
        self.domains = list(domains)
        self.n_features = n_features
        self.dim = dim
        self.hyper = hyper or HardConcrete()
        self.l0_penalty = l0_penalty
        self.transitions = [
            [parameter(np.eye(dim) if i == j else np.zeros((dim, dim))) for j in range(n_features)]
            for i in range(n_features)
        ]
        self.log_kappa = {
            d: parameter(np.full((n_features, n_features), float(log_kappa_init))) for d in self.domains
        }

    def _check_domain(self, domain):
        if domain not in self.log_kappa:
            raise KeyError(f"unknown domain {domain!r}")

    def gates(self, domain, train=False, rng=None, noise=None):
        """[M x M] connectivity; stochastic when training, else deterministic."""
        self._check_domain(domain)
        lk = self.log_kappa[domain]
        if not train:
            return deterministic_gate(lk, self.hyper)
        if noise is None:
            noise = rng.uniform(size=lk.shape)
            # open interval; uniform() may return exactly 0
            noise = np.clip(noise, 1e-12, 1.0 - 1e-12)
        return sample_hard_concrete(lk, self.hyper, noise)

    def connectivity(self, domain):
        self._check_domain(domain)
        return deterministic_gate_value(self.log_kappa[domain].data, self.hyper)

    def transform(self, domain, v, train=False, rng=None, noise=None, xi=None):
        """Map M embeddings ([D] or [B x D] each) to M higher-level ones."""
        if xi is None:
            xi = self.gates(domain, train=train, rng=rng, noise=noise)
        else:
            self._check_domain(domain)
        out = []
        for i in range(self.n_features):
            acc = None
            for j in range(self.n_features):
                term = ops.mul(ops.matmul(v[j], ops.transpose(self.transitions[i][j])), xi[i, j])
                acc = term if acc is None else ops.add(acc, term)
            out.append(acc)
        return out

    def penalty(self, domain):
        """Optional expected-L0 term: l0_penalty * sum P(xi > 0)."""
        if self.l0_penalty == 0:
            return None
        lk = self.log_kappa[domain]
        shift = self.hyper.beta * math.log(-self.hyper.gamma / self.hyper.delta)
        return ops.mul(ops.sum(ops.sigmoid(ops.sub(lk, shift))), self.l0_penalty)


def nas_transform(layer, domain, v, mode="eval", rng=None, noise=None):
    return layer.transform(domain, v, train=(mode == "train"), rng=rng, noise=noise)
