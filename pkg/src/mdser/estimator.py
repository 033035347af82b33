"""scikit-learn style wrapper around the model variants.

``X`` is a sequence of :class:`~mdser.data.FeatureBundle`; every bundle
carries its own domain, so one estimator serves all domains at once::

    clf = MultiDomainSER(variant="MMoE", epochs=10).fit(bundles)
    clf.predict(bundles)          # label strings
    clf.predict_proba(bundles)    # [n x len(classes_)], zero off-domain
    clf.transform(bundles)        # pre-tower representations
"""

from __future__ import annotations

import numpy as np
from scipy.special import softmax
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import ExperimentConfig
from .data import LABEL_SETS, UNION_LABELS, CorpusManifest, FeatureBundle, FeatureDecl
from .encoder import SEQUENTIAL, VECTOR
from .models import build_model
from .training import _chunks, _round_half_up, _stratified_take, fit

_CHUNK = 64


def check_bundles(X, y=None):
    """Validate ``X`` (and optional ``y``); returns a list of bundles.

    With ``y`` the labels replace the bundles' own.  Every bundle must carry
    the same feature names, kinds and widths.
    """
    if isinstance(X, FeatureBundle) or not hasattr(X, "__len__"):
        raise TypeError("X must be a sequence of FeatureBundle")
    bundles = list(X)
    if not bundles:
        raise ValueError("X is empty")
    for b in bundles:
        if not isinstance(b, FeatureBundle):
            raise TypeError(f"X holds a {type(b).__name__}, expected FeatureBundle")
    if y is not None:
        y = list(y)
        if len(y) != len(bundles):
            raise ValueError(f"X has {len(bundles)} bundles but y has {len(y)} labels")
        bundles = [FeatureBundle(b.utterance_id, b.domain, str(lab), b.features) for b, lab in zip(bundles, y)]
    layout = _layout(bundles[0])
    for b in bundles[1:]:
        if _layout(b) != layout:
            raise ValueError(f"{b.utterance_id}: feature layout differs from {bundles[0].utterance_id}")
    return bundles


def _layout(bundle):
    out = []
    for name, value in bundle.features.items():
        arr = np.asarray(value)
        if arr.ndim not in (1, 2) or arr.shape[0] == 0:
            raise ValueError(f"{bundle.utterance_id}: feature {name!r} must be [L x d] or [d]")
        out.append((name, SEQUENTIAL if arr.ndim == 2 else VECTOR, arr.shape[-1]))
    return out


def infer_manifest(bundles, domains=None):
    """Manifest from data: the labels seen per domain, in the standard order
    for known language names and sorted otherwise."""
    decls = [FeatureDecl(n, k, d) for n, k, d in _layout(bundles[0])]
    if domains is None:
        domains = {}
        for b in bundles:
            domains.setdefault(b.domain, set()).add(b.label)
        for d, seen in domains.items():
            known = LABEL_SETS.get(d)
            if known and seen <= set(known):
                domains[d] = [lab for lab in known if lab in seen]
            else:
                domains[d] = sorted(seen)
    for b in bundles:
        if b.domain not in domains:
            raise ValueError(f"{b.utterance_id}: unknown domain {b.domain!r}")
        if b.label not in domains[b.domain]:
            raise ValueError(f"{b.utterance_id}: label {b.label!r} not in domain {b.domain!r}")
    return CorpusManifest({d: list(v) for d, v in domains.items()}, decls)


class MultiDomainSER(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Train one of the model variants on feature bundles.

    A stratified ``validation_fraction`` of every domain is held out for
    best-epoch selection.  ``alpha`` maps domain -> aux weight (language
    defaults otherwise).
    """

    def __init__(
        self,
        variant="Ours",
        preset="desk",
        epochs=20,
        batch_size=32,
        lr=1e-3,
        weight_decay=1e-5,
        alpha=None,
        d_common=None,
        selector="ge2e",
        domains=None,
        validation_fraction=0.2,
        random_state=1,
    ):
        self.variant = variant
        self.preset = preset
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.alpha = alpha
        self.d_common = d_common
        self.selector = selector
        self.domains = domains
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _config(self):
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        # the data source is supplied to fit(); the path only satisfies validation
        return ExperimentConfig(
            variant=self.variant,
            corpus="<in-memory>",
            preset=self.preset,
            selector=self.selector,
            d_common=self.d_common,
            alpha=dict(self.alpha or {}),
            optimizer={
                "lr": self.lr,
                "betas": [0.9, 0.999],
                "eps": 1e-8,
                "weight_decay": self.weight_decay,
                "arch_lr_scale": 1.0,
            },
            epochs=self.epochs,
            batch_size=self.batch_size,
            seeds=[int(self.random_state)],
        ).validate()

    def _holdout(self, bundles, rng):
        train, val = {}, {}
        for domain in self.manifest_.domains:
            items = [b for b in bundles if b.domain == domain]
            if not items:
                continue
            n_val = _round_half_up(self.validation_fraction * len(items)) if len(items) >= 5 else 0
            val[domain], train[domain] = _stratified_take(items, [b.label for b in items], n_val, rng)
        return train, {d: v for d, v in val.items() if v}

    def fit(self, X, y=None):
        bundles = check_bundles(X, y)
        config = self._config()
        self.manifest_ = infer_manifest(bundles, self.domains)
        seed = int(self.random_state)
        self.model_ = build_model(config.model_spec(self.manifest_), seed)
        train, val = self._holdout(bundles, np.random.default_rng(seed))
        self.train_result_ = fit(self.model_, train, val, config.schedule(seed), config.alphas(train))
        labels = {lab for v in self.manifest_.domains.values() for lab in v}
        self.classes_ = np.array([lab for lab in UNION_LABELS if lab in labels] + sorted(labels - set(UNION_LABELS)))
        self.n_features_in_ = len(self.manifest_.features)
        return self

    def _forward(self, X):
        check_is_fitted(self, "model_")
        bundles = check_bundles(X)
        for b in bundles:
            if b.domain not in self.manifest_.domains:
                raise ValueError(f"{b.utterance_id}: domain {b.domain!r} was not seen in fit")
        by_domain = {}
        for i, b in enumerate(bundles):
            by_domain.setdefault(b.domain, []).append(i)
        results = [None] * len(bundles)
        for domain, idx in by_domain.items():
            for chunk in _chunks(idx, _CHUNK):
                logits, rep = self.model_.forward([bundles[i] for i in chunk], domain)
                for row, i in enumerate(chunk):
                    results[i] = (domain, logits.data[row], rep.data[row])
        return results

    def predict(self, X):
        out = []
        for domain, logits, _ in self._forward(X):
            k = self.model_.predict_indices(logits[None, :], domain)[0]
            out.append(self.model_.output_labels(domain)[k])
        return np.array(out)

    def predict_proba(self, X):
        """Probabilities over ``classes_``; labels outside a bundle's domain get 0."""
        col = {lab: j for j, lab in enumerate(self.classes_)}
        proba = []
        for domain, logits, _ in self._forward(X):
            mask = self.model_.admissible_mask(domain)
            p = softmax(np.where(mask, logits, -np.inf))
            row = np.zeros(len(self.classes_))
            for lab, value in zip(self.model_.output_labels(domain), p):
                if lab in col:
                    row[col[lab]] += value
            proba.append(row)
        return np.vstack(proba)

    def transform(self, X):
        return np.vstack([rep for _, _, rep in self._forward(X)])

    def score(self, X, y=None, sample_weight=None):
        """Accuracy against ``y`` (or the bundles' own labels)."""
        bundles = check_bundles(X, y)
        truth = np.array([b.label for b in bundles])
        pred = self.predict(bundles)
        w = np.ones(len(truth)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        return float(np.sum(w * (pred == truth)) / np.sum(w))
