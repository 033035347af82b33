"""Accuracy metrics, representation compactness and report files.

Report and dump files are UTF-8, tab separated, one header line:

* evaluation table:   ``domain  WA  UA  n``
* gate report:        ``domain  feature  mean_weight``
* NAS connectivity:   ``domain  i  j  xi``  (i, j are feature names)
* embedding dump:     ``utterance_id  domain  label  e0  e1 ...``
  (values written with 9 significant digits)
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _check(preds, labels):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if labels.size == 0:
        raise ValueError("empty evaluation set")
    return preds, labels


def weighted_accuracy(preds, labels):
    """Fraction of correct predictions (class weights proportional to counts)."""
    preds, labels = _check(preds, labels)
    return float(np.mean(preds == labels))


def unweighted_accuracy(preds, labels):
    """Mean per-class recall over the classes present in ``labels``."""
    preds, labels = _check(preds, labels)
    recalls = [np.mean(preds[labels == c] == c) for c in np.unique(labels)]
    return float(np.mean(recalls))


def confusion_matrix(preds, labels, n_classes):
    """Rows are true classes, columns predictions."""
    preds, labels = _check(preds, labels)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


@dataclass
class DomainResult:
    WA: float
    UA: float
    confusion: np.ndarray
    n: int


@dataclass
class EvalResult:
    domains: dict = field(default_factory=dict)

    def mean_ua(self):
        return float(np.mean([r.UA for r in self.domains.values()]))

    def mean_wa(self):
        return float(np.mean([r.WA for r in self.domains.values()]))

    def to_table(self):
        lines = ["domain\tWA\tUA\tn"]
        for d, r in self.domains.items():
            lines.append(f"{d}\t{r.WA:.6f}\t{r.UA:.6f}\t{r.n}")
        return "\n".join(lines) + "\n"


def score_domain(preds, labels, n_classes):
    cm = confusion_matrix(preds, labels, n_classes)
    return DomainResult(weighted_accuracy(preds, labels), unweighted_accuracy(preds, labels), cm, int(len(labels)))


@dataclass
class CompactnessScore:
    intra: float
    inter: float

    @property
    def ratio(self):
        return self.intra / self.inter if self.inter != 0 else float("inf")


def compactness(embeddings, labels):
    """Mean pairwise cosine within and across classes (L2-normalized first).

    Within-class pairs exclude self-pairs.  The ratio is intra / inter.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2 or counts.min() < 2:
        raise ValueError("compactness needs at least two classes with two samples each")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    x = x / np.maximum(norms, 1e-12)
    sims = np.clip(x @ x.T, -1.0, 1.0)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(x), dtype=bool)
    intra = float(sims[same & off_diag].mean())
    inter = float(sims[~same].mean())
    return CompactnessScore(intra, inter)


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------


@dataclass
class GateReport:
    """Mean gate weight per (domain, feature) and deterministic NAS gates."""

    features: list
    weights: dict
    connectivity: dict = field(default_factory=dict)

    def argmax_feature(self, domain):
        return self.features[int(np.argmax(self.weights[domain]))]

    def to_text(self):
        lines = ["domain\tfeature\tmean_weight"]
        for d, w in self.weights.items():
            for name, value in zip(self.features, w):
                lines.append(f"{d}\t{name}\t{value:.9g}")
        return "\n".join(lines) + "\n"

    def connectivity_text(self):
        lines = ["domain\ti\tj\txi"]
        for d, xi in self.connectivity.items():
            for i, j in itertools.product(range(len(self.features)), repeat=2):
                lines.append(f"{d}\t{self.features[i]}\t{self.features[j]}\t{xi[i, j]:.9g}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        if self.connectivity:
            path.with_name(path.stem + "_nas.tsv").write_text(self.connectivity_text(), encoding="utf-8")


def parse_gate_report(text):
    weights = {}
    features = []
    for line in text.strip().splitlines()[1:]:
        domain, feat, value = line.split("\t")
        weights.setdefault(domain, []).append(float(value))
        if feat not in features:
            features.append(feat)
    return GateReport(features, {d: np.array(w) for d, w in weights.items()})


def write_embedding_dump(path, rows):
    """``rows`` yields ``(utterance_id, domain, label, vector)``."""
    rows = list(rows)
    dim = len(rows[0][3]) if rows else 0
    lines = ["utterance_id\tdomain\tlabel\t" + "\t".join(f"e{i}" for i in range(dim))]
    for utt, domain, label, vec in rows:
        lines.append("\t".join([utt, domain, label] + [f"{v:.9g}" for v in vec]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(rows)


def read_embedding_dump(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows = []
    for line in lines[1:]:
        parts = line.split("\t")
        rows.append((parts[0], parts[1], parts[2], np.array([float(v) for v in parts[3:]])))
    return rows
