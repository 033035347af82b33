"""Model-level reports: gate weights, NAS connectivity, embedding dumps."""

from __future__ import annotations

import numpy as np

from .metrics import GateReport, compactness, write_embedding_dump
from .training import _chunks, evaluate


def gate_report(model, data, batch_size=64):
    """Mean eval-mode gate weight per (domain, feature) over ``data``.

    ``data`` maps domain -> bundles.  Deterministic NAS gates are attached
    for the ``Ours`` variant.
    """
    if model.gates is None:
        raise ValueError(f"variant {model.variant} has no gates to report")
    weights = {}
    for domain, bundles in data.items():
        if not bundles:
            continue
        rows = [model.gate_weights(domain, chunk).data for chunk in _chunks(list(bundles), batch_size)]
        weights[domain] = np.concatenate(rows, axis=0).mean(axis=0)
    connectivity = {}
    if model.nas is not None:
        connectivity = {d: model.nas.connectivity(d) for d in weights}
    return GateReport(list(model.feature_names), weights, connectivity)


def representations(model, data):
    """Eval-mode pre-tower representations: list of (bundle, vector)."""
    _, outputs = evaluate(model, data)
    rows = []
    for domain, bundles in data.items():
        if not bundles:
            continue
        for bundle, vec in zip(bundles, outputs[domain]["rep"]):
            rows.append((bundle, vec))
    return rows


def embedding_dump(model, data, path):
    rows = representations(model, data)
    return write_embedding_dump(path, [(b.utterance_id, b.domain, b.label, v) for b, v in rows])


def domain_compactness(model, data):
    """Compactness per domain of the eval-mode representations."""
    scores = {}
    for domain, bundles in data.items():
        rows = representations(model, {domain: bundles})
        scores[domain] = compactness(np.stack([v for _, v in rows]), [b.label for b, _ in rows])
    return scores
