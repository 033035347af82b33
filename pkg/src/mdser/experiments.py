"""Canned experiment protocols: the variant ladder, the aux-loss ablation and
gate attribution.

Every run splits the corpus with its own seed, trains with that seed and is
scored on its test split.  Results keep enough per-seed detail (scores, gate
reports, compactness) for the summary tables and the acceptance checks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .evaluation import domain_compactness, gate_report
from .models import build_model
from .training import evaluate, fit, split_corpus

logger = logging.getLogger(__name__)

LADDER = ("Base", "SB", "OMoE", "MMoE", "Ours")
GATED = ("OMoE", "MMoE", "Ours")


@dataclass
class RunOutcome:
    variant: str
    seed: int
    model: object
    train: object
    scores: object
    gates: object = None
    compactness: dict = field(default_factory=dict)


def train_run(config, corpus, variant=None, seed=1, alpha=None, keep_compactness=False):
    """Train one (variant, seed) and score it on that seed's test split.

    ``alpha`` overrides every domain's aux weight when given.
    """
    variant = variant or config.variant
    spec = config.model_spec(corpus.manifest, variant)
    model = build_model(spec, seed)
    train, val, test = split_corpus(corpus, seed)
    alphas = config.alphas(train)
    if alpha is not None:
        alphas = {d: float(alpha) for d in alphas}
    result = fit(model, train, val, config.schedule(seed), alphas)
    scores, _ = evaluate(model, test)
    outcome = RunOutcome(variant, seed, model, result, scores)
    if variant in GATED:
        outcome.gates = gate_report(model, test)
    if keep_compactness:
        outcome.compactness = domain_compactness(model, test)
    logger.info("%s seed %d: mean test UA %.4f", variant, seed, scores.mean_ua())
    return outcome


def _mean_std(values):
    values = np.asarray(values, dtype=np.float64)
    return float(values.mean()), float(values.std())


@dataclass
class LadderResult:
    """Per-variant lists of :class:`RunOutcome`, one per seed."""

    runs: dict = field(default_factory=dict)

    @property
    def domains(self):
        first = next(iter(self.runs.values()))[0]
        return list(first.scores.domains)

    def mean_ua(self, variant):
        return _mean_std([r.scores.mean_ua() for r in self.runs[variant]])[0]

    def cell(self, variant, domain, metric):
        return _mean_std([getattr(r.scores.domains[domain], metric) for r in self.runs[variant]])

    def to_table(self):
        """One row per variant, ``UA/WA`` per domain (seed means), mean UA and its std."""
        domains = self.domains
        lines = ["variant\t" + "\t".join(domains) + "\tmean_UA\tstd_UA"]
        for variant, runs in self.runs.items():
            cells = []
            for d in domains:
                ua, _ = self.cell(variant, d, "UA")
                wa, _ = self.cell(variant, d, "WA")
                cells.append(f"{ua:.4f}/{wa:.4f}")
            mean, std = _mean_std([r.scores.mean_ua() for r in runs])
            lines.append(f"{variant}\t" + "\t".join(cells) + f"\t{mean:.4f}\t{std:.4f}")
        return "\n".join(lines) + "\n"


def run_ladder(config, corpus=None, variants=LADDER, seeds=None, on_run=None):
    corpus = corpus if corpus is not None else config.load_data()
    seeds = list(seeds if seeds is not None else config.seeds)
    result = LadderResult()
    for variant in variants:
        result.runs[variant] = []
        for seed in seeds:
            outcome = train_run(config, corpus, variant, seed)
            result.runs[variant].append(outcome)
            if on_run is not None:
                on_run(outcome)
    return result


@dataclass
class AblationResult:
    """Runs with the configured aux weights (``with_aux``) and with alpha = 0."""

    with_aux: list = field(default_factory=list)
    without_aux: list = field(default_factory=list)

    @staticmethod
    def _ua(runs):
        return _mean_std([r.scores.mean_ua() for r in runs])[0]

    @staticmethod
    def _ratio(runs):
        return float(np.mean([c.ratio for r in runs for c in r.compactness.values()]))

    def mean_ua(self, aux=True):
        return self._ua(self.with_aux if aux else self.without_aux)

    def compactness_ratio(self, aux=True):
        """Mean intra/inter cosine ratio over seeds and domains (test split)."""
        return self._ratio(self.with_aux if aux else self.without_aux)

    def to_table(self):
        domains = list(self.with_aux[0].scores.domains)
        lines = ["setting\t" + "\t".join(domains) + "\tmean_UA\tcompactness"]
        for name, runs in (("with_aux", self.with_aux), ("without_aux", self.without_aux)):
            cells = []
            for d in domains:
                ua = np.mean([r.scores.domains[d].UA for r in runs])
                wa = np.mean([r.scores.domains[d].WA for r in runs])
                cells.append(f"{ua:.4f}/{wa:.4f}")
            lines.append(f"{name}\t" + "\t".join(cells) + f"\t{self._ua(runs):.4f}\t{self._ratio(runs):.4f}")
        return "\n".join(lines) + "\n"


def run_ablation(config, corpus=None, variant=None, seeds=None, on_run=None):
    """Same variant and seeds, trained with domain aux weights and with none."""
    corpus = corpus if corpus is not None else config.load_data()
    seeds = list(seeds if seeds is not None else config.seeds)
    result = AblationResult()
    for seed in seeds:
        for alpha, bucket in ((None, result.with_aux), (0.0, result.without_aux)):
            outcome = train_run(config, corpus, variant, seed, alpha=alpha, keep_compactness=True)
            bucket.append(outcome)
            if on_run is not None:
                on_run(outcome)
    return result


def gate_attribution(runs, informative):
    """Count, per domain, the seeds whose largest mean gate weight sits on
    the domain's informative feature.

    ``runs`` are outcomes of one gated variant; ``informative`` maps domain
    -> feature name.  Returns ``{domain: (hits, n_runs)}``.
    """
    counts = {}
    for domain, feature in informative.items():
        hits = sum(r.gates.argmax_feature(domain) == feature for r in runs)
        counts[domain] = (int(hits), len(runs))
    return counts


def attribution_table(per_variant):
    """``per_variant`` maps variant -> :func:`gate_attribution` output."""
    lines = ["variant\tdomain\thits\truns"]
    for variant, counts in per_variant.items():
        for domain, (hits, n) in counts.items():
            lines.append(f"{variant}\t{domain}\t{hits}\t{n}")
    return "\n".join(lines) + "\n"
