"""Experiment configuration (YAML) with defaults and strict validation.

A minimal config names a variant and a data source::

    variant: Ours
    corpus: data/corpus        # or: synthetic: {seed: 0, samples_per_class: 40}

Everything else falls back to the published defaults (AdamW lr 1e-3,
betas 0.9/0.999, eps 1e-8, weight decay 1e-5, 20 epochs, dropout 0.1,
hard concrete 0.9/-0.1/2, aux weights 0.1/0.01/0.015 for
English/German/French).  ``preset: desk`` shrinks encoders, towers and the
common dimension so experiments run in seconds on a laptop; explicit keys
still win.  Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .contrastive import default_alpha
from .data import UNION_LABELS, SyntheticSpec, generate_synthetic, load_corpus
from .encoder import MFCC_ENCODER, SEQUENTIAL, EncoderConfig, FeatureSpec
from .models import VARIANTS, ModelSpec, TowerSpec, default_tower
from .nas import HardConcrete
from .training import TrainSchedule

OUTPUT_ROOT_ENV = "MDSER_OUTPUT_ROOT"
PRESETS = ("paper", "desk")
DESK_ENCODER = EncoderConfig(conv_widths=(3, 5), conv_filters=8, lstm_hidden=8, lstm_layers=1, attention_dim=16)
DESK_D_COMMON = 16
DESK_TOWER_UNITS = 32

_OPTIMIZER_KEYS = {"lr", "betas", "eps", "weight_decay", "arch_lr_scale"}
_NAS_KEYS = {"beta", "gamma", "delta", "log_kappa_init", "l0_penalty"}
_TOWER_KEYS = {"hidden", "activations", "dropout"}
_ENCODER_KEYS = {f.name for f in fields(EncoderConfig)}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _default_optimizer():
    # arch_lr_scale multiplies lr for the connectivity logits only
    return {"lr": 1e-3, "betas": [0.9, 0.999], "eps": 1e-8, "weight_decay": 1e-5, "arch_lr_scale": 1.0}


def _default_nas():
    return {"beta": 0.9, "gamma": -0.1, "delta": 2.0, "log_kappa_init": 2.0, "l0_penalty": 0.0}


@dataclass
class ExperimentConfig:
    variant: str = "Ours"
    corpus: str | None = None
    synthetic: dict | None = None
    preset: str = "paper"
    encoders: dict = field(default_factory=dict)
    selector: str = "ge2e"
    d_common: int | None = None
    towers: dict = field(default_factory=dict)
    dropout: float = 0.1
    alpha: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=_default_optimizer)
    epochs: int = 20
    batch_size: int = 32
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    nas: dict = field(default_factory=_default_nas)
    exclude_self_centroid: bool = False
    output_dir: str | None = None

    # -- validation -------------------------------------------------------------

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant: {self.variant!r} is not one of {', '.join(VARIANTS)}")
        if (self.corpus is None) == (self.synthetic is None):
            raise ConfigError("corpus/synthetic: give exactly one data source")
        if self.synthetic is not None:
            try:
                SyntheticSpec.from_dict(self.synthetic).validate()
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigError(f"synthetic: {exc}") from None
        if self.preset not in PRESETS:
            raise ConfigError(f"preset: must be one of {PRESETS}")
        for name, enc in self.encoders.items():
            _check_keys(enc, _ENCODER_KEYS, f"encoders.{name}")
        if self.d_common is not None and (not isinstance(self.d_common, int) or self.d_common < 1):
            raise ConfigError("d_common: must be a positive integer")
        for domain, tower in self.towers.items():
            _check_keys(tower, _TOWER_KEYS, f"towers.{domain}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout: must be in [0, 1)")
        for domain, a in self.alpha.items():
            if not isinstance(a, (int, float)) or a < 0:
                raise ConfigError(f"alpha.{domain}: must be a non-negative number")
        _check_keys(self.optimizer, _OPTIMIZER_KEYS, "optimizer")
        if not self.optimizer["lr"] >= 0:
            raise ConfigError("optimizer.lr: must be non-negative")
        if len(self.optimizer["betas"]) != 2 or not all(0 <= b < 1 for b in self.optimizer["betas"]):
            raise ConfigError("optimizer.betas: two values in [0, 1)")
        if not self.optimizer["eps"] > 0:
            raise ConfigError("optimizer.eps: must be positive")
        if self.optimizer["weight_decay"] < 0:
            raise ConfigError("optimizer.weight_decay: must be non-negative")
        if not self.optimizer["arch_lr_scale"] > 0:
            raise ConfigError("optimizer.arch_lr_scale: must be positive")
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError("epochs: must be an integer >= 1")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError("batch_size: must be an integer >= 1")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds: must be a non-empty list of integers")
        _check_keys(self.nas, _NAS_KEYS, "nas")
        try:
            HardConcrete(self.nas["beta"], self.nas["gamma"], self.nas["delta"])
        except ValueError as exc:
            raise ConfigError(f"nas: {exc}") from None
        if self.nas["l0_penalty"] < 0:
            raise ConfigError("nas.l0_penalty: must be non-negative")
        return self

    # -- resolution -------------------------------------------------------------

    def load_data(self):
        if self.synthetic is not None:
            return generate_synthetic(SyntheticSpec.from_dict(self.synthetic))
        return load_corpus(self.corpus)

    def alpha_for(self, domain):
        return float(self.alpha.get(domain, default_alpha(domain)))

    def alphas(self, domains):
        return {d: self.alpha_for(d) for d in domains}

    def encoder_for(self, name):
        base = DESK_ENCODER if self.preset == "desk" else (MFCC_ENCODER if name.lower() == "mfcc" else EncoderConfig())
        overrides = self.encoders.get(name, {})
        merged = {**base.to_dict(), **overrides}
        return EncoderConfig.from_dict(merged)

    def tower_for(self, domain, n_classes):
        spec = default_tower(domain, n_classes)
        if self.preset == "desk":
            spec.hidden = [DESK_TOWER_UNITS] * len(spec.hidden)
        spec.dropout = self.dropout
        for key, value in self.towers.get(domain, {}).items():
            setattr(spec, key, list(value) if isinstance(value, (list, tuple)) else value)
        return TowerSpec(spec.hidden, spec.activations, spec.dropout, n_classes)

    def model_spec(self, manifest, variant=None):
        variant = variant or self.variant
        names = manifest.feature_names
        for section, keys, known in (
            ("towers", self.towers, manifest.domains),
            ("alpha", self.alpha, manifest.domains),
            ("encoders", self.encoders, names),
        ):
            for key in keys:
                if key not in known:
                    raise ConfigError(f"{section}.{key}: not in the corpus")
        if self.selector not in names:
            raise ConfigError(f"selector: feature {self.selector!r} not in the corpus")
        features = [
            FeatureSpec(f.name, f.kind, f.dim, self.encoder_for(f.name) if f.kind == SEQUENTIAL else None)
            for f in manifest.features
        ]
        domains = {d: list(labels) for d, labels in manifest.domains.items()}
        if variant == "Base":
            towers = {"shared": self.tower_for("shared", len(UNION_LABELS))}
        else:
            towers = {d: self.tower_for(d, len(labels)) for d, labels in domains.items()}
        d_common = self.d_common or (DESK_D_COMMON if self.preset == "desk" else 256)
        try:
            return ModelSpec(
                variant=variant,
                features=features,
                domains=domains,
                towers=towers,
                d_common=d_common,
                selector=self.selector,
                hard_concrete=HardConcrete(self.nas["beta"], self.nas["gamma"], self.nas["delta"]),
                log_kappa_init=self.nas["log_kappa_init"],
                l0_penalty=self.nas["l0_penalty"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def schedule(self, seed):
        opt = self.optimizer
        return TrainSchedule(
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=seed,
            lr=opt["lr"],
            betas=tuple(opt["betas"]),
            eps=opt["eps"],
            weight_decay=opt["weight_decay"],
            exclude_self_centroid=self.exclude_self_centroid,
            arch_lr_scale=opt["arch_lr_scale"],
        )

    def output_root(self):
        return Path(self.output_dir or os.environ.get(OUTPUT_ROOT_ENV, "runs"))

    # -- serialization ----------------------------------------------------------

    def to_dict(self):
        return copy.deepcopy(asdict(self))

    def dump(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return config_from_dict(data)


def _check_keys(mapping, allowed, where):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(sorted(unknown))}")
    data = copy.deepcopy(data)
    # nested sections merge over their defaults
    for key, default in (("optimizer", _default_optimizer()), ("nas", _default_nas())):
        if key in data:
            if not isinstance(data[key], dict):
                raise ConfigError(f"{key}: expected a mapping")
            _check_keys(data[key], default.keys(), key)
            data[key] = {**default, **data[key]}
    if "optimizer" in data:
        data["optimizer"]["betas"] = list(data["optimizer"]["betas"])
    for key in ("encoders", "towers", "alpha"):
        if key in data and data[key] is None:
            data[key] = {}
    if data.get("corpus") is not None:
        data["corpus"] = str(data["corpus"])
    try:
        return ExperimentConfig(**data).validate()
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from None


def parse_config_text(text):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"config parse error{where}: {getattr(exc, 'problem', exc)}") from None
    return config_from_dict(data if data is not None else {})


def parse_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    config = parse_config_text(text)
    if config.corpus is not None and not Path(config.corpus).is_absolute():
        candidate = path.parent / config.corpus
        if candidate.exists():
            config.corpus = str(candidate)
    return config
