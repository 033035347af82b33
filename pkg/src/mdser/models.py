"""Single-domain and multi-domain model variants plus checkpoint I/O.

Variant routing (feature encoders are always shared):

* ``SingleDomain`` - concatenate encoded features, one tower.
* ``Base``         - same as SingleDomain, one tower over the 8-label union.
* ``SB``           - project every feature to ``d_common``, unweighted sum,
  per-domain tower.
* ``OMoE``         - SB with one softmax gate shared by all domains.
* ``MMoE``         - SB with one softmax gate per domain.
* ``Ours``         - per-domain connectivity search, then per-domain gate.

Checkpoint container (``<prefix>.bin``): magic ``b"MDSERCK1"``, u32 tensor
count, then each tensor's float64 little-endian payload back to back.  The
text manifest (``<prefix>.manifest``) is tab separated with header
``name  shape  offset`` where offset is the payload's byte offset in the
container and shape is comma separated.  ``<prefix>.json`` holds the model
description needed to rebuild the parameter layout.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ops
from .contrastive import SimilarityParams
from .data import UNION_LABELS
from .encoder import SEQUENTIAL, EncoderConfig, EncoderStack, FeatureSpec, assemble_representation
from .gating import GateBank, gated_combine
from .nas import HardConcrete, NasLayer
from .nn import DenseLayer, DropoutSpec, Module, dropout_apply
from .tensor import ShapeError, constant

VARIANTS = ("SingleDomain", "Base", "SB", "OMoE", "MMoE", "Ours")
MULTI_DOMAIN = ("SB", "OMoE", "MMoE", "Ours")

CKPT_MAGIC = b"MDSERCK1"


@dataclass
class TowerSpec:
    hidden: list = field(default_factory=lambda: [256, 256])
    activations: list = field(default_factory=lambda: ["mish", "gelu"])
    dropout: float = 0.1
    n_classes: int = 4

    def __post_init__(self):
        if len(self.hidden) != len(self.activations):
            raise ValueError("tower: one activation per hidden layer")
        if any(h <= 0 for h in self.hidden):
            raise ValueError("tower: hidden units must be positive")
        if self.n_classes < 2:
            raise ValueError("tower: need at least two classes")
        DropoutSpec(self.dropout)

    def to_dict(self):
        return {
            "hidden": list(self.hidden),
            "activations": list(self.activations),
            "dropout": self.dropout,
            "n_classes": self.n_classes,
        }


def default_tower(domain, n_classes):
    """English: 256 units, Mish then GeLU; German/French: 512, Tanh then ReLU."""
    if domain.lower() in ("german", "french"):
        return TowerSpec([512, 512], ["tanh", "relu"], 0.1, n_classes)
    return TowerSpec([256, 256], ["mish", "gelu"], 0.1, n_classes)


class Tower(Module):
    def __init__(self, in_dim, spec, rng):
        self.spec = spec
        self.hidden = []
        dim = in_dim
        for units, act in zip(spec.hidden, spec.activations):
            self.hidden.append(DenseLayer(dim, units, act, rng=rng))
            dim = units
        self.out = DenseLayer(dim, spec.n_classes, "identity", rng=rng)

    def __call__(self, x, train=False, rng=None):
        drop = DropoutSpec(self.spec.dropout, train)
        for layer in self.hidden:
            x = dropout_apply(drop, layer(x), rng)
        return self.out(x)


@dataclass
class ModelSpec:
    """Everything needed to build (or rebuild) a model's parameter layout."""

    variant: str
    features: list
    domains: dict
    towers: dict = field(default_factory=dict)
    d_common: int = 256
    selector: str = "ge2e"
    hard_concrete: HardConcrete = field(default_factory=HardConcrete)
    log_kappa_init: float = 2.0
    l0_penalty: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not self.features:
            raise ValueError("at least one feature required")
        if not self.domains:
            raise ValueError("at least one domain required")
        if self.variant == "SingleDomain" and len(self.domains) != 1:
            raise ValueError("SingleDomain needs exactly one domain")
        if self.variant in ("OMoE", "MMoE", "Ours"):
            sel = [f for f in self.features if f.name == self.selector]
            if not sel:
                raise ValueError(f"selector feature {self.selector!r} not declared")
            if sel[0].kind == SEQUENTIAL:
                raise ValueError("selector must be a vector feature")
        for domain in self.towers:
            if domain not in self.domains and domain != "shared":
                raise ValueError(f"tower given for unknown domain {domain!r}")
        for domain, labels in self.domains.items():
            if self.variant == "Base":
                extra = set(labels) - set(UNION_LABELS)
                if extra:
                    raise ValueError(f"Base: labels {sorted(extra)} not in the union label set")
                continue
            spec = self.towers.get(domain)
            if spec is None:
                self.towers[domain] = default_tower(domain, len(labels))
            elif spec.n_classes != len(labels):
                raise ValueError(f"tower {domain!r} has {spec.n_classes} outputs for {len(labels)} labels")
        if self.variant == "Base":
            spec = self.towers.get("shared") or default_tower("english", len(UNION_LABELS))
            spec.n_classes = len(UNION_LABELS)
            self.towers = {"shared": spec}

    def to_dict(self):
        hc = self.hard_concrete
        return {
            "variant": self.variant,
            "features": [
                {
                    "name": f.name,
                    "kind": f.kind,
                    "dim": f.dim,
                    "encoder": f.encoder.to_dict() if f.encoder else None,
                }
                for f in self.features
            ],
            "domains": {d: list(v) for d, v in self.domains.items()},
            "towers": {d: t.to_dict() for d, t in self.towers.items()},
            "d_common": self.d_common,
            "selector": self.selector,
            "hard_concrete": {"beta": hc.beta, "gamma": hc.gamma, "delta": hc.delta},
            "log_kappa_init": self.log_kappa_init,
            "l0_penalty": self.l0_penalty,
        }

    @classmethod
    def from_dict(cls, data):
        feats = [
            FeatureSpec(
                f["name"], f["kind"], int(f["dim"]), EncoderConfig.from_dict(f["encoder"]) if f.get("encoder") else None
            )
            for f in data["features"]
        ]
        towers = {d: TowerSpec(**t) for d, t in data.get("towers", {}).items()}
        return cls(
            variant=data["variant"],
            features=feats,
            domains={d: list(v) for d, v in data["domains"].items()},
            towers=towers,
            d_common=data.get("d_common", 256),
            selector=data.get("selector", "ge2e"),
            hard_concrete=HardConcrete(**data.get("hard_concrete", {})),
            log_kappa_init=data.get("log_kappa_init", 2.0),
            l0_penalty=data.get("l0_penalty", 0.0),
        )


class EmotionModel(Module):
    """One of the six variants; call :meth:`forward` on a single-domain batch."""

    def __init__(self, spec, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.spec = spec
        self.variant = spec.variant
        self.feature_names = [f.name for f in spec.features]
        self.encoders = {
            f.name: EncoderStack(f.dim, f.encoder, rng=rng) for f in spec.features if f.kind == SEQUENTIAL
        }
        out_dims = {f.name: f.output_dim for f in spec.features}
        self.projections = {}
        self.gates = None
        self.nas = None
        if self.variant in MULTI_DOMAIN:
            self.projections = {
                name: DenseLayer(out_dims[name], spec.d_common, "identity", rng=rng) for name in self.feature_names
            }
            rep_dim = spec.d_common
        else:
            rep_dim = sum(out_dims.values())
        if self.variant in ("OMoE", "MMoE", "Ours"):
            sel_dim = next(f.dim for f in spec.features if f.name == spec.selector)
            self.gates = GateBank(
                spec.domains, len(self.feature_names), sel_dim, spec.selector, shared=(self.variant == "OMoE")
            )
        if self.variant == "Ours":
            self.nas = NasLayer(
                spec.domains,
                len(self.feature_names),
                spec.d_common,
                spec.hard_concrete,
                spec.log_kappa_init,
                spec.l0_penalty,
            )
        self.rep_dim = rep_dim
        self.towers = {d: Tower(rep_dim, t, rng) for d, t in spec.towers.items()}
        self.similarity = SimilarityParams()

    # -- label spaces ---------------------------------------------------------

    def output_labels(self, domain):
        """Labels indexed by this domain's logit columns."""
        return list(UNION_LABELS) if self.variant == "Base" else list(self.spec.domains[domain])

    def label_index(self, domain, label):
        return self.output_labels(domain).index(label)

    def tower_for(self, domain):
        if domain not in self.spec.domains:
            raise KeyError(f"unknown domain {domain!r}")
        return self.towers["shared" if self.variant == "Base" else domain]

    # -- forward ----------------------------------------------------------------

    def encode(self, bundles):
        """Per-feature embeddings for a batch, in declared feature order."""
        out = []
        for f in self.spec.features:
            try:
                values = [b.features[f.name] for b in bundles]
            except KeyError:
                missing = next(b.utterance_id for b in bundles if f.name not in b.features)
                raise KeyError(f"{missing}: missing feature {f.name!r}") from None
            if f.kind == SEQUENTIAL:
                out.append(self.encoders[f.name].encode_batch(values))
            else:
                out.append(constant(np.stack([np.asarray(v, dtype=np.float64) for v in values])))
        return out

    def selector_values(self, bundles):
        return constant(np.stack([np.asarray(b.features[self.spec.selector]) for b in bundles]))

    def gate_weights(self, domain, bundles):
        return self.gates.gate_weights(domain, self.selector_values(bundles))

    def represent(self, bundles, domain, train=False, rng=None, xi=None):
        """Pre-tower representation [B x rep_dim] of a single-domain batch."""
        if not bundles:
            raise ShapeError("empty batch")
        if domain not in self.spec.domains:
            raise KeyError(f"unknown domain {domain!r}")
        encoded = self.encode(bundles)
        if self.variant in ("SingleDomain", "Base"):
            return assemble_representation(encoded)
        projected = [self.projections[n](e) for n, e in zip(self.feature_names, encoded)]
        if self.variant == "SB":
            rep = projected[0]
            for p in projected[1:]:
                rep = ops.add(rep, p)
            return rep
        if self.variant == "Ours":
            projected = self.nas.transform(domain, projected, train=train, rng=rng, xi=xi)
        return gated_combine(self.gate_weights(domain, bundles), projected)

    def forward(self, bundles, domain, train=False, rng=None, xi=None):
        """Return ``(logits [B x C], representation [B x rep_dim])``."""
        rep = self.represent(bundles, domain, train=train, rng=rng, xi=xi)
        logits = self.tower_for(domain)(rep, train=train, rng=rng)
        return logits, rep

    def admissible_mask(self, domain):
        labels = self.output_labels(domain)
        allowed = set(self.spec.domains[domain])
        return np.array([lab in allowed for lab in labels])

    def predict_indices(self, logits, domain):
        """Argmax over the domain's admissible labels (lowest index on ties)."""
        values = np.asarray(logits.data if hasattr(logits, "data") else logits, dtype=np.float64)
        if self.variant == "Base":
            values = np.where(self.admissible_mask(domain), values, -np.inf)
        return np.argmax(values, axis=-1)

    def architecture_parameters(self):
        """Connectivity logits (``log_kappa``) of the search module, if any."""
        return list(self.nas.log_kappa.values()) if self.nas is not None else []

    def parameter_report(self):
        groups = {}
        for name, p in self.named_parameters():
            groups[name.split(".")[0]] = groups.get(name.split(".")[0], 0) + p.size
        groups["total"] = self.num_parameters()
        return groups


def build_model(spec, seed=0):
    return EmotionModel(spec, rng=np.random.default_rng(seed))


def predict(logits):
    """Index of the largest logit; ties go to the lowest index."""
    values = np.asarray(logits.data if hasattr(logits, "data") else logits)
    return int(np.argmax(values))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model, prefix):
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    named = list(model.named_parameters())
    rows = ["name\tshape\toffset"]
    offset = len(CKPT_MAGIC) + 4
    with open(f"{prefix}.bin", "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(named)))
        for name, p in named:
            payload = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
            rows.append(f"{name}\t{','.join(map(str, p.shape))}\t{offset}")
            fh.write(payload)
            offset += len(payload)
    Path(f"{prefix}.manifest").write_text("\n".join(rows) + "\n", encoding="utf-8")
    Path(f"{prefix}.json").write_text(json.dumps(model.spec.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_checkpoint(prefix):
    """Rebuild a model from ``<prefix>.json`` and fill it from the container."""
    prefix = Path(prefix)
    for ext in (".bin", ".manifest", ".json"):
        if not Path(f"{prefix}{ext}").exists():
            raise FileNotFoundError(f"checkpoint file {prefix}{ext} not found")
    spec = ModelSpec.from_dict(json.loads(Path(f"{prefix}.json").read_text(encoding="utf-8")))
    model = EmotionModel(spec)
    raw = Path(f"{prefix}.bin").read_bytes()
    if raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValueError("checkpoint: bad magic")
    (count,) = struct.unpack("<I", raw[len(CKPT_MAGIC) : len(CKPT_MAGIC) + 4])
    lines = Path(f"{prefix}.manifest").read_text(encoding="utf-8").splitlines()[1:]
    entries = {}
    for line in lines:
        name, shape, offset = line.split("\t")
        dims = tuple(int(s) for s in shape.split(",")) if shape else ()
        entries[name] = (dims, int(offset))
    params = dict(model.named_parameters())
    if count != len(entries) or set(entries) != set(params):
        raise ValueError("checkpoint: parameter table does not match the model layout")
    for name, p in params.items():
        dims, offset = entries[name]
        if dims != p.shape:
            raise ValueError(f"checkpoint: {name} has shape {dims}, model expects {p.shape}")
        n = int(np.prod(dims)) if dims else 1
        p.data = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).astype(np.float64).reshape(dims)
    return model
