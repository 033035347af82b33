"""Feature bundles, corpus manifests, the bundle file format and synthetic corpora.

Bundle file (``*.serb``), all integers little-endian::

    magic      4 bytes  b"SERB"
    version    u16      1
    utt_id     str      (u16 byte length + UTF-8)
    domain     str
    label      str
    n_features u16
    per feature:
        name     str
        kind     u8       0 = sequential [L x d], 1 = vector [d]
        dims     u32 L, u32 d   (sequential) | u32 d (vector)
        payload  float32 little-endian, row-major

Manifest (``manifest.json``)::

    {"format": "mdser-corpus", "version": 1,
     "domains": {"german": ["Neutral", ...], ...},
     "features": [{"name": "wav2vec", "kind": "sequential", "dim": 32}, ...],
     "utterances": [{"id": ..., "domain": ..., "label": ..., "file": ...}, ...]}

Upstream extractor pipelines emit one bundle per utterance with exactly the
declared features; any label merging (e.g. Excited into Happy for IEMOCAP)
happens before bundles are written.  See :func:`write_bundle`.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import SEQUENTIAL, VECTOR

MAGIC = b"SERB"
BUNDLE_VERSION = 1
MANIFEST_FORMAT = "mdser-corpus"
MANIFEST_VERSION = 1

LABEL_SETS = {
    "english": ["Neutral", "Happy", "Anger", "Sad"],
    "german": ["Neutral", "Happy", "Anger", "Sad", "Fear", "Bored", "Disgusted"],
    "french": ["Neutral", "Happy", "Anger", "Sad", "Fear", "Surprise", "Disgusted"],
}
UNION_LABELS = ["Neutral", "Happy", "Anger", "Sad", "Fear", "Bored", "Disgusted", "Surprise"]

_KIND_CODE = {SEQUENTIAL: 0, VECTOR: 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


class CorpusError(ValueError):
    """Malformed bundle or manifest."""


@dataclass
class FeatureBundle:
    utterance_id: str
    domain: str
    label: str
    features: dict = field(default_factory=dict)


@dataclass
class FeatureDecl:
    name: str
    kind: str
    dim: int


@dataclass
class CorpusManifest:
    domains: dict
    features: list

    def feature(self, name):
        for decl in self.features:
            if decl.name == name:
                return decl
        raise KeyError(name)

    @property
    def feature_names(self):
        return [f.name for f in self.features]

    def to_dict(self, utterances=()):
        return {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "domains": {d: list(labels) for d, labels in self.domains.items()},
            "features": [{"name": f.name, "kind": f.kind, "dim": f.dim} for f in self.features],
            "utterances": list(utterances),
        }


@dataclass
class Corpus:
    manifest: CorpusManifest
    bundles: list

    def by_domain(self):
        out = {d: [] for d in self.manifest.domains}
        for b in self.bundles:
            out[b.domain].append(b)
        return out


# ---------------------------------------------------------------------------
# bundle file format
# ---------------------------------------------------------------------------


def _write_str(buf, text):
    raw = text.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)


def _read_exact(buf, n, what):
    raw = buf.read(n)
    if len(raw) != n:
        raise CorpusError(f"truncated bundle while reading {what}")
    return raw


def _read_str(buf, what):
    (n,) = struct.unpack("<H", _read_exact(buf, 2, what))
    return _read_exact(buf, n, what).decode("utf-8")


def encode_bundle(bundle, kinds=None):
    """Serialize a bundle to bytes; ``kinds`` maps name -> kind (else inferred)."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", BUNDLE_VERSION))
    for text in (bundle.utterance_id, bundle.domain, bundle.label):
        _write_str(buf, text)
    buf.write(struct.pack("<H", len(bundle.features)))
    for name, value in bundle.features.items():
        arr = np.asarray(value)
        kind = (kinds or {}).get(name, SEQUENTIAL if arr.ndim == 2 else VECTOR)
        _write_str(buf, name)
        buf.write(struct.pack("<B", _KIND_CODE[kind]))
        if kind == SEQUENTIAL:
            buf.write(struct.pack("<II", *arr.shape))
        else:
            buf.write(struct.pack("<I", arr.shape[0]))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def decode_bundle(raw):
    buf = io.BytesIO(raw)
    if _read_exact(buf, 4, "magic") != MAGIC:
        raise CorpusError("not a feature bundle (bad magic)")
    (version,) = struct.unpack("<H", _read_exact(buf, 2, "version"))
    if version != BUNDLE_VERSION:
        raise CorpusError(f"unsupported bundle version {version}")
    utt = _read_str(buf, "utterance id")
    domain = _read_str(buf, "domain")
    label = _read_str(buf, "label")
    (count,) = struct.unpack("<H", _read_exact(buf, 2, "feature count"))
    features = {}
    for _ in range(count):
        name = _read_str(buf, "feature name")
        (code,) = struct.unpack("<B", _read_exact(buf, 1, "feature kind"))
        if code not in _CODE_KIND:
            raise CorpusError(f"{utt}: feature {name!r} has unknown kind code {code}")
        if _CODE_KIND[code] == SEQUENTIAL:
            shape = struct.unpack("<II", _read_exact(buf, 8, "dims"))
        else:
            shape = struct.unpack("<I", _read_exact(buf, 4, "dims"))
        n = int(np.prod(shape))
        payload = _read_exact(buf, 4 * n, f"{utt}:{name} payload")
        features[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(shape)
    if buf.read(1):
        raise CorpusError(f"{utt}: trailing bytes after last feature")
    return FeatureBundle(utt, domain, label, features)


def write_bundle(path, bundle, kinds=None):
    Path(path).write_bytes(encode_bundle(bundle, kinds))


def read_bundle(path):
    return decode_bundle(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# corpus on disk
# ---------------------------------------------------------------------------


def validate_bundle(bundle, manifest):
    utt = bundle.utterance_id
    if bundle.domain not in manifest.domains:
        raise CorpusError(f"{utt}: unknown domain {bundle.domain!r}")
    if bundle.label not in manifest.domains[bundle.domain]:
        raise CorpusError(f"{utt}: label {bundle.label!r} not in the {bundle.domain} label set")
    for decl in manifest.features:
        if decl.name not in bundle.features:
            raise CorpusError(f"{utt}: missing feature {decl.name!r}")
        arr = np.asarray(bundle.features[decl.name])
        if decl.kind == SEQUENTIAL:
            if arr.ndim != 2 or arr.shape[1] != decl.dim:
                raise CorpusError(f"{utt}: feature {decl.name!r} shape {arr.shape}, expected [L x {decl.dim}]")
            if arr.shape[0] < 1:
                raise CorpusError(f"{utt}: feature {decl.name!r} is an empty sequence")
        elif arr.shape != (decl.dim,):
            raise CorpusError(f"{utt}: feature {decl.name!r} shape {arr.shape}, expected [{decl.dim}]")
        if not np.all(np.isfinite(arr)):
            raise CorpusError(f"{utt}: feature {decl.name!r} has non-finite values")


def _manifest_from_dict(data):
    if data.get("format") != MANIFEST_FORMAT:
        raise CorpusError("manifest: unexpected format tag")
    if data.get("version") != MANIFEST_VERSION:
        raise CorpusError(f"manifest: unsupported version {data.get('version')}")
    try:
        features = [FeatureDecl(f["name"], f["kind"], int(f["dim"])) for f in data["features"]]
        domains = {d: list(labels) for d, labels in data["domains"].items()}
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"manifest: malformed entry ({exc})") from None
    for f in features:
        if f.kind not in (SEQUENTIAL, VECTOR):
            raise CorpusError(f"manifest: feature {f.name!r} has unknown kind {f.kind!r}")
    return CorpusManifest(domains, features)


def save_corpus(corpus, path):
    """Write ``manifest.json`` plus one bundle file per utterance under ``path``."""
    root = Path(path)
    (root / "bundles").mkdir(parents=True, exist_ok=True)
    kinds = {f.name: f.kind for f in corpus.manifest.features}
    entries = []
    for i, bundle in enumerate(corpus.bundles):
        rel = f"bundles/{i:06d}.serb"
        write_bundle(root / rel, bundle, kinds)
        entries.append({"id": bundle.utterance_id, "domain": bundle.domain, "label": bundle.label, "file": rel})
    text = json.dumps(corpus.manifest.to_dict(entries), indent=1)
    (root / "manifest.json").write_text(text + "\n", encoding="utf-8")
    return root


def load_corpus(path):
    """Load and fully validate a corpus directory (or its manifest file)."""
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    root = manifest_path.parent
    try:
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorpusError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise CorpusError(f"manifest parse error at line {exc.lineno}: {exc.msg}") from None
    manifest = _manifest_from_dict(data)
    bundles = []
    for entry in data.get("utterances", []):
        file = root / entry["file"]
        if not file.exists():
            raise CorpusError(f"{entry.get('id')}: bundle file {entry['file']} missing")
        bundle = read_bundle(file)
        if bundle.utterance_id != entry["id"]:
            raise CorpusError(f"{entry['id']}: bundle file holds utterance {bundle.utterance_id!r}")
        validate_bundle(bundle, manifest)
        bundles.append(bundle)
    return Corpus(manifest, bundles)


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------


def _default_features():
    return [
        FeatureDecl("allosaurus", SEQUENTIAL, 32),
        FeatureDecl("wav2vec", SEQUENTIAL, 32),
        FeatureDecl("ge2e", VECTOR, 64),
        FeatureDecl("byol", VECTOR, 64),
        FeatureDecl("mfcc", VECTOR, 64),
    ]


def _default_informative():
    return {"english": ["wav2vec"], "german": ["byol"], "french": ["allosaurus"]}


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic multi-domain corpus.

    In domain k, each feature listed in ``informative[k]`` carries a class
    pattern (a per-(domain, feature, class) mean direction of norm
    ``signal`` under unit-variance noise of scale ``noise``).  ``signal`` is
    either one number or a mapping feature name -> number (missing names
    fall back to 3.0).  A feature that
    is informative somewhere else but not in k carries, when ``distractors``
    is on, the pattern of a *random* class of that other domain: structured
    but unrelated to the label.  Remaining features are pure noise.  Vector
    features share a fixed offset of norm ``offset`` so that gates without a
    bias term can express a constant preference.
    """

    domains: dict = field(default_factory=lambda: {d: LABEL_SETS[d][:4] for d in ("english", "german", "french")})
    features: list = field(default_factory=_default_features)
    informative: dict = field(default_factory=_default_informative)
    samples_per_class: int = 40
    seq_len: tuple = (20, 40)
    signal: float | dict = 3.0
    noise: float = 1.0
    offset: float = 4.0
    distractors: bool = True
    seed: int = 0

    def validate(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names")
        for f in self.features:
            if f.dim < 1:
                raise ValueError(f"feature {f.name!r}: dim must be positive")
        for domain, labels in self.domains.items():
            if len(labels) < 2:
                raise ValueError(f"domain {domain!r} needs at least two classes")
            if not self.informative.get(domain):
                raise ValueError(f"domain {domain!r} has no informative feature")
            unknown = set(self.informative[domain]) - set(names)
            if unknown:
                raise ValueError(f"domain {domain!r}: unknown informative features {sorted(unknown)}")
        lo, hi = self.seq_len
        if not 1 <= lo <= hi:
            raise ValueError("seq_len must satisfy 1 <= min <= max")
        if isinstance(self.signal, dict):
            unknown = set(self.signal) - set(names)
            if unknown:
                raise ValueError(f"signal: unknown features {sorted(unknown)}")
        if self.samples_per_class < 1 or self.noise <= 0 or any(self.signal_for(n) < 0 for n in names):
            raise ValueError("samples_per_class >= 1, noise > 0 and signal >= 0 required")

    def signal_for(self, name):
        if isinstance(self.signal, dict):
            return float(self.signal.get(name, 3.0))
        return float(self.signal)

    def to_dict(self):
        return {
            "domains": {d: list(v) for d, v in self.domains.items()},
            "features": [{"name": f.name, "kind": f.kind, "dim": f.dim} for f in self.features],
            "informative": {d: list(v) for d, v in self.informative.items()},
            "samples_per_class": self.samples_per_class,
            "seq_len": list(self.seq_len),
            "signal": dict(self.signal) if isinstance(self.signal, dict) else self.signal,
            "noise": self.noise,
            "offset": self.offset,
            "distractors": self.distractors,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "features" in data:
            data["features"] = [FeatureDecl(f["name"], f["kind"], int(f["dim"])) for f in data["features"]]
        if "seq_len" in data:
            data["seq_len"] = tuple(data["seq_len"])
        return cls(**data)


def _unit(rng, dim):
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def generate_synthetic(spec):
    """Build a deterministic in-memory corpus from ``spec``.

    Values are rounded to float32 so the corpus survives a save/load round
    trip bit-for-bit.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    feats = spec.features
    means = {}
    for domain, labels in spec.domains.items():
        for f in feats:
            for label in labels:
                means[domain, f.name, label] = spec.signal_for(f.name) * _unit(rng, f.dim)
    offsets = {f.name: spec.offset * _unit(rng, f.dim) for f in feats if f.kind == VECTOR}
    owners = {f.name: [d for d in spec.domains if f.name in spec.informative[d]] for f in feats}

    bundles = []
    for domain, labels in spec.domains.items():
        for label in labels:
            for i in range(spec.samples_per_class):
                length = int(rng.integers(spec.seq_len[0], spec.seq_len[1] + 1))
                phase = rng.uniform(0, 2 * np.pi)
                features = {}
                for f in feats:
                    if f.name in spec.informative[domain]:
                        mean = means[domain, f.name, label]
                    elif spec.distractors and owners[f.name]:
                        other = owners[f.name][int(rng.integers(len(owners[f.name])))]
                        other_labels = spec.domains[other]
                        mean = means[other, f.name, other_labels[int(rng.integers(len(other_labels)))]]
                    else:
                        mean = np.zeros(f.dim)
                    if f.kind == SEQUENTIAL:
                        t = np.arange(length)[:, None]
                        envelope = 1.0 + 0.5 * np.sin(2 * np.pi * t / max(length, 2) + phase)
                        value = envelope * mean + spec.noise * rng.normal(size=(length, f.dim))
                    else:
                        value = offsets[f.name] + mean + spec.noise * rng.normal(size=f.dim)
                    features[f.name] = value.astype(np.float32).astype(np.float64)
                bundles.append(FeatureBundle(f"{domain}-{label}-{i:04d}", domain, label, features))
    manifest = CorpusManifest(
        {d: list(v) for d, v in spec.domains.items()},
        [FeatureDecl(f.name, f.kind, f.dim) for f in feats],
    )
    return Corpus(manifest, bundles)


def corpus_digest(corpus):
    """Stable content hash of a corpus (for determinism checks)."""
    h = hashlib.sha256()
    kinds = {f.name: f.kind for f in corpus.manifest.features}
    for bundle in corpus.bundles:
        h.update(encode_bundle(bundle, kinds))
    return h.hexdigest()


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
