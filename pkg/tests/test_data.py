import json
import struct
from collections import Counter

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import cross_val_score

from conftest import tiny_synthetic
from mdser.data import (
    LABEL_SETS,
    UNION_LABELS,
    CorpusError,
    FeatureBundle,
    SyntheticSpec,
    corpus_digest,
    decode_bundle,
    encode_bundle,
    generate_synthetic,
    load_corpus,
    read_bundle,
    save_corpus,
    validate_bundle,
    write_bundle,
)
from mdser.encoder import SEQUENTIAL, VECTOR


@pytest.fixture(scope="module")
def default_corpus():
    return generate_synthetic(SyntheticSpec())


def pooled(bundle, name):
    value = bundle.features[name]
    return value.mean(axis=0) if value.ndim == 2 else value


def sample_bundle(rng):
    feats = {"seq": rng.normal(size=(3, 2)).astype(np.float32).astype(np.float64), "vec": np.array([1.5, -2.0])}
    return FeatureBundle("utt-1", "german", "Sad", feats)


class TestBundleFormat:
    def test_round_trip(self, rng, tmp_path):
        b = sample_bundle(rng)
        write_bundle(tmp_path / "x.serb", b)
        back = read_bundle(tmp_path / "x.serb")
        assert (back.utterance_id, back.domain, back.label) == ("utt-1", "german", "Sad")
        for k in b.features:
            np.testing.assert_array_equal(back.features[k], b.features[k])

    def test_byte_layout(self):
        b = FeatureBundle("u", "d", "L", {"v": np.array([1.0, 2.0])})
        raw = encode_bundle(b)
        expected = (
            b"SERB"
            + struct.pack("<H", 1)
            + b"\x01\x00u\x01\x00d\x01\x00L"
            + struct.pack("<H", 1)
            + b"\x01\x00v"
            + b"\x01"
            + struct.pack("<I", 2)
            + np.array([1.0, 2.0], "<f4").tobytes()
        )
        assert raw == expected

    def test_sequential_header(self, rng):
        raw = encode_bundle(sample_bundle(rng), {"seq": SEQUENTIAL, "vec": VECTOR})
        idx = raw.index(b"seq") + 3
        assert raw[idx] == 0 and struct.unpack("<II", raw[idx + 1 : idx + 9]) == (3, 2)

    @pytest.mark.parametrize(
        "mutate, match",
        [
            (lambda r: b"XXXX" + r[4:], "magic"),
            (lambda r: r[:4] + struct.pack("<H", 9) + r[6:], "version"),
            (lambda r: r[:-3], "truncated"),
            (lambda r: r + b"\x00", "trailing"),
        ],
    )
    def test_corruption(self, rng, mutate, match):
        with pytest.raises(CorpusError, match=match):
            decode_bundle(mutate(encode_bundle(sample_bundle(rng))))


class TestCorpusIO:
    def test_round_trip_is_bit_exact(self, tiny_corpus, tmp_path):
        save_corpus(tiny_corpus, tmp_path / "c")
        back = load_corpus(tmp_path / "c")
        assert back.manifest == tiny_corpus.manifest
        assert corpus_digest(back) == corpus_digest(tiny_corpus)
        assert load_corpus(tmp_path / "c" / "manifest.json").manifest == tiny_corpus.manifest

    def test_manifest_text(self, tiny_corpus, tmp_path):
        save_corpus(tiny_corpus, tmp_path / "c")
        data = json.loads((tmp_path / "c" / "manifest.json").read_text())
        assert data["format"] == "mdser-corpus" and data["version"] == 1
        assert len(data["utterances"]) == len(tiny_corpus.bundles)
        assert data["features"][0] == {"name": "wav2vec", "kind": "sequential", "dim": 4}

    def _rewrite_first(self, root, fn):
        data = json.loads((root / "manifest.json").read_text())
        path = root / data["utterances"][0]["file"]
        b = read_bundle(path)
        fn(b)
        write_bundle(path, b)
        return data["utterances"][0]["id"]

    def test_missing_feature_named(self, tiny_corpus, tmp_path):
        root = save_corpus(tiny_corpus, tmp_path / "c")
        utt = self._rewrite_first(root, lambda b: b.features.pop("byol"))
        with pytest.raises(CorpusError, match=f"{utt}.*byol"):
            load_corpus(root)

    def test_dim_mismatch(self, tiny_corpus, tmp_path):
        root = save_corpus(tiny_corpus, tmp_path / "c")
        self._rewrite_first(root, lambda b: b.features.update(ge2e=np.zeros(3)))
        with pytest.raises(CorpusError, match="ge2e.*shape"):
            load_corpus(root)

    def test_unknown_label(self, tmp_path, rng):
        spec = tiny_synthetic(domains={"german": LABEL_SETS["german"], "english": ["Neutral", "Happy"]})
        spec.informative = {"german": ["byol"], "english": ["wav2vec"]}
        root = save_corpus(generate_synthetic(spec), tmp_path / "c")
        utt = self._rewrite_first(root, lambda b: setattr(b, "label", "Surprise"))
        with pytest.raises(CorpusError, match=f"{utt}.*Surprise"):
            load_corpus(root)

    def test_missing_files(self, tiny_corpus, tmp_path):
        with pytest.raises(CorpusError, match="not found"):
            load_corpus(tmp_path / "nowhere")
        root = save_corpus(tiny_corpus, tmp_path / "c")
        next((root / "bundles").iterdir()).unlink()
        with pytest.raises(CorpusError, match="missing"):
            load_corpus(root)

    def test_bad_manifest(self, tmp_path):
        (tmp_path / "manifest.json").write_text('{"format": "other"}')
        with pytest.raises(CorpusError, match="format"):
            load_corpus(tmp_path)
        (tmp_path / "manifest.json").write_text("{ nope")
        with pytest.raises(CorpusError, match="parse"):
            load_corpus(tmp_path)

    def test_validate_rejects_empty_and_nan(self, tiny_corpus):
        b = tiny_corpus.bundles[0]
        empty = FeatureBundle("e", b.domain, b.label, dict(b.features, wav2vec=np.zeros((0, 4))))
        with pytest.raises(CorpusError, match="empty"):
            validate_bundle(empty, tiny_corpus.manifest)
        nan = FeatureBundle("n", b.domain, b.label, dict(b.features, ge2e=np.full(5, np.nan)))
        with pytest.raises(CorpusError, match="non-finite"):
            validate_bundle(nan, tiny_corpus.manifest)
        with pytest.raises(CorpusError, match="domain"):
            validate_bundle(FeatureBundle("x", "klingon", "Happy", b.features), tiny_corpus.manifest)


class TestSynthetic:
    def test_every_bundle_validates(self, tiny_corpus):
        for b in tiny_corpus.bundles:
            validate_bundle(b, tiny_corpus.manifest)

    def test_class_balance(self, tiny_corpus):
        counts = Counter((b.domain, b.label) for b in tiny_corpus.bundles)
        assert set(counts.values()) == {8} and len(counts) == 6

    def test_seq_lengths(self, tiny_corpus):
        lengths = {len(b.features["wav2vec"]) for b in tiny_corpus.bundles}
        assert min(lengths) >= 3 and max(lengths) <= 6

    def test_deterministic(self):
        a, b = generate_synthetic(tiny_synthetic()), generate_synthetic(tiny_synthetic())
        assert corpus_digest(a) == corpus_digest(b)
        assert corpus_digest(a) != corpus_digest(generate_synthetic(tiny_synthetic(seed=4)))

    def test_default_shape(self, default_corpus):
        decls = default_corpus.manifest.features
        assert [f.kind for f in decls].count(SEQUENTIAL) == 2 and len(decls) == 5
        assert len(default_corpus.bundles) == 3 * 4 * 40
        assert all(set(v) <= set(UNION_LABELS) for v in default_corpus.manifest.domains.values())

    def test_nearest_centroid_on_strong_signal(self):
        corpus = generate_synthetic(tiny_synthetic(signal=12.0, samples_per_class=30))
        bs = [b for b in corpus.bundles if b.domain == "german"]
        rng = np.random.default_rng(0)
        order = rng.permutation(len(bs))
        train, test = [bs[i] for i in order[:45]], [bs[i] for i in order[45:]]
        cents = {lab: np.mean([b.features["byol"] for b in train if b.label == lab], axis=0) for lab in {b.label for b in train}}
        hits = [min(cents, key=lambda lab: np.linalg.norm(b.features["byol"] - cents[lab])) == b.label for b in test]
        assert np.mean(hits) > 0.95

    def test_no_signal_is_chance(self):
        corpus = generate_synthetic(tiny_synthetic(signal=0.0, samples_per_class=40))
        bs = [b for b in corpus.bundles if b.domain == "german"]
        X = np.array([np.concatenate([pooled(b, f) for f in ("wav2vec", "ge2e", "byol")]) for b in bs])
        y = [b.label for b in bs]
        acc = cross_val_score(LogisticRegression(max_iter=2000), X, y, cv=5).mean()
        assert acc < 1 / 3 + 0.15

    def test_probe_separates_informative_features(self, default_corpus):
        spec = SyntheticSpec()
        for domain, bs in default_corpus.by_domain().items():
            y = [b.label for b in bs]
            acc = {}
            for name in default_corpus.manifest.feature_names:
                X = np.array([pooled(b, name) for b in bs])
                acc[name] = cross_val_score(LogisticRegression(max_iter=2000), X, y, cv=5).mean()
            best_other = max(v for k, v in acc.items() if k not in spec.informative[domain])
            for name in spec.informative[domain]:
                assert acc[name] - best_other >= 0.20, (domain, acc)

    @pytest.mark.parametrize(
        "kw",
        [
            dict(informative={"english": [], "german": ["byol"]}),
            dict(informative={"english": ["nope"], "german": ["byol"]}),
            dict(seq_len=(0, 3)),
            dict(signal={"nope": 1.0}),
            dict(noise=0.0),
            dict(domains={"english": ["Neutral"], "german": ["Neutral", "Sad"]}),
        ],
    )
    def test_invalid_spec(self, kw):
        with pytest.raises(ValueError):
            generate_synthetic(tiny_synthetic(**kw))

    def test_per_feature_signal(self):
        spec = tiny_synthetic(signal={"byol": 0.0})
        assert spec.signal_for("byol") == 0.0 and spec.signal_for("wav2vec") == 3.0

    def test_spec_round_trip(self):
        spec = tiny_synthetic(signal={"byol": 2.0})
        assert SyntheticSpec.from_dict(spec.to_dict()) == spec
