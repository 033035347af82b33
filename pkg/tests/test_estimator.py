import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mdser.data import FeatureBundle
from mdser.estimator import MultiDomainSER, check_bundles, infer_manifest


@pytest.fixture(scope="module")
def fitted(tiny_corpus):
    return MultiDomainSER(variant="MMoE", epochs=3, batch_size=8, d_common=4).fit(tiny_corpus.bundles)


class TestChecks:
    def test_rejects_non_bundles(self):
        with pytest.raises(TypeError):
            check_bundles(np.zeros((3, 2)))
        with pytest.raises(ValueError, match="empty"):
            check_bundles([])

    def test_y_replaces_labels(self, tiny_corpus):
        bs = tiny_corpus.bundles[:3]
        out = check_bundles(bs, ["Happy"] * 3)
        assert [b.label for b in out] == ["Happy"] * 3 and bs[0].label == "Neutral"
        with pytest.raises(ValueError, match="labels"):
            check_bundles(bs, ["Happy"])

    def test_layout_mismatch(self, tiny_corpus):
        a = tiny_corpus.bundles[0]
        b = FeatureBundle("odd", a.domain, a.label, dict(a.features, ge2e=np.zeros(2)))
        with pytest.raises(ValueError, match="odd"):
            check_bundles([a, b])

    def test_infer_manifest(self, tiny_corpus):
        m = infer_manifest(tiny_corpus.bundles)
        assert [f.name for f in m.features] == ["wav2vec", "ge2e", "byol"]
        assert m.features[0].kind == "sequential"
        assert sorted(m.domains["german"]) == ["Fear", "Neutral", "Sad"]
        with pytest.raises(ValueError, match="not in domain"):
            infer_manifest(tiny_corpus.bundles, {"english": ["Neutral"], "german": ["Neutral", "Sad", "Fear"]})


class TestEstimator:
    def test_params_and_clone(self):
        est = MultiDomainSER(variant="SB", epochs=4)
        assert clone(est).get_params()["epochs"] == 4
        assert est.set_params(lr=0.01).lr == 0.01

    def test_not_fitted(self, tiny_corpus):
        with pytest.raises(NotFittedError):
            MultiDomainSER().predict(tiny_corpus.bundles[:2])

    def test_fitted_attributes(self, fitted):
        assert list(fitted.classes_) == ["Neutral", "Happy", "Anger", "Sad", "Fear"]
        assert fitted.n_features_in_ == 3
        assert fitted.train_result_.best_epoch >= 1

    def test_predict_within_domain(self, fitted, tiny_corpus):
        pred = fitted.predict(tiny_corpus.bundles)
        for b, p in zip(tiny_corpus.bundles, pred):
            assert p in tiny_corpus.manifest.domains[b.domain]

    def test_proba_rows(self, fitted, tiny_corpus):
        proba = fitted.predict_proba(tiny_corpus.bundles)
        assert proba.shape == (48, 5)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        german = [i for i, b in enumerate(tiny_corpus.bundles) if b.domain == "german"]
        assert not proba[german][:, [1, 2]].any()
        pred = fitted.predict(tiny_corpus.bundles)
        assert list(fitted.classes_[proba.argmax(axis=1)]) == list(pred)

    def test_transform_and_score(self, fitted, tiny_corpus):
        assert fitted.transform(tiny_corpus.bundles).shape == (48, 4)
        acc = fitted.score(tiny_corpus.bundles)
        assert acc == np.mean(fitted.predict(tiny_corpus.bundles) == [b.label for b in tiny_corpus.bundles])

    def test_unseen_domain(self, fitted, tiny_corpus):
        b = tiny_corpus.bundles[0]
        with pytest.raises(ValueError, match="not seen"):
            fitted.predict([FeatureBundle("x", "french", "Neutral", b.features)])

    def test_deterministic(self, tiny_corpus):
        a = MultiDomainSER(variant="Ours", epochs=2, batch_size=8, d_common=4).fit(tiny_corpus.bundles)
        b = MultiDomainSER(variant="Ours", epochs=2, batch_size=8, d_common=4).fit(tiny_corpus.bundles)
        np.testing.assert_array_equal(a.transform(tiny_corpus.bundles), b.transform(tiny_corpus.bundles))

    def test_base_variant_proba(self, tiny_corpus):
        est = MultiDomainSER(variant="Base", epochs=1, batch_size=8).fit(tiny_corpus.bundles)
        np.testing.assert_allclose(est.predict_proba(tiny_corpus.bundles).sum(axis=1), 1.0, atol=1e-12)

    def test_bad_validation_fraction(self, tiny_corpus):
        with pytest.raises(ValueError, match="validation_fraction"):
            MultiDomainSER(validation_fraction=1.0).fit(tiny_corpus.bundles)
