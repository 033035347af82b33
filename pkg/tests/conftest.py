import numpy as np
import pytest

from mdser.data import FeatureDecl, SyntheticSpec, generate_synthetic
from mdser.encoder import SEQUENTIAL, VECTOR, EncoderConfig, FeatureSpec
from mdser.models import ModelSpec, TowerSpec

TINY_ENCODER = EncoderConfig(conv_widths=(3,), conv_filters=3, lstm_hidden=3, lstm_layers=1, attention_dim=4)


def tiny_synthetic(**overrides):
    """Two domains, three small features; trains in well under a second."""
    kw = dict(
        domains={"english": ["Neutral", "Happy", "Anger"], "german": ["Neutral", "Sad", "Fear"]},
        features=[
            FeatureDecl("wav2vec", SEQUENTIAL, 4),
            FeatureDecl("ge2e", VECTOR, 5),
            FeatureDecl("byol", VECTOR, 6),
        ],
        informative={"english": ["wav2vec"], "german": ["byol"]},
        samples_per_class=8,
        seq_len=(3, 6),
        seed=3,
    )
    kw.update(overrides)
    return SyntheticSpec(**kw)


def tiny_spec(variant, manifest, d_common=4, dropout=0.0, hidden=(5,)):
    feats = [
        FeatureSpec(f.name, f.kind, f.dim, TINY_ENCODER if f.kind == SEQUENTIAL else None) for f in manifest.features
    ]
    acts = ["tanh"] * len(hidden)
    if variant == "Base":
        towers = {"shared": TowerSpec(list(hidden), acts, dropout, 8)}
    else:
        towers = {d: TowerSpec(list(hidden), acts, dropout, len(v)) for d, v in manifest.domains.items()}
    return ModelSpec(variant, feats, dict(manifest.domains), towers, d_common=d_common)


@pytest.fixture(scope="session")
def tiny_corpus():
    return generate_synthetic(tiny_synthetic())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config_dict(**overrides):
    """A config that trains the tiny corpus in about a second per seed."""
    data = {
        "variant": "MMoE",
        "synthetic": tiny_synthetic(samples_per_class=12).to_dict(),
        "preset": "desk",
        "encoders": {"wav2vec": TINY_ENCODER.to_dict()},
        "d_common": 4,
        "towers": {d: {"hidden": [5], "activations": ["tanh"]} for d in ("english", "german")},
        "epochs": 2,
        "batch_size": 8,
        "seeds": [1],
    }
    data.update(overrides)
    return data


@pytest.fixture
def tiny_config_file(tmp_path):
    import yaml

    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(tiny_config_dict()))
    return path


# one "[n] name: PASS|FAIL detail" line per acceptance check, repeated in the
# terminal summary so the verdicts survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[1 : s.index("]")])):
            terminalreporter.write_line(line)
