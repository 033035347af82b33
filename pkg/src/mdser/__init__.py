"""Multi-domain speech emotion recognition on precomputed features.

A small numpy autograd engine (:mod:`mdser.tensor`) drives sequence
encoders, softmax feature gates, per-domain connectivity search and a
contrastive auxiliary loss.  See :mod:`mdser.cli` for the command line and
:class:`mdser.estimator.MultiDomainSER` for the estimator interface.
"""

from .config import ConfigError, ExperimentConfig, parse_config
from .data import Corpus, FeatureBundle, SyntheticSpec, generate_synthetic, load_corpus, save_corpus
from .estimator import MultiDomainSER
from .models import ModelSpec, build_model, load_checkpoint, save_checkpoint
from .tensor import Tensor, backward
from .training import TrainSchedule, evaluate, fit

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Corpus",
    "ExperimentConfig",
    "FeatureBundle",
    "ModelSpec",
    "MultiDomainSER",
    "SyntheticSpec",
    "Tensor",
    "TrainSchedule",
    "backward",
    "build_model",
    "evaluate",
    "fit",
    "generate_synthetic",
    "load_checkpoint",
    "load_corpus",
    "parse_config",
    "save_checkpoint",
    "save_corpus",
]
