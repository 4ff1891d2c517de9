"""Sequence transduction engine for high-dimensional binary sequences.

Core pieces: frame-level estimators (``estimators``), the recurrent
conditional model and its exact-gradient trainer (``transducer``),
global-mode search (``inference``), synthetic corpora and scoring
(``dataeval``), file formats (``modelio``), an HTTP service
(``service``) and a command-line client (``cli``).
"""

from .dataeval import CorpusSpec, NoiseSpec, PianoRoll, frame_accuracy
from .estimators import EstimatorGradient, EstimatorParams
from .inference import BeamConfig, RankedConfig, beam_search, enumerate_independent, greedy_decode
from .transducer import (
    SequencePair,
    TrainConfig,
    TransducerParams,
    init_transducer_params,
    sequence_log_likelihood,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BeamConfig",
    "CorpusSpec",
    "EstimatorGradient",
    "EstimatorParams",
    "NoiseSpec",
    "PianoRoll",
    "RankedConfig",
    "SequencePair",
    "TrainConfig",
    "TransducerParams",
    "beam_search",
    "enumerate_independent",
    "frame_accuracy",
    "greedy_decode",
    "init_transducer_params",
    "sequence_log_likelihood",
    "train",
    "__version__",
]
