"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class Dims(BaseModel):
    N: int
    H: int
    R: int
    D: int


class ParamArrays(BaseModel):
    visible_bias: list[float]
    hidden_bias: list[float]
    weights: list[list[float]]
    rec_to_hidden: list[list[float]]
    in_to_hidden: list[list[float]]
    rec_to_visible: list[list[float]]
    in_to_visible: list[list[float]]
    out_to_rec: list[list[float]]
    rec_to_rec: list[list[float]]
    in_to_rec: list[list[float]]
    rec_bias: list[float]


class TrainingMeta(BaseModel):
    seed: int | None = None
    epochs: int | None = None
    final_objective: float | None = None


class ModelPayload(BaseModel):
    """Mirrors the on-disk model JSON document."""

    format_version: int = 1
    model_kind: str = "io-rnn-nade"
    dims: Dims
    params: ParamArrays
    training: dict = Field(default_factory=dict)


class RollPayload(BaseModel):
    num_pitches: int
    frames: list[list[int]]  # active pitch indices per frame


class FeaturesPayload(BaseModel):
    feature_dim: int
    frames: list[list[float]]


class SequencePayload(BaseModel):
    features: FeaturesPayload
    roll: RollPayload


class GenRequest(BaseModel):
    num_pitches: int
    feature_dim: int
    num_sequences: int
    seq_len: int
    polyphony: int = 1
    note_hold: float = 4.0
    background_noise: float = 0.0
    dictionary: str = "random"  # "random" or "identity"
    seed: int = 0


class GenResponse(BaseModel):
    sequences: list[SequencePayload]


class TrainSettings(BaseModel):
    learning_rate: float = 0.1
    epochs: int = 10
    alpha: float = 0.0
    beta: float = 0.0
    teacher_noise: float = 0.0
    gradient_clip: float | None = None
    seed: int = 0


class TrainRequest(BaseModel):
    corpus: list[SequencePayload]
    hidden_size: int
    recurrent_size: int
    model_kind: str = "io-rnn-nade"
    init_seed: int = 0
    train: TrainSettings = Field(default_factory=TrainSettings)


class TrainResponse(BaseModel):
    model: ModelPayload
    history: list[float]


class BeamSettings(BaseModel):
    width: int = 1
    branch: int = 1
    samples: int | None = None
    restart_period: int | None = None
    prefix_lag: int | None = None
    seed: int = 0


class TranscribeRequest(BaseModel):
    model: ModelPayload
    features: FeaturesPayload
    beam: BeamSettings = Field(default_factory=BeamSettings)


class TranscribeResponse(BaseModel):
    roll: RollPayload
    logp: float


class NoiseSettings(BaseModel):
    kind: str
    level: float
    seed: int = 0


class EvaluateRequest(BaseModel):
    """Either compare two rolls directly, or transcribe a corpus with a
    model (optionally corrupting the features first) and score it."""

    predicted_roll: RollPayload | None = None
    truth_roll: RollPayload | None = None
    model: ModelPayload | None = None
    sequences: list[SequencePayload] | None = None
    noise: NoiseSettings | None = None
    beam: BeamSettings = Field(default_factory=BeamSettings)


class SequenceScore(BaseModel):
    index: int
    accuracy: float
    logp: float


class EvaluateResponse(BaseModel):
    accuracy: float
    per_sequence: list[SequenceScore] = Field(default_factory=list)


class EnumerateRequest(BaseModel):
    probs: list[float]
    k: int = 10


class RankedItem(BaseModel):
    logp: float
    bits: list[int]


class EnumerateResponse(BaseModel):
    items: list[RankedItem]


class GradCheckRequest(BaseModel):
    """Check a provided model or a randomly initialised one."""

    model: ModelPayload | None = None
    num_pitches: int = 3
    feature_dim: int = 2
    hidden_size: int = 3
    recurrent_size: int = 2
    seq_len: int = 4
    alpha: float = 0.0
    beta: float = 0.0
    seed: int = 0


class GradCheckResponse(BaseModel):
    max_rel_error: float
