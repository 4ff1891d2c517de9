"""Synthetic transcription corpora, feature corruption, and scoring.

Targets are piano-rolls generated by a small voice model: a fixed number
of voices hold pitches for geometrically distributed durations and move
by small Markov steps when they transition.  Features are a linear
dictionary rendering of the roll plus optional Gaussian background
noise.  Test-time corruption offers white noise, pink noise, masking
(zeroed segments) and segment-wise pitch shifts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import DimensionError
from .transducer import SequencePair

NOISE_KINDS = ("white", "pink", "masking", "pitch_shift")

# expected clean-gap length between masked segments, in units of the
# masked-segment mean; the first onset is uniform so at least one
# segment lands inside the sequence
MASKING_GAP_FACTOR = 3.0
# expected frames per constant-offset segment for pitch_shift noise
PITCH_SHIFT_SEGMENT_FRAMES = 8.0


@dataclass(eq=False)
class PianoRoll:
    """Binary pitch-activity grid, one row per frame."""

    num_pitches: int
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 2 or frames.shape[1] != self.num_pitches:
            raise DimensionError(
                f"frames must be (T, {self.num_pitches}), got {frames.shape}"
            )
        if frames.shape[0] < 1:
            raise DimensionError("a piano-roll needs at least one frame")
        if not np.all((frames == 0) | (frames == 1)):
            raise ValueError("frames must be binary")
        self.frames = frames.astype(np.uint8)

    @property
    def length(self) -> int:
        return self.frames.shape[0]


@dataclass(eq=False)
class CorpusSpec:
    num_pitches: int
    feature_dim: int
    num_sequences: int
    seq_len: int
    dictionary: np.ndarray  # (feature_dim, num_pitches), unit-norm columns
    polyphony: int = 1
    note_hold: float = 4.0  # expected frames a voice holds one pitch
    background_noise: float = 0.0  # feature noise std
    seed: int = 0

    def __post_init__(self):
        if self.num_pitches < 1 or self.feature_dim < 1:
            raise ValueError("num_pitches and feature_dim must be positive")
        if self.num_sequences < 1 or self.seq_len < 1:
            raise ValueError("num_sequences and seq_len must be positive")
        if not 1 <= self.polyphony <= self.num_pitches:
            raise ValueError("polyphony must lie in [1, num_pitches]")
        if self.note_hold < 1.0:
            raise ValueError("note_hold must be at least one frame")
        if self.background_noise < 0.0:
            raise ValueError("background_noise must be nonnegative")
        d = np.asarray(self.dictionary, dtype=float)
        if d.shape != (self.feature_dim, self.num_pitches):
            raise DimensionError(
                f"dictionary must be ({self.feature_dim}, {self.num_pitches}), got {d.shape}"
            )
        norms = np.linalg.norm(d, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ValueError("dictionary columns must have unit norm")
        self.dictionary = d


@dataclass
class NoiseSpec:
    kind: str
    level: float  # white/pink: SNR in dB; masking: mean frames; pitch_shift: offset std
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}, expected one of {NOISE_KINDS}")
        if not np.isfinite(self.level):
            raise ValueError("noise level must be a finite real")
        if self.level < 0.0:
            raise ValueError("noise level must be nonnegative")


def random_dictionary(feature_dim: int, num_pitches: int, seed: int = 0) -> np.ndarray:
    """Gaussian dictionary with unit-norm columns."""
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((feature_dim, num_pitches))
    return d / np.linalg.norm(d, axis=0)


def identity_dictionary(num_pitches: int) -> np.ndarray:
    return np.eye(num_pitches)


def _markov_move(pitch: int, occupied: set[int], num_pitches: int, rng) -> int:
    """New pitch for a transitioning voice: a small step when possible,
    any free pitch otherwise, staying put only when fully blocked."""
    near = [
        pitch + d
        for d in (-2, -1, 1, 2)
        if 0 <= pitch + d < num_pitches and (pitch + d) not in occupied
    ]
    if near:
        return int(rng.choice(near))
    free = [q for q in range(num_pitches) if q != pitch and q not in occupied]
    if free:
        return int(rng.choice(free))
    return pitch


def generate_corpus(spec: CorpusSpec) -> tuple[list[SequencePair], list[PianoRoll]]:
    """Sample aligned (features, roll) sequences from the voice model.

    Deterministic given spec.seed.  Exactly spec.polyphony distinct
    pitches are active in every frame; each voice transitions with
    probability 1/note_hold per frame, giving geometric hold lengths.
    The rolls and the background noise come from independent streams, so
    changing background_noise leaves the target rolls untouched.
    """
    rng = np.random.default_rng([spec.seed, 0])
    noise_rng = np.random.default_rng([spec.seed, 1])
    pairs: list[SequencePair] = []
    rolls: list[PianoRoll] = []
    p_move = 1.0 / spec.note_hold
    for _ in range(spec.num_sequences):
        voices = list(rng.choice(spec.num_pitches, size=spec.polyphony, replace=False))
        frames = np.zeros((spec.seq_len, spec.num_pitches))
        frames[0, voices] = 1.0
        for t in range(1, spec.seq_len):
            for i in range(len(voices)):
                if rng.random() < p_move:
                    occupied = set(voices) - {voices[i]}
                    voices[i] = _markov_move(voices[i], occupied, spec.num_pitches, rng)
            frames[t, voices] = 1.0
        features = frames @ spec.dictionary.T
        if spec.background_noise > 0.0:
            features = features + spec.background_noise * noise_rng.standard_normal(
                features.shape
            )
        pairs.append(SequencePair(inputs=features, targets=frames))
        rolls.append(PianoRoll(spec.num_pitches, frames))
    return pairs, rolls


def _scaled_to_snr(x: np.ndarray, raw: np.ndarray, snr_db: float) -> np.ndarray:
    """Add raw noise rescaled so 10 log10(|x|^2 / |noise|^2) == snr_db."""
    signal_power = float((x**2).sum())
    raw_power = float((raw**2).sum())
    if signal_power == 0.0 or raw_power == 0.0:
        return x.copy()
    target_power = signal_power / 10.0 ** (snr_db / 10.0)
    return x + raw * np.sqrt(target_power / raw_power)


def apply_noise(x, spec: NoiseSpec) -> np.ndarray:
    """Corrupted copy of a (T, D) feature matrix; deterministic given
    spec.seed and never mutates the input."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise DimensionError("features must be a (T, D) array with T >= 1")
    rng = np.random.default_rng(spec.seed)
    frames, dim = x.shape
    if spec.kind == "white":
        return _scaled_to_snr(x, rng.standard_normal(x.shape), spec.level)
    if spec.kind == "pink":
        raw = rng.standard_normal(x.shape)
        spectrum = np.fft.rfft(raw, axis=0)
        bins = np.arange(spectrum.shape[0], dtype=float)
        shaping = np.zeros_like(bins)
        shaping[1:] = 1.0 / np.sqrt(bins[1:])  # power falls off as 1/f, DC removed
        shaped = np.fft.irfft(spectrum * shaping[:, None], n=frames, axis=0)
        return _scaled_to_snr(x, shaped, spec.level)
    if spec.kind == "masking":
        out = x.copy()
        if spec.level == 0.0:
            return out
        t = int(rng.integers(frames))
        while t < frames:
            seg = max(1, int(np.ceil(rng.exponential(spec.level))))
            out[t : t + seg] = 0.0
            gap = max(1, int(np.ceil(rng.exponential(MASKING_GAP_FACTOR * spec.level))))
            t += seg + gap
        return out
    # pitch_shift: constant integer cyclic row offset per segment
    out = x.copy()
    if spec.level == 0.0:
        return out
    t = 0
    while t < frames:
        seg = max(1, int(np.ceil(rng.exponential(PITCH_SHIFT_SEGMENT_FRAMES))))
        offset = int(np.rint(rng.normal(0.0, spec.level)))
        out[t : t + seg] = np.roll(x[t : t + seg], offset, axis=1)
        t += seg
    return out


def frame_counts(predicted: PianoRoll, truth: PianoRoll) -> tuple[int, int, int]:
    """True positives, false positives and false negatives pooled over
    all frames."""
    if predicted.frames.shape != truth.frames.shape:
        raise DimensionError(
            f"roll shapes differ: {predicted.frames.shape} vs {truth.frames.shape}"
        )
    p = predicted.frames.astype(bool)
    g = truth.frames.astype(bool)
    tp = int(np.logical_and(p, g).sum())
    fp = int(np.logical_and(p, ~g).sum())
    fn = int(np.logical_and(~p, g).sum())
    return tp, fp, fn


def frame_accuracy(predicted: PianoRoll, truth: PianoRoll) -> float:
    """Pooled TP / (TP + FP + FN); defined as 1.0 when both rolls are
    entirely silent."""
    tp, fp, fn = frame_counts(predicted, truth)
    denom = tp + fp + fn
    return 1.0 if denom == 0 else tp / denom
