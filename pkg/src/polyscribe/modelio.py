"""File formats: model JSON, piano-roll JSON, feature JSON, corpus
directories, loss CSV and flat key-value config files.

Floats are serialised as shortest-round-trip decimals (at most 17
significant digits), so a save/load cycle reproduces every parameter
bit for bit.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Any

import numpy as np

from .dataeval import PianoRoll
from .estimators import EstimatorParams
from .transducer import SequencePair, TransducerParams

MODEL_FORMAT_VERSION = 1
MODEL_KINDS = ("io-rnn-nade", "io-rnn")


class ModelFileError(ValueError):
    """Base class for model-file problems."""


class ModelVersionError(ModelFileError):
    """Unsupported format_version."""


class ModelDimensionError(ModelFileError):
    """A stored array disagrees with the declared dimensions."""


class ModelParseError(ModelFileError):
    """The file is not a well-formed model document."""


_PARAM_SHAPES = {
    "visible_bias": ("N",),
    "hidden_bias": ("H",),
    "weights": ("H", "N"),
    "rec_to_hidden": ("H", "R"),
    "in_to_hidden": ("H", "D"),
    "rec_to_visible": ("N", "R"),
    "in_to_visible": ("N", "D"),
    "out_to_rec": ("R", "N"),
    "rec_to_rec": ("R", "R"),
    "in_to_rec": ("R", "D"),
    "rec_bias": ("R",),
}


def write_json(path: str, payload: Any):
    """Canonical JSON to disk: sorted keys, two-space indent, newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def transducer_to_dict(
    params: TransducerParams, model_kind: str = "io-rnn-nade", training: dict | None = None
) -> dict:
    if model_kind not in MODEL_KINDS:
        raise ModelFileError(f"unknown model_kind {model_kind!r}")
    if model_kind == "io-rnn" and params.estimator.weights.any():
        raise ModelFileError("model_kind 'io-rnn' requires zero estimator weights")
    est = params.estimator
    arrays = {
        "visible_bias": est.visible_bias,
        "hidden_bias": est.hidden_bias,
        "weights": est.weights,
        "rec_to_hidden": params.rec_to_hidden,
        "in_to_hidden": params.in_to_hidden,
        "rec_to_visible": params.rec_to_visible,
        "in_to_visible": params.in_to_visible,
        "out_to_rec": params.out_to_rec,
        "rec_to_rec": params.rec_to_rec,
        "in_to_rec": params.in_to_rec,
        "rec_bias": params.rec_bias,
    }
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "model_kind": model_kind,
        "dims": {
            "N": params.num_outputs,
            "H": params.num_hidden,
            "R": params.num_rec,
            "D": params.num_inputs,
        },
        "params": {name: arr.tolist() for name, arr in arrays.items()},
        "training": dict(training) if training else {},
    }


def _expect_array(raw: Any, shape: tuple[int, ...], name: str) -> np.ndarray:
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"field '{name}' is not a numeric array") from exc
    if arr.shape != shape:
        raise ModelDimensionError(
            f"field '{name}' has shape {arr.shape}, expected {shape}"
        )
    return arr


def transducer_from_dict(data: Any) -> tuple[TransducerParams, str, dict]:
    if not isinstance(data, dict):
        raise ModelParseError("model document must be a JSON object")
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported format_version {version!r}, expected {MODEL_FORMAT_VERSION}"
        )
    kind = data.get("model_kind")
    if kind not in MODEL_KINDS:
        raise ModelParseError(f"unknown model_kind {kind!r}")
    dims = data.get("dims")
    if not isinstance(dims, dict):
        raise ModelParseError("missing 'dims' object")
    sizes = {}
    for axis in ("N", "H", "R", "D"):
        value = dims.get(axis)
        if not isinstance(value, int) or value < 1:
            raise ModelParseError(f"dims.{axis} must be a positive integer")
        sizes[axis] = value
    raw_params = data.get("params")
    if not isinstance(raw_params, dict):
        raise ModelParseError("missing 'params' object")
    arrays = {}
    for name, axes in _PARAM_SHAPES.items():
        if name not in raw_params:
            raise ModelParseError(f"missing parameter field '{name}'")
        shape = tuple(sizes[a] for a in axes)
        arrays[name] = _expect_array(raw_params[name], shape, name)
    if kind == "io-rnn" and arrays["weights"].any():
        raise ModelFileError("model_kind 'io-rnn' requires zero estimator weights")
    est = EstimatorParams(arrays["visible_bias"], arrays["hidden_bias"], arrays["weights"])
    params = TransducerParams(
        estimator=est,
        rec_to_hidden=arrays["rec_to_hidden"],
        in_to_hidden=arrays["in_to_hidden"],
        rec_to_visible=arrays["rec_to_visible"],
        in_to_visible=arrays["in_to_visible"],
        out_to_rec=arrays["out_to_rec"],
        rec_to_rec=arrays["rec_to_rec"],
        in_to_rec=arrays["in_to_rec"],
        rec_bias=arrays["rec_bias"],
    )
    training = data.get("training") or {}
    if not isinstance(training, dict):
        raise ModelParseError("'training' must be an object when present")
    return params, kind, training


def save_model(
    path: str, params: TransducerParams, model_kind: str = "io-rnn-nade", training: dict | None = None
):
    write_json(path, transducer_to_dict(params, model_kind, training))


def load_model(path: str) -> tuple[TransducerParams, str, dict]:
    try:
        data = read_json(path)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"{path}: not valid JSON ({exc})") from exc
    return transducer_from_dict(data)


def roll_to_dict(roll: PianoRoll) -> dict:
    return {
        "num_pitches": roll.num_pitches,
        "frames": [sorted(int(i) for i in np.flatnonzero(frame)) for frame in roll.frames],
    }


def roll_from_dict(data: Any) -> PianoRoll:
    if not isinstance(data, dict) or "num_pitches" not in data or "frames" not in data:
        raise ValueError("roll document needs 'num_pitches' and 'frames'")
    n = data["num_pitches"]
    if not isinstance(n, int) or n < 1:
        raise ValueError("num_pitches must be a positive integer")
    frames = data["frames"]
    if not isinstance(frames, list) or not frames:
        raise ValueError("'frames' must be a nonempty list")
    grid = np.zeros((len(frames), n), dtype=np.uint8)
    for t, active in enumerate(frames):
        for idx in active:
            if not isinstance(idx, int) or not 0 <= idx < n:
                raise ValueError(f"frame {t}: pitch index {idx!r} outside [0, {n})")
            grid[t, idx] = 1
    return PianoRoll(n, grid)


def save_roll(path: str, roll: PianoRoll):
    write_json(path, roll_to_dict(roll))


def load_roll(path: str) -> PianoRoll:
    return roll_from_dict(read_json(path))


def features_to_dict(inputs: np.ndarray) -> dict:
    x = np.asarray(inputs, dtype=float)
    return {"feature_dim": int(x.shape[1]), "frames": x.tolist()}


def features_from_dict(data: Any) -> np.ndarray:
    if not isinstance(data, dict) or "feature_dim" not in data or "frames" not in data:
        raise ValueError("feature document needs 'feature_dim' and 'frames'")
    x = np.asarray(data["frames"], dtype=float)
    if x.ndim != 2 or x.shape[1] != data["feature_dim"]:
        raise ValueError(
            f"frames have shape {x.shape}, inconsistent with feature_dim {data['feature_dim']}"
        )
    return x


def save_features(path: str, inputs: np.ndarray):
    write_json(path, features_to_dict(inputs))


def load_features(path: str) -> np.ndarray:
    return features_from_dict(read_json(path))


def _seq_basename(index: int) -> str:
    return f"seq_{index:04d}"


def save_corpus(directory: str, pairs: list[SequencePair], rolls: list[PianoRoll]):
    """One features file and one roll file per sequence."""
    os.makedirs(directory, exist_ok=True)
    for i, (pair, roll) in enumerate(zip(pairs, rolls)):
        save_features(os.path.join(directory, f"{_seq_basename(i)}_features.json"), pair.inputs)
        save_roll(os.path.join(directory, f"{_seq_basename(i)}_roll.json"), roll)


def load_corpus(directory: str) -> tuple[list[SequencePair], list[PianoRoll]]:
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise ValueError(f"cannot read corpus directory {directory}: {exc}") from exc
    feature_files = [n for n in names if n.endswith("_features.json")]
    if not feature_files:
        raise ValueError(f"no '*_features.json' files in {directory}")
    pairs = []
    rolls = []
    for name in feature_files:
        stem = name[: -len("_features.json")]
        roll_path = os.path.join(directory, f"{stem}_roll.json")
        if not os.path.exists(roll_path):
            raise ValueError(f"missing roll file for {name} in {directory}")
        inputs = load_features(os.path.join(directory, name))
        roll = load_roll(roll_path)
        pairs.append(SequencePair(inputs=inputs, targets=roll.frames.astype(float)))
        rolls.append(roll)
    return pairs, rolls


def save_history(path: str, history: list[float]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "objective"])
        for epoch, value in enumerate(history, start=1):
            writer.writerow([epoch, repr(float(value))])


def load_history(path: str) -> list[float]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["epoch", "objective"]:
        raise ValueError(f"{path}: expected an 'epoch,objective' header")
    return [float(row[1]) for row in rows[1:]]


def parse_config(text: str) -> dict[str, str]:
    """Flat 'key = value' lines; blank lines and '#' comments ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ValueError(f"config line {lineno}: empty key or value")
        out[key] = value
    return out


def load_config(path: str, schema: dict[str, type]) -> dict[str, Any]:
    """Parse and type a config file against ``schema``; unknown keys are
    reported verbatim."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_config(fh.read())
    unknown = [k for k in raw if k not in schema]
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    typed: dict[str, Any] = {}
    for key, value in raw.items():
        kind = schema[key]
        try:
            typed[key] = kind(value) if kind is not bool else value.lower() in ("1", "true", "yes")
        except ValueError as exc:
            raise ValueError(f"config key {key}: cannot parse {value!r} as {kind.__name__}") from exc
    return typed
