"""HTTP facade over the core package.

Every endpoint is stateless: models, corpora and rolls travel in the
request/response bodies using the same JSON structures as the on-disk
formats, so clients can persist payloads verbatim.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import dataeval, inference, modelio, transducer
from ..dataeval import CorpusSpec, NoiseSpec, PianoRoll
from ..transducer import SequencePair, TrainConfig
from . import schemas


def _params_from_payload(payload: schemas.ModelPayload):
    return modelio.transducer_from_dict(payload.model_dump())


def _payload_from_params(params, model_kind: str, training: dict) -> dict:
    return modelio.transducer_to_dict(params, model_kind, training)


def _roll_from_payload(payload: schemas.RollPayload) -> PianoRoll:
    return modelio.roll_from_dict(payload.model_dump())


def _features_from_payload(payload: schemas.FeaturesPayload) -> np.ndarray:
    return modelio.features_from_dict(payload.model_dump())


def _beam_config(settings: schemas.BeamSettings) -> inference.BeamConfig:
    return inference.BeamConfig(
        width=settings.width,
        branch=settings.branch,
        samples=settings.samples,
        restart_period=settings.restart_period,
        prefix_lag=settings.prefix_lag,
        seed=settings.seed,
    )


def _sequence_payload(pair: SequencePair, roll: PianoRoll) -> dict:
    return {
        "features": modelio.features_to_dict(pair.inputs),
        "roll": modelio.roll_to_dict(roll),
    }


def _corpus_from_payload(sequences: list[schemas.SequencePayload]):
    pairs = []
    rolls = []
    for seq in sequences:
        roll = _roll_from_payload(seq.roll)
        inputs = _features_from_payload(seq.features)
        pairs.append(SequencePair(inputs=inputs, targets=roll.frames.astype(float)))
        rolls.append(roll)
    return pairs, rolls


def create_app() -> FastAPI:
    app = FastAPI(title="polyscribe", version="0.1.0")

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health")
    async def health() -> dict:
        return {"status": "ok"}

    @app.post("/gen", response_model=schemas.GenResponse)
    async def gen(req: schemas.GenRequest):
        if req.dictionary == "identity":
            if req.feature_dim != req.num_pitches:
                raise ValueError("identity dictionary requires feature_dim == num_pitches")
            dictionary = dataeval.identity_dictionary(req.num_pitches)
        elif req.dictionary == "random":
            dictionary = dataeval.random_dictionary(req.feature_dim, req.num_pitches, req.seed)
        else:
            raise ValueError(f"unknown dictionary kind {req.dictionary!r}")
        spec = CorpusSpec(
            num_pitches=req.num_pitches,
            feature_dim=req.feature_dim,
            num_sequences=req.num_sequences,
            seq_len=req.seq_len,
            dictionary=dictionary,
            polyphony=req.polyphony,
            note_hold=req.note_hold,
            background_noise=req.background_noise,
            seed=req.seed,
        )
        pairs, rolls = dataeval.generate_corpus(spec)
        return {"sequences": [_sequence_payload(p, r) for p, r in zip(pairs, rolls)]}

    @app.post("/train", response_model=schemas.TrainResponse)
    async def train(req: schemas.TrainRequest):
        pairs, _ = _corpus_from_payload(req.corpus)
        if not pairs:
            raise ValueError("empty corpus")
        num_outputs = pairs[0].targets.shape[1]
        num_inputs = pairs[0].inputs.shape[1]
        params = transducer.init_transducer_params(
            num_outputs,
            num_inputs,
            req.hidden_size,
            req.recurrent_size,
            seed=req.init_seed,
            model_kind=req.model_kind,
        )
        cfg = TrainConfig(
            learning_rate=req.train.learning_rate,
            epochs=req.train.epochs,
            alpha=req.train.alpha,
            beta=req.train.beta,
            teacher_noise=req.train.teacher_noise,
            seed=req.train.seed,
            gradient_clip=req.train.gradient_clip,
            freeze_estimator_weights=(req.model_kind == "io-rnn"),
        )
        trained, history = transducer.train(params, pairs, cfg)
        training_meta = {
            "seed": cfg.seed,
            "epochs": cfg.epochs,
            "final_objective": history[-1],
        }
        return {
            "model": _payload_from_params(trained, req.model_kind, training_meta),
            "history": history,
        }

    @app.post("/transcribe", response_model=schemas.TranscribeResponse)
    async def transcribe(req: schemas.TranscribeRequest):
        params, _, _ = _params_from_payload(req.model)
        inputs = _features_from_payload(req.features)
        sequence, logp = inference.beam_search(params, inputs, _beam_config(req.beam))
        roll = PianoRoll(params.num_outputs, sequence)
        return {"roll": modelio.roll_to_dict(roll), "logp": logp}

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    async def evaluate(req: schemas.EvaluateRequest):
        if req.predicted_roll is not None and req.truth_roll is not None:
            accuracy = dataeval.frame_accuracy(
                _roll_from_payload(req.predicted_roll), _roll_from_payload(req.truth_roll)
            )
            return {"accuracy": accuracy, "per_sequence": []}
        if req.model is None or not req.sequences:
            raise ValueError(
                "provide either predicted_roll and truth_roll, or model and sequences"
            )
        params, _, _ = _params_from_payload(req.model)
        cfg = _beam_config(req.beam)
        tp = fp = fn = 0
        per_sequence = []
        for i, seq in enumerate(req.sequences):
            truth = _roll_from_payload(seq.roll)
            inputs = _features_from_payload(seq.features)
            if req.noise is not None:
                spec = NoiseSpec(req.noise.kind, req.noise.level, req.noise.seed + i)
                inputs = dataeval.apply_noise(inputs, spec)
            sequence, logp = inference.beam_search(params, inputs, cfg)
            predicted = PianoRoll(params.num_outputs, sequence)
            tp_i, fp_i, fn_i = dataeval.frame_counts(predicted, truth)
            tp, fp, fn = tp + tp_i, fp + fp_i, fn + fn_i
            per_sequence.append(
                {
                    "index": i,
                    "accuracy": dataeval.frame_accuracy(predicted, truth),
                    "logp": logp,
                }
            )
        denom = tp + fp + fn
        accuracy = 1.0 if denom == 0 else tp / denom
        return {"accuracy": accuracy, "per_sequence": per_sequence}

    @app.post("/enumerate", response_model=schemas.EnumerateResponse)
    async def enumerate_configs(req: schemas.EnumerateRequest):
        items = [
            {"logp": rc.logp, "bits": [int(b) for b in rc.bits]}
            for rc in inference.enumerate_independent(req.probs, limit=req.k)
        ]
        return {"items": items}

    @app.post("/gradcheck", response_model=schemas.GradCheckResponse)
    async def gradcheck(req: schemas.GradCheckRequest):
        if req.model is not None:
            params, _, _ = _params_from_payload(req.model)
        else:
            params = transducer.init_transducer_params(
                req.num_pitches,
                req.feature_dim,
                req.hidden_size,
                req.recurrent_size,
                seed=req.seed,
            )
        rng = np.random.default_rng(req.seed)
        inputs = rng.standard_normal((req.seq_len, params.num_inputs))
        targets = (rng.random((req.seq_len, params.num_outputs)) < 0.5).astype(float)
        pair = SequencePair(inputs=inputs, targets=targets)
        error = transducer.grad_check(params, pair, alpha=req.alpha, beta=req.beta)
        return {"max_rel_error": error}

    return app


app = create_app()
