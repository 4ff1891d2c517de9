import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from polyscribe.modelio import transducer_from_dict
from polyscribe.service import create_app
from polyscribe.transducer import SequencePair, sequence_log_likelihood


@pytest.fixture()
def client():
    return TestClient(create_app())


def gen_request(**overrides):
    base = dict(
        num_pitches=4,
        feature_dim=4,
        num_sequences=3,
        seq_len=6,
        polyphony=1,
        dictionary="identity",
        seed=1,
    )
    base.update(overrides)
    return base


def make_corpus(client, **overrides):
    resp = client.post("/gen", json=gen_request(**overrides))
    assert resp.status_code == 200
    return resp.json()["sequences"]


def train_model(client, sequences, **overrides):
    body = dict(
        corpus=sequences,
        hidden_size=3,
        recurrent_size=2,
        train={"learning_rate": 0.1, "epochs": 2, "seed": 0},
    )
    body.update(overrides)
    resp = client.post("/train", json=body)
    assert resp.status_code == 200
    return resp.json()


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


# ---------------------------------------------------------------------------
# /gen


def test_gen_returns_aligned_sequences(client):
    sequences = make_corpus(client)
    assert len(sequences) == 3
    for seq in sequences:
        features = seq["features"]
        roll = seq["roll"]
        assert features["feature_dim"] == 4
        assert len(features["frames"]) == 6
        assert roll["num_pitches"] == 4
        assert len(roll["frames"]) == 6
        for active in roll["frames"]:
            assert len(active) == 1  # polyphony one
        # identity dictionary with no noise: features equal the roll
        for frame, active in zip(features["frames"], roll["frames"]):
            assert frame[active[0]] == 1.0
            assert sum(frame) == 1.0


def test_gen_deterministic(client):
    a = client.post("/gen", json=gen_request()).json()
    b = client.post("/gen", json=gen_request()).json()
    assert a == b
    c = client.post("/gen", json=gen_request(seed=2)).json()
    assert a != c


def test_gen_identity_dictionary_requires_matching_dims(client):
    resp = client.post("/gen", json=gen_request(feature_dim=5))
    assert resp.status_code == 422
    assert "identity" in resp.json()["detail"]


def test_gen_unknown_dictionary_kind(client):
    resp = client.post("/gen", json=gen_request(dictionary="fourier"))
    assert resp.status_code == 422


def test_gen_invalid_polyphony(client):
    resp = client.post("/gen", json=gen_request(polyphony=9))
    assert resp.status_code == 422
    assert "polyphony" in resp.json()["detail"]


# ---------------------------------------------------------------------------
# /train


def test_train_returns_model_and_history(client):
    sequences = make_corpus(client)
    out = train_model(client, sequences)
    model = out["model"]
    assert model["format_version"] == 1
    assert model["model_kind"] == "io-rnn-nade"
    assert model["dims"] == {"N": 4, "H": 3, "R": 2, "D": 4}
    assert len(out["history"]) == 2
    assert model["training"]["epochs"] == 2
    assert model["training"]["final_objective"] == out["history"][-1]


def test_train_objective_decreases(client):
    sequences = make_corpus(client, num_sequences=4, seq_len=10)
    out = train_model(client, sequences, train={"learning_rate": 0.1, "epochs": 10})
    history = out["history"]
    assert history[-1] < history[0]


def test_train_factorised_kind_keeps_zero_weights(client):
    sequences = make_corpus(client)
    out = train_model(client, sequences, model_kind="io-rnn")
    weights = np.asarray(out["model"]["params"]["weights"])
    assert np.array_equal(weights, np.zeros_like(weights))
    assert out["model"]["model_kind"] == "io-rnn"


def test_train_rejects_empty_corpus(client):
    resp = client.post(
        "/train", json={"corpus": [], "hidden_size": 3, "recurrent_size": 2}
    )
    assert resp.status_code == 422


def test_train_deterministic(client):
    sequences = make_corpus(client)
    a = train_model(client, sequences)
    b = train_model(client, sequences)
    assert a == b


# ---------------------------------------------------------------------------
# /transcribe


def test_transcribe_logp_matches_model_likelihood(client):
    sequences = make_corpus(client)
    model = train_model(client, sequences)["model"]
    features = sequences[0]["features"]
    resp = client.post(
        "/transcribe",
        json={"model": model, "features": features, "beam": {"width": 3, "branch": 2}},
    )
    assert resp.status_code == 200
    out = resp.json()
    assert out["roll"]["num_pitches"] == 4
    assert len(out["roll"]["frames"]) == 6

    params, _, _ = transducer_from_dict(model)
    frames = np.zeros((6, 4))
    for t, active in enumerate(out["roll"]["frames"]):
        frames[t, active] = 1.0
    want = sequence_log_likelihood(
        params, SequencePair(inputs=np.asarray(features["frames"]), targets=frames)
    )
    assert out["logp"] == pytest.approx(want, abs=1e-9)


def test_transcribe_deterministic(client):
    sequences = make_corpus(client)
    model = train_model(client, sequences)["model"]
    body = {
        "model": model,
        "features": sequences[0]["features"],
        "beam": {"width": 2, "branch": 2, "seed": 5},
    }
    assert client.post("/transcribe", json=body).json() == client.post(
        "/transcribe", json=body
    ).json()


def test_transcribe_rejects_dimension_mismatch(client):
    sequences = make_corpus(client)
    model = train_model(client, sequences)["model"]
    bad = {"feature_dim": 3, "frames": [[0.0, 0.0, 0.0]]}
    resp = client.post("/transcribe", json={"model": model, "features": bad})
    assert resp.status_code == 422
    assert "detail" in resp.json()


def test_transcribe_rejects_corrupt_model(client):
    sequences = make_corpus(client)
    model = train_model(client, sequences)["model"]
    model["params"]["rec_bias"] = [0.0]  # wrong length for R = 2
    resp = client.post(
        "/transcribe", json={"model": model, "features": sequences[0]["features"]}
    )
    assert resp.status_code == 422
    assert "rec_bias" in resp.json()["detail"]


def test_transcribe_rejects_wrong_version(client):
    sequences = make_corpus(client)
    model = train_model(client, sequences)["model"]
    model["format_version"] = 9
    resp = client.post(
        "/transcribe", json={"model": model, "features": sequences[0]["features"]}
    )
    assert resp.status_code == 422
    assert "format_version" in resp.json()["detail"]


# ---------------------------------------------------------------------------
# /evaluate


def test_evaluate_direct_rolls(client):
    truth = {"num_pitches": 4, "frames": [[0, 1], [0, 2], [0, 1, 2]]}
    pred = {"num_pitches": 4, "frames": [[0, 1, 3], [0], [0, 1, 2, 3]]}
    resp = client.post("/evaluate", json={"predicted_roll": pred, "truth_roll": truth})
    assert resp.status_code == 200
    out = resp.json()
    assert out["accuracy"] == pytest.approx(6 / 9)
    assert out["per_sequence"] == []


def test_evaluate_pipeline_mode(client):
    sequences = make_corpus(client, num_sequences=2)
    model = train_model(client, sequences)["model"]
    resp = client.post(
        "/evaluate",
        json={"model": model, "sequences": sequences, "beam": {"width": 2, "branch": 2}},
    )
    assert resp.status_code == 200
    out = resp.json()
    assert 0.0 <= out["accuracy"] <= 1.0
    assert len(out["per_sequence"]) == 2
    assert [s["index"] for s in out["per_sequence"]] == [0, 1]
    for score in out["per_sequence"]:
        assert 0.0 <= score["accuracy"] <= 1.0
        assert score["logp"] <= 0.0 or math.isclose(score["logp"], 0.0)


def test_evaluate_pipeline_with_identity_noise_matches_clean(client):
    sequences = make_corpus(client, num_sequences=2)
    model = train_model(client, sequences)["model"]
    base = {"model": model, "sequences": sequences, "beam": {"width": 2, "branch": 2}}
    clean = client.post("/evaluate", json=base).json()
    masked = client.post(
        "/evaluate",
        json={**base, "noise": {"kind": "masking", "level": 0.0, "seed": 3}},
    ).json()
    assert clean == masked


def test_evaluate_noise_changes_inputs(client):
    sequences = make_corpus(client, num_sequences=2)
    model = train_model(client, sequences)["model"]
    base = {"model": model, "sequences": sequences, "beam": {"width": 2, "branch": 2}}
    clean = client.post("/evaluate", json=base).json()
    noisy = client.post(
        "/evaluate",
        json={**base, "noise": {"kind": "white", "level": 0.0, "seed": 3}},
    ).json()
    assert clean["per_sequence"] != noisy["per_sequence"]


def test_evaluate_requires_one_mode(client):
    resp = client.post("/evaluate", json={})
    assert resp.status_code == 422
    truth = {"num_pitches": 2, "frames": [[0]]}
    resp = client.post("/evaluate", json={"truth_roll": truth})
    assert resp.status_code == 422


def test_evaluate_shape_mismatch(client):
    truth = {"num_pitches": 2, "frames": [[0]]}
    pred = {"num_pitches": 2, "frames": [[0], [1]]}
    resp = client.post("/evaluate", json={"predicted_roll": pred, "truth_roll": truth})
    assert resp.status_code == 422


# ---------------------------------------------------------------------------
# /enumerate


def test_enumerate_worked_example(client):
    resp = client.post("/enumerate", json={"probs": [0.9, 0.2], "k": 4})
    assert resp.status_code == 200
    items = resp.json()["items"]
    assert [item["bits"] for item in items] == [[1, 0], [1, 1], [0, 0], [0, 1]]
    probs = [math.exp(item["logp"]) for item in items]
    assert probs == pytest.approx([0.72, 0.18, 0.08, 0.02], abs=1e-9)


def test_enumerate_k_truncates(client):
    resp = client.post("/enumerate", json={"probs": [0.6, 0.3, 0.8], "k": 3})
    items = resp.json()["items"]
    assert len(items) == 3
    logps = [item["logp"] for item in items]
    assert logps == sorted(logps, reverse=True)


def test_enumerate_invalid_probs(client):
    resp = client.post("/enumerate", json={"probs": [0.5, 1.4], "k": 2})
    assert resp.status_code == 422


# ---------------------------------------------------------------------------
# /gradcheck


def test_gradcheck_fresh_model(client):
    resp = client.post("/gradcheck", json={"seed": 3})
    assert resp.status_code == 200
    assert resp.json()["max_rel_error"] < 1e-4


def test_gradcheck_with_penalties_and_supplied_model(client):
    sequences = make_corpus(client)
    model = train_model(client, sequences)["model"]
    resp = client.post(
        "/gradcheck", json={"model": model, "alpha": 0.05, "beta": 0.02, "seed": 1}
    )
    assert resp.status_code == 200
    assert resp.json()["max_rel_error"] < 1e-4
