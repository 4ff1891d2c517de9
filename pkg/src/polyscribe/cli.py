"""Command-line client for the transcription service.

Each subcommand assembles a JSON request, posts it to the service and
writes the response payloads to disk.  By default the service runs
in-process (no server needed); pass --server to talk to a remote
instance.  Stdout carries human-readable summaries, files carry the
machine-readable artifacts.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

import httpx

from .modelio import load_config, write_json

GEN_SCHEMA: dict[str, type] = {
    "num_pitches": int,
    "feature_dim": int,
    "num_sequences": int,
    "seq_len": int,
    "polyphony": int,
    "note_hold": float,
    "background_noise": float,
    "dictionary": str,
    "seed": int,
}

TRAIN_SCHEMA: dict[str, type] = {
    "hidden_size": int,
    "recurrent_size": int,
    "model_kind": str,
    "init_seed": int,
    "learning_rate": float,
    "epochs": int,
    "alpha": float,
    "beta": float,
    "teacher_noise": float,
    "gradient_clip": float,
    "seed": int,
}

GEN_DEFAULTS = {
    "polyphony": 1,
    "note_hold": 4.0,
    "background_noise": 0.0,
    "dictionary": "random",
    "seed": 0,
}

TRAIN_DEFAULTS = {
    "hidden_size": 16,
    "recurrent_size": 16,
    "model_kind": "io-rnn-nade",
    "init_seed": 0,
    "learning_rate": 0.1,
    "epochs": 10,
    "alpha": 0.0,
    "beta": 0.0,
    "teacher_noise": 0.0,
    "gradient_clip": None,
    "seed": 0,
}


class ServiceError(RuntimeError):
    pass


class ServiceClient:
    """POSTs JSON either to a remote server or to the in-process app."""

    def __init__(self, server: str | None = None):
        self.server = server

    def post(self, path: str, payload: dict) -> dict:
        if self.server is not None:
            response = httpx.post(
                self.server.rstrip("/") + path, json=payload, timeout=None
            )
            status, body = response.status_code, response
        else:
            status, body = asyncio.run(self._post_local(path, payload))
        if status != 200:
            try:
                detail = body.json().get("detail", body.text)
            except (ValueError, KeyError):
                detail = body.text
            raise ServiceError(f"{path} failed ({status}): {detail}")
        return body.json()

    async def _post_local(self, path: str, payload: dict):
        from .service.app import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://polyscribe.local", timeout=None
        ) as client:
            response = await client.post(path, json=payload)
        return response.status_code, response


def _read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _merge_settings(args, schema: dict[str, type], defaults: dict, required: list[str]) -> dict:
    """Layer defaults, then the config file, then explicit CLI flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        merged.update(load_config(args.config, schema))
    for key in schema:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    missing = [k for k in required if merged.get(k) is None]
    if missing:
        raise ValueError(f"missing required settings: {', '.join(missing)}")
    return merged


def _beam_payload(args) -> dict:
    return {
        "width": args.width,
        "branch": args.branch,
        "samples": args.samples,
        "restart_period": args.restart_period,
        "prefix_lag": args.prefix_lag,
        "seed": args.seed,
    }


def _load_corpus_payload(directory: str) -> list[dict]:
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise ValueError(f"cannot read corpus directory {directory}: {exc}") from exc
    sequences = []
    for name in names:
        if not name.endswith("_features.json"):
            continue
        stem = name[: -len("_features.json")]
        roll_path = os.path.join(directory, f"{stem}_roll.json")
        if not os.path.exists(roll_path):
            raise ValueError(f"missing roll file for {name} in {directory}")
        sequences.append(
            {
                "features": _read_json(os.path.join(directory, name)),
                "roll": _read_json(roll_path),
            }
        )
    if not sequences:
        raise ValueError(f"no '*_features.json' files in {directory}")
    return sequences


def _ascii_roll(roll: dict) -> str:
    n = roll["num_pitches"]
    frames = roll["frames"]
    lines = []
    for pitch in range(n - 1, -1, -1):
        row = "".join("#" if pitch in active else "." for active in frames)
        lines.append(f"{pitch:3d} |{row}|")
    return "\n".join(lines)


def _cmd_gen(args) -> int:
    settings = _merge_settings(
        args,
        GEN_SCHEMA,
        GEN_DEFAULTS,
        ["num_pitches", "feature_dim", "num_sequences", "seq_len"],
    )
    client = ServiceClient(args.server)
    response = client.post("/gen", settings)
    os.makedirs(args.out, exist_ok=True)
    for i, seq in enumerate(response["sequences"]):
        write_json(os.path.join(args.out, f"seq_{i:04d}_features.json"), seq["features"])
        write_json(os.path.join(args.out, f"seq_{i:04d}_roll.json"), seq["roll"])
    print(f"wrote {len(response['sequences'])} sequences to {args.out}")
    return 0


def _cmd_train(args) -> int:
    settings = _merge_settings(args, TRAIN_SCHEMA, TRAIN_DEFAULTS, ["hidden_size", "recurrent_size"])
    payload = {
        "corpus": _load_corpus_payload(args.corpus),
        "hidden_size": settings["hidden_size"],
        "recurrent_size": settings["recurrent_size"],
        "model_kind": settings["model_kind"],
        "init_seed": settings["init_seed"],
        "train": {
            "learning_rate": settings["learning_rate"],
            "epochs": settings["epochs"],
            "alpha": settings["alpha"],
            "beta": settings["beta"],
            "teacher_noise": settings["teacher_noise"],
            "gradient_clip": settings["gradient_clip"],
            "seed": settings["seed"],
        },
    }
    client = ServiceClient(args.server)
    response = client.post("/train", payload)
    write_json(args.out, response["model"])
    if args.loss_csv:
        lines = ["epoch,objective"] + [
            f"{epoch},{value!r}" for epoch, value in enumerate(response["history"], start=1)
        ]
        with open(args.loss_csv, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    print(
        f"trained {response['model']['model_kind']} for {len(response['history'])} epochs, "
        f"final objective {response['history'][-1]:.6f}, model saved to {args.out}"
    )
    return 0


def _cmd_transcribe(args) -> int:
    payload = {
        "model": _read_json(args.model),
        "features": _read_json(args.features),
        "beam": _beam_payload(args),
    }
    client = ServiceClient(args.server)
    response = client.post("/transcribe", payload)
    if args.out:
        write_json(args.out, response["roll"])
    print(f"log-probability {response['logp']!r}")
    if args.ascii:
        print(_ascii_roll(response["roll"]))
    elif not args.out:
        print(json.dumps(response["roll"]))
    return 0


def _cmd_evaluate(args) -> int:
    direct = args.pred is not None or args.truth is not None
    pipeline = args.model is not None or args.corpus is not None
    if direct == pipeline:
        raise ValueError("use either --pred/--truth or --model/--corpus")
    if direct:
        if args.pred is None or args.truth is None:
            raise ValueError("--pred and --truth are both required")
        payload = {
            "predicted_roll": _read_json(args.pred),
            "truth_roll": _read_json(args.truth),
        }
    else:
        if args.model is None or args.corpus is None:
            raise ValueError("--model and --corpus are both required")
        payload = {
            "model": _read_json(args.model),
            "sequences": _load_corpus_payload(args.corpus),
            "beam": _beam_payload(args),
        }
        if args.noise_kind:
            payload["noise"] = {
                "kind": args.noise_kind,
                "level": args.noise_level,
                "seed": args.noise_seed,
            }
    client = ServiceClient(args.server)
    response = client.post("/evaluate", payload)
    print(f"frame accuracy {response['accuracy']:.6f}")
    if args.out:
        write_json(args.out, response)
    return 0


def _cmd_enumerate(args) -> int:
    client = ServiceClient(args.server)
    response = client.post("/enumerate", {"probs": args.probs, "k": args.k})
    for item in response["items"]:
        bits = "".join(str(b) for b in item["bits"])
        print(f"{item['logp']: .9f}  {bits}")
    if args.out:
        write_json(args.out, response)
    return 0


def _cmd_gradcheck(args) -> int:
    payload = {
        "num_pitches": args.num_pitches,
        "feature_dim": args.feature_dim,
        "hidden_size": args.hidden_size,
        "recurrent_size": args.recurrent_size,
        "seq_len": args.seq_len,
        "alpha": args.alpha,
        "beta": args.beta,
        "seed": args.seed,
    }
    if args.model:
        payload["model"] = _read_json(args.model)
    client = ServiceClient(args.server)
    response = client.post("/gradcheck", payload)
    error = response["max_rel_error"]
    print(f"max relative gradient error {error:.3e}")
    if error > args.tolerance:
        print(f"exceeds tolerance {args.tolerance:.3e}", file=sys.stderr)
        return 1
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def _add_beam_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--width", type=int, default=1, help="beam width (default 1: greedy)")
    parser.add_argument("--branch", type=int, default=1, help="children expanded per node")
    parser.add_argument("--samples", type=int, default=None, help="stochastic pool size (default 10*branch)")
    parser.add_argument("--restart-period", type=int, default=None, dest="restart_period")
    parser.add_argument("--prefix-lag", type=int, default=None, dest="prefix_lag")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyscribe", description="sequence transduction engine for binary frame sequences"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus directory")
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--out", required=True, help="corpus output directory")
    for key, kind in GEN_SCHEMA.items():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, type=kind, default=None, dest=key)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train a model on a corpus directory")
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--corpus", required=True, help="corpus directory from gen")
    p.add_argument("--out", required=True, help="model JSON output path")
    p.add_argument("--loss-csv", dest="loss_csv", help="per-epoch objective CSV path")
    for key, kind in TRAIN_SCHEMA.items():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, type=kind, default=None, dest=key)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("transcribe", help="decode features with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", help="roll JSON output path")
    p.add_argument("--ascii", action="store_true", help="print the roll as an ASCII grid")
    _add_beam_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_transcribe)

    p = sub.add_parser("evaluate", help="score rolls, or transcribe a corpus and score it")
    p.add_argument("--pred", help="predicted roll JSON")
    p.add_argument("--truth", help="ground-truth roll JSON")
    p.add_argument("--model", help="model JSON for pipeline mode")
    p.add_argument("--corpus", help="corpus directory for pipeline mode")
    p.add_argument("--noise-kind", dest="noise_kind", help="white|pink|masking|pitch_shift")
    p.add_argument("--noise-level", dest="noise_level", type=float, default=0.0)
    p.add_argument("--noise-seed", dest="noise_seed", type=int, default=0)
    p.add_argument("--out", help="JSON report output path")
    _add_beam_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("enumerate", help="rank configurations of independent bits")
    p.add_argument("probs", type=float, nargs="+", help="per-bit probabilities")
    p.add_argument("--k", type=int, default=10, help="number of configurations")
    p.add_argument("--out", help="JSON output path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_enumerate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the training gradient")
    p.add_argument("--model", help="check this model instead of a random one")
    p.add_argument("--num-pitches", dest="num_pitches", type=int, default=3)
    p.add_argument("--feature-dim", dest="feature_dim", type=int, default=2)
    p.add_argument("--hidden-size", dest="hidden_size", type=int, default=3)
    p.add_argument("--recurrent-size", dest="recurrent_size", type=int, default=2)
    p.add_argument("--seq-len", dest="seq_len", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_serve)

    for name, sp in sub.choices.items():
        if name != "serve":
            sp.add_argument("--server", default=None, help="base URL of a running service")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ServiceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
