"""Conformance fake server: autoseq-proto/1 over stdio around a local model.

Used by the test suite as the remote backend fixture and as the reference
peer for serve-check. Run with::

    python -m autoseq.fake_server --backend uniform --words a,b,c,d
    python -m autoseq.fake_server --backend tiny --words a,b,c,d
    python -m autoseq.fake_server --backend tabular --spec generator.json
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import AutoSeqError
from .model import ConditionalSequenceModel, FineTuneConfig, Vocab
from .remote import PROTO_VERSION
from .tabular import load_tabular_spec, uniform_model
from .templating import RenderedInput
from .tiny import TinyNeuralModel


class ProtocolSession:
    """Single-session request loop; transport-agnostic via line callables."""

    def __init__(self, model: ConditionalSequenceModel, name: str):
        self.model = model
        self.name = name
        self.checkpoints: dict[str, ConditionalSequenceModel] = {}

    def handle(self, kind: str, payload: dict) -> dict:
        if kind == "hello":
            if payload.get("version") != PROTO_VERSION:
                raise AutoSeqError(
                    f"version mismatch: server {PROTO_VERSION}, "
                    f"client {payload.get('version')!r}"
                )
            v = self.model.vocab
            return {
                "version": PROTO_VERSION,
                "model": self.name,
                "vocab_size": v.size,
                "pad_id": v.pad_id,
                "eos_id": v.eos_id,
                "mask_id": v.mask_id,
                "trainable": self.model.trainable,
            }
        if kind == "tokenize":
            return {"ids": list(self.model.vocab.encode(payload["text"]))}
        if kind == "detokenize":
            return {"text": self.model.vocab.decode(payload["ids"])}
        if kind == "logprobs":
            rendered = RenderedInput(payload["text"], payload.get("mask_offset", -1))
            vecs = self.model.batch_next_token_logprobs(rendered, payload["prefixes"])
            return {"logprobs": [[float(x) for x in v] for v in vecs]}
        if kind == "finetune":
            pairs = [
                (RenderedInput(p["text"], p.get("mask_offset", -1)), tuple(p["target"]))
                for p in payload["pairs"]
            ]
            config = FineTuneConfig(
                steps=payload["steps"],
                batch_size=payload["batch_size"],
                learning_rate=payload["learning_rate"],
                validate_every=payload["validate_every"],
                seed=payload["seed"],
            )
            self.model = self.model.fine_tune(pairs, config)
            return {"ok": True}
        if kind == "checkpoint":
            cid = f"ckpt-{len(self.checkpoints)}"
            self.checkpoints[cid] = self.model.clone()
            return {"checkpoint_id": cid}
        if kind == "restore":
            cid = payload["checkpoint_id"]
            if cid not in self.checkpoints:
                raise AutoSeqError(f"unknown checkpoint {cid!r}")
            self.model = self.checkpoints[cid].clone()
            return {"ok": True}
        if kind == "bye":
            return {"ok": True}
        raise AutoSeqError(f"unknown request kind {kind!r}")

    def serve_stream(self, instream, outstream) -> None:
        for raw in instream:
            line = raw.strip()
            if not line:
                continue
            req_id = 0
            try:
                message = json.loads(line)
                req_id = message.get("id", 0)
                kind = message["kind"]
                reply = self.handle(kind, message.get("payload", {}))
                out = {"kind": kind, "id": req_id, "payload": reply}
            except Exception as exc:
                out = {"kind": "error", "id": req_id, "payload": {"message": str(exc)}}
            outstream.write(json.dumps(out, sort_keys=True) + "\n")
            outstream.flush()
            if out["kind"] == "bye":
                return


def build_model(backend: str, words: str | None, spec: str | None, seed: int):
    if backend == "uniform":
        vocab = Vocab.from_words((words or "a,b,c,d").split(","))
        return uniform_model(vocab), "fake-uniform"
    if backend == "tabular":
        if spec is None:
            raise SystemExit("--backend tabular requires --spec")
        return load_tabular_spec(spec), f"fake-tabular:{spec}"
    if backend == "tiny":
        vocab = Vocab.from_words((words or "a,b,c,d").split(","))
        return TinyNeuralModel(vocab, d_model=16, d_ff=32, seed=seed), "fake-tiny"
    raise SystemExit(f"unknown backend {backend!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="autoseq-proto/1 fake server")
    parser.add_argument("--backend", default="uniform", choices=["uniform", "tabular", "tiny"])
    parser.add_argument("--words", default=None, help="comma-separated content vocab")
    parser.add_argument("--spec", default=None, help="tabular model spec path")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    model, name = build_model(args.backend, args.words, args.spec, args.seed)
    ProtocolSession(model, name).serve_stream(sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
