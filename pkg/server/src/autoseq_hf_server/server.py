"""autoseq-proto/1 server around a pre-trained encoder-decoder model.

Speaks newline-delimited JSON over stdio (default) or a single TCP
connection. One session, sequential requests:

  hello      -> {version}                      <- {version, model, vocab_size,
                                                  pad_id, eos_id, mask_id, trainable}
  tokenize   -> {text}                         <- {ids}
  detokenize -> {ids}                          <- {text}
  logprobs   -> {text, mask_offset, prefixes}  <- {logprobs: [[...], ...]}
  finetune   -> {pairs, steps, batch_size,
                 learning_rate, validate_every, seed}   <- {ok}
  checkpoint -> {}                             <- {checkpoint_id}
  restore    -> {checkpoint_id}                <- {ok}
  bye        -> {}                             <- {ok}

Rendered inputs carry a literal "[MASK]" placeholder at the given byte
offset; the server splices its own mask sentinel into that slot before
tokenizing. Log-softmax runs in double precision. Fine-tune requests
mutate only the in-memory session copy of the weights, never the
on-disk base model; checkpoints are in-memory state snapshots.
"""

from __future__ import annotations

import argparse
import copy
import json
import socket
import sys
from typing import Sequence

import numpy as np
import torch

PROTO_VERSION = "autoseq-proto/1"
MASK_PLACEHOLDER = "[MASK]"


class ServerError(Exception):
    """Reported to the client as an error response; the session survives."""


class HFModelBackend:
    """Scoring and fine-tuning over a transformers seq2seq checkpoint."""

    def __init__(self, model_name: str, device: str = "cpu"):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self.name = model_name
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = (
            AutoModelForSeq2SeqLM.from_pretrained(model_name).to(device).double()
        )
        self.model.eval()
        self.device = device
        self.vocab_size = len(self.tokenizer)
        self.pad_id = self._required_id(self.tokenizer.pad_token_id, "pad")
        self.eos_id = self._required_id(self.tokenizer.eos_token_id, "eos")
        self.mask_surface, self.mask_id = self._find_mask_token()
        start = self.model.config.decoder_start_token_id
        self.decoder_start_id = start if start is not None else self.pad_id

    @staticmethod
    def _required_id(token_id: int | None, role: str) -> int:
        if token_id is None:
            raise ServerError(f"tokenizer defines no {role} token")
        return token_id

    def _find_mask_token(self) -> tuple[str, int]:
        """The tokenizer's mask token, or a T5-style sentinel as fallback."""
        candidates = []
        if self.tokenizer.mask_token is not None:
            candidates.append(self.tokenizer.mask_token)
        candidates.append("<extra_id_0>")
        for surface in candidates:
            token_id = self.tokenizer.convert_tokens_to_ids(surface)
            if token_id is not None and 0 <= token_id < self.vocab_size:
                return surface, token_id
        raise ServerError("tokenizer has neither a mask token nor <extra_id_0>")

    def tokenize(self, text: str) -> list[int]:
        return self.tokenizer.encode(text, add_special_tokens=False)

    def detokenize(self, ids: Sequence[int]) -> str:
        for i in ids:
            if not 0 <= int(i) < self.vocab_size:
                raise ServerError(f"token id {i} out of range")
        return self.tokenizer.decode(
            list(ids), skip_special_tokens=False, clean_up_tokenization_spaces=False
        )

    def _encoder_ids(self, text: str, mask_offset: int) -> list[int]:
        raw = text.encode("utf-8")
        if not (
            0 <= mask_offset
            and raw[mask_offset : mask_offset + len(MASK_PLACEHOLDER)]
            == MASK_PLACEHOLDER.encode("utf-8")
        ):
            raise ServerError(f"no mask placeholder at byte offset {mask_offset}")
        spliced = (
            raw[:mask_offset].decode("utf-8")
            + self.mask_surface
            + raw[mask_offset + len(MASK_PLACEHOLDER) :].decode("utf-8")
        )
        return self.tokenize(spliced) + [self.eos_id]

    @torch.no_grad()
    def logprobs(
        self, text: str, mask_offset: int, prefixes: Sequence[Sequence[int]]
    ) -> list[list[float]]:
        enc = torch.tensor([self._encoder_ids(text, mask_offset)], dtype=torch.long)
        out: list[list[float]] = []
        for prefix in prefixes:
            for tok in prefix:
                if not 0 <= int(tok) < self.vocab_size:
                    raise ServerError(f"prefix token id {tok} out of range")
            dec = torch.tensor(
                [[self.decoder_start_id, *map(int, prefix)]], dtype=torch.long
            )
            logits = self.model(input_ids=enc, decoder_input_ids=dec).logits
            vec = torch.log_softmax(
                logits[0, -1, : self.vocab_size].double(), dim=-1
            )
            out.append([float(x) for x in vec])
        return out

    def finetune(
        self,
        pairs: Sequence[dict],
        steps: int,
        batch_size: int,
        learning_rate: float,
        validate_every: int,
        seed: int,
    ) -> None:
        del validate_every  # checkpoint selection is the client's concern
        if not pairs:
            raise ServerError("finetune needs at least one pair")
        if steps < 0 or batch_size < 1:
            raise ServerError("steps must be >= 0 and batch_size >= 1")
        encoded = []
        for p in pairs:
            enc = self._encoder_ids(p["text"], int(p["mask_offset"]))
            target = [int(t) for t in p["target"]] + [self.eos_id]
            encoded.append((enc, target))
        self.model.train()
        optimizer = torch.optim.SGD(self.model.parameters(), lr=learning_rate)
        rng = np.random.default_rng(seed)
        order: list[int] = []
        for _ in range(steps):
            while len(order) < batch_size:
                order.extend(rng.permutation(len(encoded)).tolist())
            batch = [encoded[i] for i in order[:batch_size]]
            del order[:batch_size]
            enc_len = max(len(e) for e, _ in batch)
            tgt_len = max(len(t) for _, t in batch)
            input_ids = torch.full((len(batch), enc_len), self.pad_id, dtype=torch.long)
            attention = torch.zeros((len(batch), enc_len), dtype=torch.long)
            labels = torch.full((len(batch), tgt_len), -100, dtype=torch.long)
            for row, (enc, tgt) in enumerate(batch):
                input_ids[row, : len(enc)] = torch.tensor(enc)
                attention[row, : len(enc)] = 1
                labels[row, : len(tgt)] = torch.tensor(tgt)
            optimizer.zero_grad()
            loss = self.model(
                input_ids=input_ids, attention_mask=attention, labels=labels
            ).loss
            loss.backward()
            optimizer.step()
        self.model.eval()

    def state_snapshot(self) -> dict:
        return copy.deepcopy(self.model.state_dict())

    def restore_snapshot(self, state: dict) -> None:
        self.model.load_state_dict(copy.deepcopy(state))


class ProtocolServer:
    """Request loop mapping wire messages onto a backend."""

    def __init__(self, backend: HFModelBackend):
        self.backend = backend
        self.checkpoints: dict[str, dict] = {}

    def handle(self, kind: str, payload: dict) -> dict:
        if kind == "hello":
            if payload.get("version") != PROTO_VERSION:
                raise ServerError(
                    f"version mismatch: server {PROTO_VERSION}, "
                    f"client {payload.get('version')!r}"
                )
            b = self.backend
            return {
                "version": PROTO_VERSION,
                "model": b.name,
                "vocab_size": b.vocab_size,
                "pad_id": b.pad_id,
                "eos_id": b.eos_id,
                "mask_id": b.mask_id,
                "trainable": True,
            }
        if kind == "tokenize":
            return {"ids": self.backend.tokenize(payload["text"])}
        if kind == "detokenize":
            return {"text": self.backend.detokenize(payload["ids"])}
        if kind == "logprobs":
            return {
                "logprobs": self.backend.logprobs(
                    payload["text"], int(payload["mask_offset"]), payload["prefixes"]
                )
            }
        if kind == "finetune":
            self.backend.finetune(
                payload["pairs"],
                int(payload["steps"]),
                int(payload["batch_size"]),
                float(payload["learning_rate"]),
                int(payload["validate_every"]),
                int(payload["seed"]),
            )
            return {"ok": True}
        if kind == "checkpoint":
            cid = f"ckpt-{len(self.checkpoints)}"
            self.checkpoints[cid] = self.backend.state_snapshot()
            return {"checkpoint_id": cid}
        if kind == "restore":
            cid = payload["checkpoint_id"]
            if cid not in self.checkpoints:
                raise ServerError(f"unknown checkpoint {cid!r}")
            self.backend.restore_snapshot(self.checkpoints[cid])
            return {"ok": True}
        if kind == "bye":
            return {"ok": True}
        raise ServerError(f"unknown request kind {kind!r}")

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


def _serve_tcp(server: ProtocolServer, port: int) -> None:
    listener = socket.create_server(("127.0.0.1", port))
    print(f"listening on 127.0.0.1:{listener.getsockname()[1]}", file=sys.stderr)
    conn, _ = listener.accept()
    with conn, conn.makefile("r") as rf, conn.makefile("w") as wf:
        server.serve_stream(rf, wf)
    listener.close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="autoseq-proto/1 server around a transformers seq2seq model"
    )
    parser.add_argument("--model", required=True,
                        help="model name or local checkpoint directory")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--port", type=int, default=None,
                        help="serve one TCP connection instead of stdio")
    args = parser.parse_args(argv)
    try:
        backend = HFModelBackend(args.model, device=args.device)
    except Exception as exc:
        # load failure: report on the wire, then exit non-zero
        sys.stdout.write(
            json.dumps(
                {"kind": "error", "id": 0, "payload": {"message": f"load failure: {exc}"}},
                sort_keys=True,
            )
            + "\n"
        )
        sys.stdout.flush()
        return 1
    server = ProtocolServer(backend)
    if args.port is not None:
        _serve_tcp(server, args.port)
    else:
        server.serve_stream(sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
