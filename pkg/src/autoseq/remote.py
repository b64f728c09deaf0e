"""Client side of the autoseq-proto/1 wire protocol.

Transport is newline-delimited JSON over a stream: either a stdio pipe to
a child process or a TCP connection. Every request carries a correlation
id and gets exactly one response with the same id; error responses use
kind "error" and surface the server's message verbatim.

Message kinds and payloads:

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

Log-prob vectors may contain IEEE infinities, which the wire format writes
as the bare tokens Infinity / -Infinity (the common JSON extension).
"""

from __future__ import annotations

import json
import socket
import subprocess
from typing import Callable, Sequence

import numpy as np

from .errors import BackendError
from .model import ConditionalSequenceModel, FineTuneConfig, TokenSeq
from .templating import RenderedInput

PROTO_VERSION = "autoseq-proto/1"


class Transport:
    """NDJSON request/response stream with correlation-id matching."""

    def __init__(self):
        self._next_id = 0

    def _write_line(self, line: bytes) -> None:
        raise NotImplementedError

    def _read_line(self) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def request(self, kind: str, payload: dict) -> dict:
        self._next_id += 1
        req_id = self._next_id
        message = {"kind": kind, "id": req_id, "payload": payload}
        self._write_line(json.dumps(message, sort_keys=True).encode("utf-8") + b"\n")
        line = self._read_line()
        if not line:
            raise BackendError("server closed the connection")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BackendError(f"malformed server response: {exc.msg}") from exc
        if not isinstance(reply, dict) or "kind" not in reply or "id" not in reply:
            raise BackendError("malformed server response: missing kind or id")
        if reply["id"] != req_id:
            raise BackendError(
                f"response id {reply['id']} does not match request id {req_id}"
            )
        if reply["kind"] == "error":
            raise BackendError(str(reply.get("payload", {}).get("message", "unknown")))
        if reply["kind"] != kind:
            raise BackendError(
                f"response kind {reply['kind']!r} does not match request {kind!r}"
            )
        payload = reply.get("payload")
        if not isinstance(payload, dict):
            raise BackendError("malformed server response: payload must be an object")
        return payload


class StdioTransport(Transport):
    def __init__(self, command: Sequence[str]):
        super().__init__()
        try:
            self.proc = subprocess.Popen(
                list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise BackendError(f"cannot start server process: {exc}") from exc

    def _write_line(self, line: bytes) -> None:
        try:
            self.proc.stdin.write(line)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"server pipe closed: {exc}") from exc

    def _read_line(self) -> bytes:
        return self.proc.stdout.readline()

    def close(self) -> None:
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self.proc.wait(timeout=10)


class TcpTransport(Transport):
    def __init__(self, host: str, port: int):
        super().__init__()
        try:
            self.sock = socket.create_connection((host, port), timeout=30)
        except OSError as exc:
            raise BackendError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.reader = self.sock.makefile("rb")

    def _write_line(self, line: bytes) -> None:
        try:
            self.sock.sendall(line)
        except OSError as exc:
            raise BackendError(f"transport error: {exc}") from exc

    def _read_line(self) -> bytes:
        return self.reader.readline()

    def close(self) -> None:
        self.reader.close()
        self.sock.close()


class RemoteVocab:
    """Server-owned vocabulary; token text only exists across the wire."""

    def __init__(self, transport: Transport, size: int, pad_id: int, eos_id: int, mask_id: int):
        self._transport = transport
        self.size = size
        self.pad_id = pad_id
        self.eos_id = eos_id
        self.mask_id = mask_id

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.pad_id, self.eos_id, self.mask_id))

    @property
    def content_ids(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.size) if i not in self.special_ids)

    def encode(self, text: str) -> TokenSeq:
        return tuple(self._transport.request("tokenize", {"text": text})["ids"])

    def decode(self, ids: Sequence[int]) -> str:
        return self._transport.request("detokenize", {"ids": list(ids)})["text"]


class _Session:
    """Tracks which checkpoint the server-side model currently holds."""

    def __init__(self, transport: Transport):
        self.transport = transport
        self.active: str | None = None


class RemoteModel(ConditionalSequenceModel):
    backend = "remote"

    def __init__(self, session: _Session, vocab: RemoteVocab, identifier: str,
                 trainable: bool, checkpoint_id: str | None = None):
        self._session = session
        self.vocab = vocab
        self.identifier = identifier
        self.trainable = trainable
        self._checkpoint_id = checkpoint_id

    @property
    def transport(self) -> Transport:
        return self._session.transport

    def _activate(self) -> None:
        if self._checkpoint_id is not None and self._session.active != self._checkpoint_id:
            self.transport.request("restore", {"checkpoint_id": self._checkpoint_id})
            self._session.active = self._checkpoint_id

    def batch_next_token_logprobs(
        self, rendered: RenderedInput, prefixes: Sequence[Sequence[int]]
    ) -> list[np.ndarray]:
        self._activate()
        payload = {
            "text": rendered.text,
            "mask_offset": rendered.mask_byte_offset,
            "prefixes": [list(p) for p in prefixes],
        }
        vecs = self.transport.request("logprobs", payload)["logprobs"]
        if len(vecs) != len(prefixes):
            raise BackendError("server returned a wrong number of log-prob vectors")
        out = []
        for vec in vecs:
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (self.vocab.size,):
                raise BackendError("server log-prob vector has the wrong length")
            out.append(arr)
        return out

    def next_token_logprobs(
        self, rendered: RenderedInput, prefix: Sequence[int]
    ) -> np.ndarray:
        return self.batch_next_token_logprobs(rendered, [prefix])[0]

    def checkpoint(self) -> str:
        self._activate()
        cid = self.transport.request("checkpoint", {})["checkpoint_id"]
        self._session.active = cid
        # bind this handle to the snapshot so it can restore itself after
        # another handle activates a different checkpoint on the session
        self._checkpoint_id = cid
        return cid

    def clone(self) -> "RemoteModel":
        return RemoteModel(
            self._session, self.vocab, self.identifier, self.trainable, self.checkpoint()
        )

    def fine_tune(
        self,
        pairs: Sequence[tuple[RenderedInput, TokenSeq]],
        config: FineTuneConfig,
        dev_eval: Callable[[ConditionalSequenceModel], float] | None = None,
    ) -> "RemoteModel":
        """Server-side cross-entropy steps on a session copy.

        Checkpoint selection by dev metric is server-local; the client
        records the post-training state and restores the base afterwards,
        so the receiving handle is never mutated.
        """
        if not self.trainable:
            raise BackendError("remote server reports a non-trainable model")
        base = self.checkpoint()
        self.transport.request(
            "finetune",
            {
                "pairs": [
                    {
                        "text": r.text,
                        "mask_offset": r.mask_byte_offset,
                        "target": list(t),
                    }
                    for r, t in pairs
                ],
                "steps": config.steps,
                "batch_size": config.batch_size,
                "learning_rate": config.learning_rate,
                "validate_every": config.validate_every,
                "seed": config.seed,
            },
        )
        tuned = self.transport.request("checkpoint", {})["checkpoint_id"]
        self.transport.request("restore", {"checkpoint_id": base})
        self._session.active = base
        return RemoteModel(self._session, self.vocab, self.identifier, self.trainable, tuned)

    def close(self) -> None:
        try:
            self.transport.request("bye", {})
        finally:
            self.transport.close()


def connect(
    command: Sequence[str] | None = None, endpoint: str | None = None
) -> RemoteModel:
    """Open a session over stdio (command) or TCP (host:port endpoint)."""
    if (command is None) == (endpoint is None):
        raise BackendError("connect needs exactly one of command or endpoint")
    if command is not None:
        transport: Transport = StdioTransport(command)
        identifier = " ".join(command)
    else:
        host, _, port = endpoint.rpartition(":")
        if not host or not port.isdigit():
            raise BackendError(f"endpoint must look like host:port, got {endpoint!r}")
        transport = TcpTransport(host, int(port))
        identifier = endpoint
    hello = transport.request("hello", {"version": PROTO_VERSION})
    if hello.get("version") != PROTO_VERSION:
        transport.close()
        raise BackendError(
            f"protocol version mismatch: client {PROTO_VERSION}, "
            f"server {hello.get('version')!r}"
        )
    for key in ("vocab_size", "pad_id", "eos_id", "mask_id"):
        if key not in hello:
            transport.close()
            raise BackendError(f"hello response missing {key!r}")
    vocab = RemoteVocab(
        transport, hello["vocab_size"], hello["pad_id"], hello["eos_id"], hello["mask_id"]
    )
    return RemoteModel(
        _Session(transport),
        vocab,
        f"{identifier} ({hello.get('model', '?')})",
        bool(hello.get("trainable", False)),
    )
