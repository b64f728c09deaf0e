from __future__ import annotations

import io
import json
import socket
import sys
import threading
from pathlib import Path

import numpy as np
import pytest

from autoseq import (
    BackendError,
    FineTuneConfig,
    RenderedInput,
    SearchConfig,
    TinyNeuralModel,
    Vocab,
    generate_candidates,
    uniform_model,
)
from autoseq.fake_server import ProtocolSession
from autoseq.remote import (
    PROTO_VERSION,
    RemoteModel,
    RemoteVocab,
    Transport,
    _Session,
    connect,
)
from autoseq.serve_check import serve_check

from conftest import one_field

DATA_DIR = Path(__file__).parent / "data"


class LoopbackTransport(Transport):
    """Runs the full wire encode/decode path against an in-process session."""

    def __init__(self, session: ProtocolSession):
        super().__init__()
        self.session = session
        self._pending = b""

    def _write_line(self, line: bytes) -> None:
        out = io.StringIO()
        self.session.serve_stream(io.StringIO(line.decode("utf-8")), out)
        self._pending = out.getvalue().encode("utf-8")

    def _read_line(self) -> bytes:
        return self._pending


def loopback(model, name="loopback") -> RemoteModel:
    transport = LoopbackTransport(ProtocolSession(model, name))
    hello = transport.request("hello", {"version": PROTO_VERSION})
    vocab = RemoteVocab(
        transport, hello["vocab_size"], hello["pad_id"], hello["eos_id"], hello["mask_id"]
    )
    return RemoteModel(_Session(transport), vocab, name, hello["trainable"])


@pytest.fixture
def local_tiny():
    return TinyNeuralModel(Vocab.from_words(["a", "b", "c", "d"]), d_model=16,
                           d_ff=32, seed=2)


@pytest.fixture
def remote_tiny(local_tiny):
    return loopback(local_tiny.clone())


class TestRemoteVocab:
    def test_metadata_mirrors_server(self, local_tiny, remote_tiny):
        assert remote_tiny.vocab.size == local_tiny.vocab.size
        assert remote_tiny.vocab.content_ids == local_tiny.vocab.content_ids
        assert remote_tiny.vocab.pad_id == local_tiny.vocab.pad_id

    def test_encode_decode_over_the_wire(self, local_tiny, remote_tiny):
        assert remote_tiny.vocab.encode("a c") == local_tiny.vocab.encode("a c")
        ids = local_tiny.vocab.encode("b d a")
        assert remote_tiny.vocab.decode(ids) == "b d a"


class TestRemoteScoring:
    def test_logprobs_identical_to_local(self, local_tiny, remote_tiny):
        rendered = RenderedInput("a b [MASK]", 4)
        for prefix in ([], [3], [3, 4]):
            np.testing.assert_array_equal(
                remote_tiny.next_token_logprobs(rendered, prefix),
                local_tiny.next_token_logprobs(rendered, prefix),
            )

    def test_batch_round_trip(self, local_tiny, remote_tiny):
        rendered = RenderedInput("c [MASK]", 2)
        prefixes = [[], [4], [5, 6]]
        got = remote_tiny.batch_next_token_logprobs(rendered, prefixes)
        want = local_tiny.batch_next_token_logprobs(rendered, prefixes)
        for g, w in zip(got, want):
            np.testing.assert_array_equal(g, w)

    def test_beam_search_via_remote(self, local_tiny, remote_tiny, single_template):
        examples = [one_field("a b", "y"), one_field("b a", "y")]
        config = SearchConfig(beam_width=5, max_len=2)
        got = generate_candidates(remote_tiny, single_template, examples, config)
        want = generate_candidates(local_tiny, single_template, examples, config)
        assert [(c.seq, c.gen_score) for c in got] == [
            (c.seq, c.gen_score) for c in want
        ]


class TestRemoteFineTune:
    CONFIG = FineTuneConfig(steps=6, batch_size=2, learning_rate=0.05,
                            validate_every=3, seed=4)
    PAIRS = [
        (RenderedInput("a b [MASK]", 4), (5,)),
        (RenderedInput("b a [MASK]", 4), (6,)),
    ]

    def test_matches_local_fine_tune(self, local_tiny, remote_tiny):
        tuned_remote = remote_tiny.fine_tune(self.PAIRS, self.CONFIG)
        tuned_local = local_tiny.fine_tune(self.PAIRS, self.CONFIG)
        rendered = RenderedInput("a b [MASK]", 4)
        np.testing.assert_array_equal(
            tuned_remote.next_token_logprobs(rendered, []),
            tuned_local.next_token_logprobs(rendered, []),
        )

    def test_base_handle_not_mutated(self, local_tiny, remote_tiny):
        rendered = RenderedInput("a b [MASK]", 4)
        before = remote_tiny.next_token_logprobs(rendered, [])
        remote_tiny.fine_tune(self.PAIRS, self.CONFIG)
        np.testing.assert_array_equal(
            remote_tiny.next_token_logprobs(rendered, []), before
        )
        np.testing.assert_array_equal(
            local_tiny.next_token_logprobs(rendered, []), before
        )

    def test_handles_share_session_but_not_state(self, remote_tiny):
        rendered = RenderedInput("a [MASK]", 2)
        tuned = remote_tiny.fine_tune(self.PAIRS, self.CONFIG)
        base_vec = remote_tiny.next_token_logprobs(rendered, [])
        tuned_vec = tuned.next_token_logprobs(rendered, [])
        # interleave: each handle restores its own checkpoint lazily
        np.testing.assert_array_equal(
            remote_tiny.next_token_logprobs(rendered, []), base_vec
        )
        np.testing.assert_array_equal(
            tuned.next_token_logprobs(rendered, []), tuned_vec
        )
        assert not np.array_equal(base_vec, tuned_vec)

    def test_untrainable_server_rejects(self, vocab4):
        remote = loopback(uniform_model(vocab4))
        with pytest.raises(BackendError, match="non-trainable"):
            remote.fine_tune(self.PAIRS, self.CONFIG)


class _ScriptedTransport(Transport):
    def __init__(self, replies):
        super().__init__()
        self.replies = list(replies)

    def _write_line(self, line: bytes) -> None:
        pass

    def _read_line(self) -> bytes:
        return self.replies.pop(0)


class TestTransportErrors:
    def test_closed_connection(self):
        with pytest.raises(BackendError, match="closed"):
            _ScriptedTransport([b""]).request("hello", {})

    def test_invalid_json(self):
        with pytest.raises(BackendError, match="malformed"):
            _ScriptedTransport([b"{{{\n"]).request("hello", {})

    def test_mismatched_id(self):
        reply = json.dumps({"kind": "hello", "id": 99, "payload": {}}).encode()
        with pytest.raises(BackendError, match="does not match request id"):
            _ScriptedTransport([reply]).request("hello", {})

    def test_mismatched_kind(self):
        reply = json.dumps({"kind": "tokenize", "id": 1, "payload": {}}).encode()
        with pytest.raises(BackendError, match="kind"):
            _ScriptedTransport([reply]).request("hello", {})

    def test_error_kind_surfaces_message(self):
        reply = json.dumps(
            {"kind": "error", "id": 1, "payload": {"message": "boom"}}
        ).encode()
        with pytest.raises(BackendError, match="boom"):
            _ScriptedTransport([reply]).request("hello", {})

    def test_non_object_payload(self):
        reply = json.dumps({"kind": "hello", "id": 1, "payload": [1, 2]}).encode()
        with pytest.raises(BackendError, match="payload"):
            _ScriptedTransport([reply]).request("hello", {})

    def test_unknown_request_kind(self, vocab4):
        remote = loopback(uniform_model(vocab4))
        with pytest.raises(BackendError, match="unknown request kind"):
            remote.transport.request("frobnicate", {})

    def test_version_mismatch_is_an_error(self, vocab4):
        transport = LoopbackTransport(ProtocolSession(uniform_model(vocab4), "x"))
        with pytest.raises(BackendError, match="version mismatch"):
            transport.request("hello", {"version": "autoseq-proto/0"})


SERVER_CMD = [sys.executable, "-m", "autoseq.fake_server"]


class TestStdioServer:
    def test_connect_and_score(self):
        model = connect(command=SERVER_CMD + ["--backend", "uniform",
                                             "--words", "a,b,c,d"])
        try:
            assert model.vocab.size == 7
            assert not model.trainable
            vec = model.next_token_logprobs(RenderedInput("a [MASK]", 2), [])
            assert vec[3] == pytest.approx(np.log(0.25), abs=1e-12)
        finally:
            model.close()

    def test_serve_check_passes(self):
        model = connect(command=SERVER_CMD + ["--backend", "tiny",
                                             "--words", "a,b,c,d"])
        try:
            results = serve_check(model)
        finally:
            model.close()
        assert [r.name for r in results] == [
            "hello-metadata", "normalization", "tokenize-roundtrip",
            "checkpoint-restore",
        ]
        assert all(r.ok for r in results), [r for r in results if not r.ok]

    def test_missing_command_fails(self):
        with pytest.raises(BackendError, match="cannot start"):
            connect(command=["/nonexistent/autoseq-server"])

    def test_connect_needs_exactly_one_target(self):
        with pytest.raises(BackendError):
            connect()
        with pytest.raises(BackendError):
            connect(command=["x"], endpoint="y:1")


class TestTcpServer:
    @pytest.fixture
    def tcp_endpoint(self):
        server = socket.create_server(("127.0.0.1", 0))
        host, port = server.getsockname()

        def serve():
            conn, _ = server.accept()
            with conn, conn.makefile("r") as rf, conn.makefile("w") as wf:
                session = ProtocolSession(
                    TinyNeuralModel(Vocab.from_words(["a", "b", "c", "d"]),
                                    d_model=16, d_ff=32, seed=0),
                    "tcp-tiny",
                )
                session.serve_stream(rf, wf)

        thread = threading.Thread(target=serve, daemon=True)
        thread.start()
        yield f"{host}:{port}"
        server.close()
        thread.join(timeout=10)

    def test_serve_check_over_tcp(self, tcp_endpoint):
        model = connect(endpoint=tcp_endpoint)
        try:
            results = serve_check(model)
        finally:
            model.close()
        assert all(r.ok for r in results), [r for r in results if not r.ok]

    def test_bad_endpoint_shape(self):
        with pytest.raises(BackendError, match="host:port"):
            connect(endpoint="nonsense")


class TestGoldenTranscript:
    """Byte-for-byte replay of a frozen session against the fake server."""

    def test_replay_matches_recorded_responses(self):
        requests = (DATA_DIR / "transcript.requests.ndjson").read_text(encoding="utf-8")
        expected = (DATA_DIR / "transcript.responses.ndjson").read_text(encoding="utf-8")
        vocab = Vocab.from_words(["a", "b", "c", "d"])
        session = ProtocolSession(uniform_model(vocab), "fake-uniform")
        out = io.StringIO()
        session.serve_stream(io.StringIO(requests), out)
        assert out.getvalue() == expected
