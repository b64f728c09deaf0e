"""Protocol conformance checks run against a live server."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BackendError
from .model import FineTuneConfig
from .remote import RemoteModel
from .templating import MASK, RenderedInput

NORMALIZATION_TOL = 1e-4
RESTORE_TOL = 1e-6


@dataclass(frozen=True, slots=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _sample_input(model: RemoteModel) -> RenderedInput:
    words = model.vocab.decode(model.vocab.content_ids[:2])
    text = f"{words} {MASK}" if words else MASK
    return RenderedInput(text, len(text.encode("utf-8")) - len(MASK))


def serve_check(model: RemoteModel) -> list[CheckResult]:
    results: list[CheckResult] = []

    def run(name, fn):
        try:
            detail = fn() or ""
            results.append(CheckResult(name, True, detail))
        except Exception as exc:
            results.append(CheckResult(name, False, str(exc)))

    def check_hello():
        v = model.vocab
        if v.size < 2 + len(v.special_ids):
            raise BackendError(f"vocab too small: {v.size}")
        if len({v.pad_id, v.eos_id, v.mask_id}) != 3:
            raise BackendError("special ids are not distinct")
        return f"vocab_size={v.size}"

    def check_normalization():
        rendered = _sample_input(model)
        prefixes = [[], [model.vocab.content_ids[0]]]
        worst = 0.0
        for vec in model.batch_next_token_logprobs(rendered, prefixes):
            worst = max(worst, abs(float(np.exp(vec).sum()) - 1.0))
        if worst > NORMALIZATION_TOL:
            raise BackendError(f"exp-sum deviates by {worst}")
        return f"max deviation {worst:.2e}"

    def check_roundtrip():
        ids = tuple(model.vocab.content_ids[:3])
        text = model.vocab.decode(ids)
        if not text.isascii():
            text = "".join(c for c in text if c.isascii())
        back = model.vocab.encode(text)
        if tuple(back) != ids:
            raise BackendError(f"tokenize(detokenize({ids})) = {back}")
        text2 = model.vocab.decode(model.vocab.encode(text))
        if text2 != text:
            raise BackendError(f"string round-trip changed {text!r} -> {text2!r}")

    def check_restore():
        rendered = _sample_input(model)
        before = model.next_token_logprobs(rendered, [])
        cid = model.checkpoint()
        if model.trainable:
            target = (model.vocab.content_ids[0],)
            model.fine_tune(
                [(rendered, target)],
                FineTuneConfig(steps=2, batch_size=1, learning_rate=1e-3,
                               validate_every=1, seed=0),
            )
        model.transport.request("restore", {"checkpoint_id": cid})
        model._session.active = cid
        after = model.next_token_logprobs(rendered, [])
        finite = np.isfinite(before) & np.isfinite(after)
        if not np.array_equal(np.isfinite(before), np.isfinite(after)):
            raise BackendError("restore changed the distribution support")
        diff = float(np.max(np.abs(before[finite] - after[finite]))) if finite.any() else 0.0
        if diff > RESTORE_TOL:
            raise BackendError(f"restored scores differ by {diff}")
        return f"max diff {diff:.2e}"

    run("hello-metadata", check_hello)
    run("normalization", check_normalization)
    run("tokenize-roundtrip", check_roundtrip)
    run("checkpoint-restore", check_restore)
    return results
