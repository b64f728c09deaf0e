"""Exactly-computable tabular backend.

Conditional next-token tables are keyed by an input *signature* (a
collapsing function of the rendered text) and the last two prefix tokens.
Unlisted contexts back off to a uniform distribution over content tokens,
which keeps every downstream quantity closed-form.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .model import ConditionalSequenceModel, Vocab
from .templating import RenderedInput

# table layout: {signature: {prefix_tuple: {token_id: prob}}}
Table = Mapping[Hashable, Mapping[tuple[int, ...], Mapping[int, float]]]

_PROB_TOL = 1e-12


class KeywordSignature:
    """Map rendered text to the signature whose keywords occur most often.

    Ties and keyword-free inputs fall back to `default` (the first listed
    signature when not given). Serializable, so tabular models can be
    loaded from JSON specs.
    """

    def __init__(self, keywords: Mapping[str, Sequence[str]], default: str | None = None):
        if not keywords:
            raise DataError("keyword signature needs at least one class")
        self.keywords = {sig: tuple(words) for sig, words in keywords.items()}
        self.default = default if default is not None else next(iter(self.keywords))

    def __call__(self, text: str) -> str:
        words = text.split()
        best, best_count = self.default, 0
        for sig, kws in self.keywords.items():
            count = sum(words.count(k) for k in kws)
            if count > best_count:
                best, best_count = sig, count
        return best

    def to_json(self) -> dict:
        return {
            "type": "keyword",
            "classes": {sig: list(ws) for sig, ws in self.keywords.items()},
            "default": self.default,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "KeywordSignature":
        return cls(obj["classes"], obj.get("default"))


class TabularModel(ConditionalSequenceModel):
    backend = "tabular"
    trainable = False

    def __init__(
        self,
        vocab: Vocab,
        table: Table,
        signature_fn: Callable[[str], Hashable] | None = None,
        identifier: str = "tabular",
    ):
        self.vocab = vocab
        self.identifier = identifier
        self.signature_fn = signature_fn if signature_fn is not None else (lambda t: t)
        self._logvecs: dict[tuple[Hashable, tuple[int, ...]], np.ndarray] = {}
        for sig, contexts in table.items():
            for prefix, probs in contexts.items():
                key = (sig, tuple(prefix))
                self._logvecs[key] = self._build_vector(probs)
        self._backoff = self._build_vector({})

    def _build_vector(self, probs: Mapping[int, float]) -> np.ndarray:
        """Fill listed probabilities; spread leftover mass uniformly over
        unlisted content tokens."""
        vec = np.full(self.vocab.size, -np.inf)
        mass = 0.0
        for tok, p in probs.items():
            if not 0 <= tok < self.vocab.size:
                raise DataError(f"table token id {tok} out of range")
            if p < 0:
                raise DataError("table probabilities must be non-negative")
            if p > 0:
                vec[tok] = math.log(p)
            mass += p
        if mass > 1 + _PROB_TOL:
            raise DataError(f"table probabilities sum to {mass} > 1")
        rest = [i for i in self.vocab.content_ids if i not in probs]
        leftover = 1.0 - mass
        if leftover > _PROB_TOL:
            if not rest:
                raise DataError("leftover probability mass with no unlisted tokens")
            share = leftover / len(rest)
            for i in rest:
                vec[i] = math.log(share)
        return vec

    def next_token_logprobs(
        self, rendered: RenderedInput, prefix: Sequence[int]
    ) -> np.ndarray:
        for tok in prefix:
            if not 0 <= tok < self.vocab.size:
                raise DataError(f"prefix token id {tok} out of range")
        sig = self.signature_fn(rendered.text)
        ctx = tuple(prefix[-2:])
        vec = self._logvecs.get((sig, ctx))
        if vec is None:
            vec = self._backoff
        return vec.copy()

    def clone(self) -> "TabularModel":
        model = TabularModel(self.vocab, {}, self.signature_fn, self.identifier)
        model._logvecs = dict(self._logvecs)
        model._backoff = self._backoff
        return model


def uniform_model(vocab: Vocab, identifier: str = "uniform") -> TabularModel:
    """Uniform over content tokens in every context."""
    return TabularModel(vocab, {}, signature_fn=lambda t: "*", identifier=identifier)


def save_tabular_spec(model: TabularModel, path: str | Path) -> None:
    """Persist a keyword-signature tabular model as JSON."""
    if not isinstance(model.signature_fn, KeywordSignature):
        raise DataError("only keyword-signature tabular models are serializable")
    entries = []
    for (sig, prefix), vec in sorted(
        model._logvecs.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])
    ):
        probs = {
            model.vocab.tokens[i]: math.exp(v)
            for i, v in enumerate(vec)
            if v != -np.inf
        }
        entries.append({"signature": sig, "prefix": list(prefix), "probs": probs})
    spec = {
        "format": "autoseq-tabular/1",
        "vocab": list(model.vocab.tokens),
        "signature": model.signature_fn.to_json(),
        "table": entries,
    }
    Path(path).write_text(json.dumps(spec, indent=2) + "\n", encoding="utf-8")


def load_tabular_spec(path: str | Path) -> TabularModel:
    spec = json.loads(Path(path).read_text(encoding="utf-8"))
    if spec.get("format") != "autoseq-tabular/1":
        raise DataError(f"{path}: not an autoseq-tabular/1 spec")
    vocab = Vocab(tuple(spec["vocab"]))
    sig = KeywordSignature.from_json(spec["signature"])
    table: dict[Hashable, dict[tuple[int, ...], dict[int, float]]] = {}
    for entry in spec["table"]:
        probs = {vocab.encode(tok)[0]: p for tok, p in entry["probs"].items()}
        table.setdefault(entry["signature"], {})[tuple(entry["prefix"])] = probs
    return TabularModel(vocab, table, sig, identifier=str(path))
