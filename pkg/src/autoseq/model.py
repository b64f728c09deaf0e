"""Conditional sequence model contract and the shared vocabulary type.

Every backend answers one question: given a rendered input with a mask
slot and a prefix of already-generated tokens, what is the log-probability
of each next token? Everything downstream (classification, beam search,
contrastive re-ranking) is built on that single surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BackendError, DataError
from .templating import MASK, RenderedInput

TokenSeq = tuple[int, ...]

PAD, EOS = "<pad>", "</s>"
LOGSUMEXP_TOL = 1e-9


@dataclass(frozen=True)
class Vocab:
    """Ordered token list with pad/eos/mask specials at fixed slots."""

    tokens: tuple[str, ...]
    pad_id: int = 0
    eos_id: int = 1
    mask_id: int = 2

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise DataError("vocab tokens must be distinct")
        for i in (self.pad_id, self.eos_id, self.mask_id):
            if not 0 <= i < len(self.tokens):
                raise DataError("special token id out of range")
        if len(self.content_ids) < 2:
            raise DataError("vocab needs at least 2 non-special tokens")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def from_words(cls, words: Sequence[str]) -> "Vocab":
        """Specials first, then the given content words (order preserved)."""
        return cls((PAD, EOS, MASK) + tuple(words))

    @classmethod
    def from_texts(cls, texts: Sequence[str]) -> "Vocab":
        """Whitespace vocabulary over a corpus, sorted for determinism."""
        words = sorted({w for t in texts for w in t.split() if w != MASK})
        return cls.from_words(words)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.pad_id, self.eos_id, self.mask_id))

    @property
    def content_ids(self) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.tokens)) if i not in self.special_ids)

    def encode(self, text: str) -> TokenSeq:
        """Whitespace-tokenize; unknown words are an error."""
        index: dict[str, int] = self._index  # type: ignore[attr-defined]
        ids = []
        for w in text.split():
            if w not in index:
                raise DataError(f"word {w!r} not in vocabulary")
            ids.append(index[w])
        return tuple(ids)

    def encode_rendered(self, rendered: RenderedInput) -> TokenSeq:
        """Tokenize model input text, keeping the mask slot a single token."""
        head = rendered.text.encode("utf-8")[: rendered.mask_byte_offset].decode("utf-8")
        tail = rendered.text[len(head) + len(MASK) :]
        return self.encode(head) + (self.mask_id,) + self.encode(tail)

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self.tokens[i] for i in ids)


@dataclass(frozen=True, slots=True)
class FineTuneConfig:
    steps: int = 1000
    batch_size: int = 8
    learning_rate: float = 6e-5
    validate_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise DataError("steps must be >= 0")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.validate_every < 1:
            raise DataError("validate_every must be >= 1")


class ConditionalSequenceModel:
    """Base contract for scoring (and optionally fine-tuning) backends."""

    backend: str = "abstract"
    identifier: str = ""
    trainable: bool = False
    vocab: Vocab

    def next_token_logprobs(
        self, rendered: RenderedInput, prefix: Sequence[int]
    ) -> np.ndarray:
        """Full-vocab natural-log next-token distribution after `prefix`."""
        raise NotImplementedError

    def batch_next_token_logprobs(
        self, rendered: RenderedInput, prefixes: Sequence[Sequence[int]]
    ) -> list[np.ndarray]:
        # backends with a cheaper batched path override this
        return [self.next_token_logprobs(rendered, p) for p in prefixes]

    def sequence_logprob(self, rendered: RenderedInput, target: Sequence[int]) -> float:
        """Chain-rule sum of next-token log-probs along `target`."""
        if len(target) == 0:
            raise DataError("label sequence must be non-empty")
        total = 0.0
        for j, tok in enumerate(target):
            vec = self.next_token_logprobs(rendered, tuple(target[:j]))
            if not 0 <= tok < self.vocab.size:
                raise DataError(f"token id {tok} out of range")
            total += float(vec[tok])
        return total

    def clone(self) -> "ConditionalSequenceModel":
        raise NotImplementedError

    def fine_tune(
        self,
        pairs: Sequence[tuple[RenderedInput, TokenSeq]],
        config: FineTuneConfig,
        dev_eval: Callable[["ConditionalSequenceModel"], float] | None = None,
    ) -> "ConditionalSequenceModel":
        """Return a newly trained model; the receiver is never mutated."""
        raise BackendError(f"backend {self.backend!r} is not trainable")


def check_normalized(vec: np.ndarray, tol: float = LOGSUMEXP_TOL) -> None:
    """Raise unless the log-prob vector normalizes (logsumexp == 0)."""
    lse = float(np.logaddexp.reduce(vec))
    if abs(lse) > tol:
        raise BackendError(f"log-prob vector does not normalize (logsumexp={lse})")
