from __future__ import annotations

import itertools

import numpy as np
import pytest

from autoseq import Example, TaskSpec, Vocab, builtin_template, uniform_model
from autoseq.tabular import TabularModel


@pytest.fixture
def vocab4() -> Vocab:
    """Four content tokens (a, b, c, d) plus the three specials."""
    return Vocab.from_words(["a", "b", "c", "d"])


@pytest.fixture
def uniform4(vocab4):
    return uniform_model(vocab4)


@pytest.fixture
def binary_task() -> TaskSpec:
    return TaskSpec(task_kind="single-sentence", labels=("neg", "pos"))


@pytest.fixture
def single_template():
    return builtin_template("single-sentence")


def one_field(text: str, label: str | None = None) -> Example:
    return Example((text,), label)


def random_tabular(vocab: Vocab, signatures, rng: np.random.Generator,
                   max_order: int = 2) -> TabularModel:
    """Fully specified random conditional tables: every context up to the
    given prefix order gets its own Dirichlet draw over content tokens."""
    content = vocab.content_ids
    contexts = [()]
    for order in range(1, max_order + 1):
        contexts.extend(itertools.product(content, repeat=order))
    table = {}
    for sig in signatures:
        table[sig] = {
            ctx: dict(zip(content, rng.dirichlet(np.ones(len(content)))))
            for ctx in contexts
        }
    return TabularModel(vocab, table, signature_fn=lambda text: text.split()[0])


def brute_force_candidates(model, rendered_inputs, max_len: int, beam_width: int):
    """Independent oracle: enumerate every content-token sequence up to
    max_len, score by summed per-example sequence log-probs, rank by
    (score desc, lexicographic token ids), truncate to beam_width."""
    content = model.vocab.content_ids
    scored = []
    for length in range(1, max_len + 1):
        for seq in itertools.product(content, repeat=length):
            score = sum(model.sequence_logprob(r, seq) for r in rendered_inputs)
            scored.append((seq, score))
    scored.sort(key=lambda it: (-it[1], it[0]))
    return scored[:beam_width]
