"""Bundled synthetic sentiment-style task.

Inputs are short word strings whose class is carried by indicator words;
a keyword-signature tabular model plays the generation role. Both classes
share a high-probability generic token at the mask, while each class also
has its own indicative tokens, so candidate generation alone produces the
same top candidate for both classes and only contrastive re-ranking
separates them.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .corpus import Example, TaskSpec
from .model import Vocab
from .tabular import KeywordSignature, TabularModel, save_tabular_spec

POS_INDICATORS = ("nice", "fun")
NEG_INDICATORS = ("gross", "dull")
FILLERS = ("the", "movie", "story", "plot", "very", "was")
# tokens the generator can emit at the mask
GENERIC = "okay"
POS_MARKS = ("yay", "wow")
NEG_MARKS = ("ugh", "meh")
EXTRA_MARKS = ("thanks", "hmm")

CONTENT_WORDS = (
    POS_INDICATORS
    + NEG_INDICATORS
    + FILLERS
    + (GENERIC,)
    + POS_MARKS
    + NEG_MARKS
    + EXTRA_MARKS
)

TASK = TaskSpec(task_kind="single-sentence", labels=("neg", "pos"), metric="accuracy")


def make_vocab() -> Vocab:
    return Vocab.from_words(CONTENT_WORDS)


def make_examples(n_per_class: int = 60, seed: int = 0) -> list[Example]:
    """Sentences of 4-6 words: two class indicators plus fillers."""
    rng = random.Random(f"synthetic:{seed}")
    examples = []
    for label, indicators in (("neg", NEG_INDICATORS), ("pos", POS_INDICATORS)):
        for _ in range(n_per_class):
            words = [rng.choice(indicators), rng.choice(indicators)]
            words += rng.choices(FILLERS, k=rng.randint(2, 4))
            rng.shuffle(words)
            examples.append(Example((" ".join(words),), label))
    order = list(range(len(examples)))
    rng.shuffle(order)
    return [examples[i] for i in order]


def make_generator(vocab: Vocab) -> TabularModel:
    """Mask-slot distribution: generic token on top for both classes,
    class marks clearly separated between them."""
    sig = KeywordSignature(
        {"pos": list(POS_INDICATORS), "neg": list(NEG_INDICATORS)}, default="pos"
    )

    def dist(marks_hi, marks_lo):
        probs = {vocab.encode(GENERIC)[0]: 0.50}
        hi = (0.22, 0.10)
        lo = (0.01, 0.005)
        for tok, p in zip(marks_hi, hi):
            probs[vocab.encode(tok)[0]] = p
        for tok, p in zip(marks_lo, lo):
            probs[vocab.encode(tok)[0]] = p
        for tok, p in zip(EXTRA_MARKS, (0.04, 0.02)):
            probs[vocab.encode(tok)[0]] = p
        # remaining mass spreads uniformly over the other content tokens
        return probs

    table = {
        "pos": {(): dist(POS_MARKS, NEG_MARKS)},
        "neg": {(): dist(NEG_MARKS, POS_MARKS)},
    }
    return TabularModel(vocab, table, sig, identifier="synthetic-generator")


def write_task_files(out_dir: str | Path, seed: int = 0, n_per_class: int = 60) -> Path:
    """Materialize data, generator spec, and a ready-to-run config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    examples = make_examples(n_per_class=n_per_class, seed=seed)
    with open(out_dir / "train.jsonl", "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({"fields": list(ex.fields), "label": ex.label}) + "\n")
    vocab = make_vocab()
    save_tabular_spec(make_generator(vocab), out_dir / "generator.json")
    config = {
        "task": {"kind": TASK.task_kind, "labels": list(TASK.labels), "metric": TASK.metric},
        "data": {"path": "train.jsonl", "format": "json-lines"},
        "split": {"k": 8, "seed": seed},
        "generator": {"backend": "tabular", "spec": "generator.json"},
        "classifier": {"backend": "tiny-neural", "d_model": 24},
        "search": {"beam_width": 12, "max_len": 2},
        "n": 5,
        "finetune": {"steps": 30, "batch_size": 8, "learning_rate": 0.1, "validate_every": 10},
        "seed": seed,
    }
    (out_dir / "config.json").write_text(
        json.dumps(config, indent=2) + "\n", encoding="utf-8"
    )
    return out_dir / "config.json"
