"""Datasets, task descriptions, and deterministic few-shot splits."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

TASK_KINDS = (
    "single-sentence",
    "sentence-pair",
    "boolq-style",
    "copa-style",
    "multirc-style",
    "wic-style",
)

TASK_ARITY = {
    "single-sentence": 1,
    "sentence-pair": 2,
    "boolq-style": 2,
    "copa-style": 4,
    "multirc-style": 3,
    "wic-style": 3,
}

METRICS = ("accuracy", "f1", "matthews")


@dataclass(frozen=True, slots=True)
class Example:
    """One labeled (or unlabeled) input made of ordered text fields."""

    fields: tuple[str, ...]
    label: str | None = None

    def __post_init__(self):
        if not self.fields:
            raise DataError("example must have at least one field")
        trimmed = tuple(f.rstrip() for f in self.fields)
        if any(not f for f in trimmed):
            raise DataError("example fields must be non-empty after trimming")
        object.__setattr__(self, "fields", trimmed)


@dataclass(frozen=True, slots=True)
class TaskSpec:
    task_kind: str
    labels: tuple[str, ...]
    metric: str = "accuracy"
    # positive class for F1; defaults to the second label of a binary task
    positive_label: str | None = None

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise DataError(f"unsupported task kind: {self.task_kind!r}")
        if self.metric not in METRICS:
            raise DataError(f"unsupported metric: {self.metric!r}")
        if len(self.labels) < 2:
            raise DataError("a task needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels):
            raise DataError("task labels must be distinct")
        if self.positive_label is None and len(self.labels) == 2:
            object.__setattr__(self, "positive_label", self.labels[1])
        if self.positive_label is not None and self.positive_label not in self.labels:
            raise DataError(f"positive label {self.positive_label!r} not in labels")

    @property
    def arity(self) -> int:
        return TASK_ARITY[self.task_kind]

    def check_example(self, example: Example) -> None:
        if len(example.fields) != self.arity:
            raise DataError(
                f"{self.task_kind} expects {self.arity} fields, "
                f"got {len(example.fields)}"
            )


@dataclass(frozen=True, slots=True)
class FewShotSplit:
    """K train and K dev examples per class, with per-class views."""

    train: tuple[Example, ...]
    dev: tuple[Example, ...]
    seed: int
    k_per_class: int
    labels: tuple[str, ...] = field(default=())

    def train_for(self, label: str) -> tuple[Example, ...]:
        """The class-y subset of the training set."""
        return tuple(ex for ex in self.train if ex.label == label)

    def train_complement(self, label: str) -> tuple[Example, ...]:
        """Training examples of every class other than y."""
        return tuple(ex for ex in self.train if ex.label != label)


def _parse_tsv(lines: list[str], path: str) -> list[Example]:
    examples = []
    arity = None
    for lineno, line in enumerate(lines, start=1):
        cols = line.split("\t")
        if len(cols) < 2:
            raise DataError(f"{path}:{lineno}: expected at least 2 tab-separated columns")
        if arity is None:
            arity = len(cols)
        elif len(cols) != arity:
            raise DataError(
                f"{path}:{lineno}: ragged row ({len(cols)} columns, expected {arity})"
            )
        try:
            examples.append(Example(tuple(cols[:-1]), cols[-1]))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return examples


def _parse_jsonl(lines: list[str], path: str) -> list[Example]:
    examples = []
    arity = None
    for lineno, line in enumerate(lines, start=1):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(record, dict) or "fields" not in record:
            raise DataError(f"{path}:{lineno}: record must be an object with 'fields'")
        fields = record["fields"]
        if not isinstance(fields, list) or not all(isinstance(f, str) for f in fields):
            raise DataError(f"{path}:{lineno}: 'fields' must be an array of strings")
        if arity is None:
            arity = len(fields)
        elif len(fields) != arity:
            raise DataError(
                f"{path}:{lineno}: ragged arity ({len(fields)} fields, expected {arity})"
            )
        label = record.get("label")
        if label is not None and not isinstance(label, str):
            raise DataError(f"{path}:{lineno}: 'label' must be a string or null")
        try:
            examples.append(Example(tuple(fields), label))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return examples


def load_dataset(path: str | Path, format: str = "json-lines") -> list[Example]:
    """Load examples from a TSV or JSON-lines file, order preserved.

    TSV rows are tab-separated with the label in the last column.
    JSON-lines records look like {"fields": [...], "label": "..."|null}.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    text = path.read_text(encoding="utf-8")
    lines = [line for line in text.split("\n") if line.strip()]
    if not lines:
        raise DataError(f"{path}: no records")
    if format == "tsv":
        return _parse_tsv(lines, str(path))
    if format == "json-lines":
        return _parse_jsonl(lines, str(path))
    raise DataError(f"unknown dataset format: {format!r}")


def labels_in_order(data: list[Example]) -> tuple[str, ...]:
    """Class labels by first appearance, skipping unlabeled examples."""
    seen: dict[str, None] = {}
    for ex in data:
        if ex.label is not None and ex.label not in seen:
            seen[ex.label] = None
    return tuple(seen)


def sample_few_shot(
    data: list[Example],
    k: int,
    seed: int,
    labels: tuple[str, ...] | None = None,
) -> FewShotSplit:
    """Draw a deterministic K-shot train/dev split.

    Per-class index lists are shuffled with a PRNG seeded by (seed, class
    index); the first k go to train, the next k to dev. Pure in
    (data order, k, seed).
    """
    if k < 1:
        raise DataError("k must be >= 1")
    if labels is None:
        labels = labels_in_order(data)
    if not labels:
        raise DataError("dataset has no labeled examples")
    by_class: dict[str, list[int]] = {y: [] for y in labels}
    for i, ex in enumerate(data):
        if ex.label in by_class:
            by_class[ex.label].append(i)
    train: list[Example] = []
    dev: list[Example] = []
    for ci, y in enumerate(labels):
        idx = by_class[y]
        if len(idx) < 2 * k:
            raise DataError(
                f"class {y!r} has {len(idx)} examples, needs at least {2 * k}"
            )
        rng = random.Random(f"{seed}:{ci}")
        order = list(idx)
        rng.shuffle(order)
        train.extend(data[i] for i in sorted(order[:k]))
        dev.extend(data[i] for i in sorted(order[k : 2 * k]))
    return FewShotSplit(tuple(train), tuple(dev), seed, k, labels)
