"""Classification by comparing label-sequence log-probabilities."""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Example, TaskSpec
from .errors import DataError
from .model import ConditionalSequenceModel, TokenSeq
from .templating import Template, render


@dataclass(frozen=True, slots=True)
class LabelSequence:
    ids: TokenSeq
    text: str

    def __post_init__(self):
        if len(self.ids) == 0:
            raise DataError("label sequence must be non-empty")


@dataclass(frozen=True, slots=True)
class LabelMapping:
    """Injective assignment of one label sequence per class."""

    entries: tuple[tuple[str, LabelSequence], ...]

    @classmethod
    def from_dict(cls, entries: dict[str, LabelSequence]) -> "LabelMapping":
        return cls(tuple(entries.items()))

    def sequence_for(self, label: str) -> LabelSequence:
        for y, seq in self.entries:
            if y == label:
                return seq
        raise DataError(f"no label sequence for class {label!r}")

    def as_text_dict(self) -> dict[str, str]:
        return {y: seq.text for y, seq in self.entries}

    def validate(self, task: TaskSpec) -> None:
        classes = [y for y, _ in self.entries]
        if sorted(classes) != sorted(task.labels):
            raise DataError(
                f"mapping covers {classes}, task labels are {list(task.labels)}"
            )
        seqs = [seq.ids for _, seq in self.entries]
        if len(set(seqs)) != len(seqs):
            raise DataError("label sequences must be pairwise distinct")


def class_scores(
    model: ConditionalSequenceModel,
    template: Template,
    example: Example,
    mapping: LabelMapping,
    task: TaskSpec,
) -> dict[str, float]:
    """score[y] = log-prob of generating the class-y sequence at the mask."""
    mapping.validate(task)
    rendered = render(template, example)
    return {
        y: model.sequence_logprob(rendered, mapping.sequence_for(y).ids)
        for y in task.labels
    }


def predict(
    model: ConditionalSequenceModel,
    template: Template,
    example: Example,
    mapping: LabelMapping,
    task: TaskSpec,
) -> str:
    """Argmax class; exact ties go to the earliest label in task order."""
    scores = class_scores(model, template, example, mapping, task)
    best = task.labels[0]
    for y in task.labels[1:]:
        if scores[y] > scores[best]:
            best = y
    return best
