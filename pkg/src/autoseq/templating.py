"""Templates: concatenate an example's fields around a single mask slot.

Built-in templates contain no task wording, only field order, punctuation,
and the mask. Custom templates come from a tiny pattern DSL: "{0}", "{1}",
... for fields, "[MASK]" for the slot, everything else literal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import Example
from .errors import DataError

MASK = "[MASK]"


@dataclass(frozen=True, slots=True)
class Literal:
    text: str


@dataclass(frozen=True, slots=True)
class Field:
    index: int


class Mask:
    """Singleton marker for the mask slot."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Mask()"


Segment = Literal | Field | Mask


@dataclass(frozen=True, slots=True)
class Template:
    pattern: tuple[Segment, ...]
    name: str = "custom"

    def __post_init__(self):
        masks = sum(1 for seg in self.pattern if isinstance(seg, Mask))
        if masks != 1:
            raise DataError(f"template must contain exactly one mask, got {masks}")

    @property
    def arity(self) -> int:
        return 1 + max(
            (seg.index for seg in self.pattern if isinstance(seg, Field)), default=-1
        )


@dataclass(frozen=True, slots=True)
class RenderedInput:
    text: str
    mask_byte_offset: int


# Byte-exact patterns from the printed template forms: no space before "?",
# one space after, ", " after the mask, single spaces between adjacent fields.
_BUILTIN_DSL = {
    "single-sentence": "{0} [MASK]",
    "sentence-pair": "{0}? [MASK], {1}",
    "boolq-style": "{0}? [MASK], {1}",
    "copa-style": "{0} {1}? {2}? [MASK], {3}",
    "multirc-style": "{1} [MASK], {2} {0}",
    "wic-style": "{0} {1} '{2}' [MASK]",
}

_DSL_TOKEN = re.compile(r"\{(\d+)\}|\[MASK\]")


def parse_template(dsl: str, name: str = "custom") -> Template:
    """Compile a DSL pattern string into a Template."""
    segments: list[Segment] = []
    pos = 0
    for m in _DSL_TOKEN.finditer(dsl):
        if m.start() > pos:
            segments.append(Literal(dsl[pos : m.start()]))
        if m.group(0) == MASK:
            segments.append(Mask())
        else:
            segments.append(Field(int(m.group(1))))
        pos = m.end()
    if pos < len(dsl):
        segments.append(Literal(dsl[pos:]))
    return Template(tuple(segments), name)


def builtin_template(task_kind: str) -> Template:
    if task_kind not in _BUILTIN_DSL:
        raise DataError(f"no builtin template for task kind {task_kind!r}")
    return parse_template(_BUILTIN_DSL[task_kind], name=task_kind)


def render(template: Template, example: Example) -> RenderedInput:
    """Substitute the example's fields into the template, byte-exact."""
    if template.arity > len(example.fields):
        raise DataError(
            f"template {template.name!r} needs {template.arity} fields, "
            f"example has {len(example.fields)}"
        )
    parts: list[str] = []
    offset = -1
    for seg in template.pattern:
        if isinstance(seg, Literal):
            parts.append(seg.text)
        elif isinstance(seg, Field):
            if MASK in example.fields[seg.index]:
                raise DataError("example field contains the mask placeholder")
            parts.append(example.fields[seg.index])
        else:
            offset = sum(len(p.encode("utf-8")) for p in parts)
            parts.append(MASK)
    return RenderedInput("".join(parts), offset)
