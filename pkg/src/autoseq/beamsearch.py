"""Per-class label-sequence candidate generation by beam search.

Scores aggregate next-token log-probs across all of a class's training
examples, each conditioned independently, so a candidate's total equals
the sum of its per-example sequence log-probs. Every partial hypothesis
is a complete candidate (termination is always available), hypotheses
stop growing at max_len, and both the live beam and the completed pool
keep the top beam_width entries, ranked by raw aggregated score with
ties in lexicographic token-id order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Example, FewShotSplit
from .errors import DataError
from .model import ConditionalSequenceModel, TokenSeq
from .templating import Template, render


@dataclass(frozen=True, slots=True)
class SearchConfig:
    beam_width: int = 50
    max_len: int = 20
    length_penalty: float = 0.0

    def __post_init__(self):
        if self.beam_width < 1:
            raise DataError("beam_width must be >= 1")
        if self.max_len < 1:
            raise DataError("max_len must be >= 1")

    @classmethod
    def autoword(cls, beam_width: int = 50) -> "SearchConfig":
        """Single-token restriction of the search."""
        return cls(beam_width=beam_width, max_len=1)


@dataclass(slots=True)
class Candidate:
    seq: TokenSeq
    text: str
    gen_score: float
    contrastive_score: float | None = field(default=None)

    def __post_init__(self):
        if len(self.seq) == 0:
            raise DataError("candidate sequence must be non-empty")


def _rank_key(item: tuple[TokenSeq, float], length_penalty: float):
    seq, score = item
    return (-(score + length_penalty * len(seq)), seq)


def generate_candidates(
    model: ConditionalSequenceModel,
    template: Template,
    class_examples: list[Example] | tuple[Example, ...],
    config: SearchConfig,
) -> list[Candidate]:
    """Up to beam_width candidates for one class, best first."""
    if not class_examples:
        raise DataError("candidate generation needs at least one example")
    labels = {ex.label for ex in class_examples}
    if len(labels) != 1:
        raise DataError(f"examples span multiple classes: {sorted(map(str, labels))}")
    rendered = [render(template, ex) for ex in class_examples]
    content = model.vocab.content_ids
    live: list[tuple[TokenSeq, float]] = [((), 0.0)]
    pool: list[tuple[TokenSeq, float]] = []
    for _ in range(config.max_len):
        step_vecs = [
            model.batch_next_token_logprobs(r, [seq for seq, _ in live])
            for r in rendered
        ]
        expanded: list[tuple[TokenSeq, float]] = []
        for h, (seq, score) in enumerate(live):
            totals = step_vecs[0][h].copy()
            for vecs in step_vecs[1:]:
                totals = totals + vecs[h]
            for tok in content:
                expanded.append(((*seq, tok), score + float(totals[tok])))
        expanded.sort(key=lambda it: _rank_key(it, config.length_penalty))
        live = expanded[: config.beam_width]
        pool.extend(expanded)
        pool.sort(key=lambda it: _rank_key(it, config.length_penalty))
        del pool[config.beam_width :]
    return [
        Candidate(seq, model.vocab.decode(seq), score) for seq, score in pool
    ]


def generate_all(
    model: ConditionalSequenceModel,
    template: Template,
    split: FewShotSplit,
    config: SearchConfig,
) -> dict[str, list[Candidate]]:
    """generate_candidates over each class's training subset."""
    return {
        y: generate_candidates(model, template, split.train_for(y), config)
        for y in split.labels
    }


def verify_gen_scores(
    model: ConditionalSequenceModel,
    template: Template,
    class_examples: list[Example] | tuple[Example, ...],
    candidates: list[Candidate],
    tol: float = 1e-9,
) -> None:
    """Re-check aggregated scores against per-example sequence log-probs."""
    rendered = [render(template, ex) for ex in class_examples]
    for cand in candidates:
        recomputed = sum(model.sequence_logprob(r, cand.seq) for r in rendered)
        if abs(recomputed - cand.gen_score) > tol:
            raise DataError(
                f"candidate {cand.text!r}: aggregated score {cand.gen_score} "
                f"!= recomputed {recomputed}"
            )


def save_candidates(path: str | Path, by_class: dict[str, list[Candidate]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for y in by_class:
            for cand in by_class[y]:
                record = {
                    "class": y,
                    "tokens": list(cand.seq),
                    "text": cand.text,
                    "gen_score": cand.gen_score,
                }
                if cand.contrastive_score is not None:
                    record["contrastive_score"] = cand.contrastive_score
                fh.write(json.dumps(record) + "\n")


def load_candidates(path: str | Path) -> dict[str, list[Candidate]]:
    by_class: dict[str, list[Candidate]] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read candidates file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        by_class.setdefault(record["class"], []).append(
            Candidate(
                tuple(record["tokens"]),
                record["text"],
                record["gen_score"],
                record.get("contrastive_score"),
            )
        )
    return by_class
