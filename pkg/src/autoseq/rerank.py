"""Contrastive re-ranking and k-best enumeration of mapping combinations."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

from .beamsearch import Candidate
from .corpus import FewShotSplit
from .errors import DataError
from .model import ConditionalSequenceModel, TokenSeq
from .scoring import LabelMapping, LabelSequence
from .templating import Template, render


@dataclass(slots=True)
class ScoredMapping:
    mapping: LabelMapping
    combo_score: float
    dev_metric: float | None = field(default=None)


def contrastive_score(
    model: ConditionalSequenceModel,
    template: Template,
    split: FewShotSplit,
    label: str,
    seq: TokenSeq,
) -> float:
    """Mean in-class sequence log-prob minus mean out-of-class log-prob."""
    if len(seq) == 0:
        raise DataError("label sequence must be non-empty")
    in_class = split.train_for(label)
    out_class = split.train_complement(label)
    if not in_class:
        raise DataError(f"no training examples for class {label!r}")
    if not out_class:
        raise DataError(f"class {label!r} has an empty complement (single-class task?)")
    mean_in = sum(
        model.sequence_logprob(render(template, ex), seq) for ex in in_class
    ) / len(in_class)
    mean_out = sum(
        model.sequence_logprob(render(template, ex), seq) for ex in out_class
    ) / len(out_class)
    return mean_in - mean_out


def rerank_candidates(
    model: ConditionalSequenceModel,
    template: Template,
    split: FewShotSplit,
    candidates_by_class: dict[str, list[Candidate]],
) -> dict[str, list[Candidate]]:
    """Fill contrastive scores and sort each class's list by them.

    Ties fall back to gen_score, then lexicographic token order.
    """
    reranked: dict[str, list[Candidate]] = {}
    for label, cands in candidates_by_class.items():
        scored = [
            Candidate(
                c.seq,
                c.text,
                c.gen_score,
                contrastive_score(model, template, split, label, c.seq),
            )
            for c in cands
        ]
        scored.sort(key=lambda c: (-c.contrastive_score, -c.gen_score, c.seq))
        reranked[label] = scored
    return reranked


def top_n_mappings(
    ranked_by_class: dict[str, list[Candidate]], n: int
) -> list[ScoredMapping]:
    """Best-first enumeration of per-class candidate combinations.

    Expands the product lattice lazily with a heap, so it is exact without
    materializing the full cross product. Combinations assigning the same
    token sequence to two classes are skipped (they cannot separate the
    classes) but still expanded. Ties on the summed score break by
    lexicographic candidate-index order.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    labels = list(ranked_by_class)
    lists = [ranked_by_class[y] for y in labels]
    for y, cands in zip(labels, lists):
        if not cands:
            raise DataError(f"class {y!r} has no candidates")
        if any(c.contrastive_score is None for c in cands):
            raise DataError(f"class {y!r} has candidates without contrastive scores")

    def combo_sum(idx: tuple[int, ...]) -> float:
        return sum(lists[ci][i].contrastive_score for ci, i in enumerate(idx))

    start = (0,) * len(labels)
    heap = [(-combo_sum(start), start)]
    seen = {start}
    out: list[ScoredMapping] = []
    while heap and len(out) < n:
        neg, idx = heapq.heappop(heap)
        chosen = [lists[ci][i] for ci, i in enumerate(idx)]
        seqs = [c.seq for c in chosen]
        if len(set(seqs)) == len(seqs):
            mapping = LabelMapping(
                tuple(
                    (y, LabelSequence(c.seq, c.text)) for y, c in zip(labels, chosen)
                )
            )
            out.append(ScoredMapping(mapping, -neg))
        for ci in range(len(labels)):
            if idx[ci] + 1 < len(lists[ci]):
                nxt = (*idx[:ci], idx[ci] + 1, *idx[ci + 1 :])
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, (-combo_sum(nxt), nxt))
    if not out:
        raise DataError("no valid label mapping combination (all candidates shared)")
    return out


def save_mappings(path: str | Path, mappings: list[ScoredMapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sm in mappings:
            record = {
                "mapping": sm.mapping.as_text_dict(),
                "tokens": {y: list(seq.ids) for y, seq in sm.mapping.entries},
                "combo_score": sm.combo_score,
                "dev_metric": sm.dev_metric,
            }
            fh.write(json.dumps(record) + "\n")


def load_mappings(path: str | Path) -> list[ScoredMapping]:
    mappings = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read mappings file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        mapping = LabelMapping(
            tuple(
                (y, LabelSequence(tuple(record["tokens"][y]), text))
                for y, text in record["mapping"].items()
            )
        )
        mappings.append(
            ScoredMapping(mapping, record["combo_score"], record.get("dev_metric"))
        )
    return mappings
