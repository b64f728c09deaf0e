"""End-to-end search: generate, contrastively re-rank, fine-tune, select."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .beamsearch import (
    Candidate,
    SearchConfig,
    generate_all,
    save_candidates,
)
from .corpus import Example, FewShotSplit, TaskSpec, sample_few_shot
from .errors import DataError, PipelineStageError
from .metrics import compute_metric
from .model import ConditionalSequenceModel, FineTuneConfig
from .rerank import ScoredMapping, rerank_candidates, save_mappings, top_n_mappings
from .scoring import LabelMapping, LabelSequence, predict
from .templating import Template, render

# master-seed fan-out offsets (split / model init / batch shuffling)
SPLIT_SEED_OFFSET = 0
INIT_SEED_OFFSET = 1
SHUFFLE_SEED_OFFSET = 2


def evaluate_mapping(
    model: ConditionalSequenceModel,
    template: Template,
    mapping: LabelMapping,
    examples: Sequence[Example],
    task: TaskSpec,
) -> float:
    """Task metric of argmax predictions against gold labels."""
    gold = []
    for ex in examples:
        if ex.label is None:
            raise DataError("evaluation examples must be labeled")
        gold.append(ex.label)
    preds = [predict(model, template, ex, mapping, task) for ex in examples]
    return compute_metric(task.metric, preds, gold, task.positive_label)


def mapping_for_model(
    mapping: LabelMapping, model: ConditionalSequenceModel
) -> LabelMapping:
    """Re-encode a mapping's sequences in the given model's vocabulary."""
    return LabelMapping(
        tuple(
            (y, LabelSequence(model.vocab.encode(seq.text), seq.text))
            for y, seq in mapping.entries
        )
    )


def finetune_rerank(
    base_model: ConditionalSequenceModel,
    template: Template,
    split: FewShotSplit,
    scored_mappings: list[ScoredMapping],
    ft_config: FineTuneConfig,
    task: TaskSpec,
) -> ScoredMapping:
    """Fine-tune one clone of the base model per mapping and keep the best.

    Each mapping's dev metric is the metric of its best checkpoint on the
    few-shot dev set; ties break by combo_score, then input order.
    """
    if not scored_mappings:
        raise DataError("finetune_rerank needs at least one mapping")
    if not base_model.trainable:
        raise DataError(f"backend {base_model.backend!r} is not trainable")
    for sm in scored_mappings:
        mapping = mapping_for_model(sm.mapping, base_model)
        mapping.validate(task)
        pairs = [
            (render(template, ex), mapping.sequence_for(ex.label).ids)
            for ex in split.train
        ]
        if ft_config.steps == 0:
            tuned = base_model.clone()
        else:
            tuned = base_model.fine_tune(
                pairs,
                ft_config,
                dev_eval=lambda m: evaluate_mapping(m, template, mapping, split.dev, task),
            )
        sm.dev_metric = evaluate_mapping(tuned, template, mapping, split.dev, task)
    best = scored_mappings[0]
    for sm in scored_mappings[1:]:
        if (sm.dev_metric, sm.combo_score) > (best.dev_metric, best.combo_score):
            best = sm
    return best


@dataclass(slots=True)
class PipelineConfig:
    task: TaskSpec
    template: Template
    data: list[Example]
    generator: ConditionalSequenceModel
    classifier: ConditionalSequenceModel
    search: SearchConfig = field(default_factory=SearchConfig)
    finetune: FineTuneConfig = field(default_factory=FineTuneConfig)
    k: int = 16
    n: int = 20
    seed: int = 0
    out_dir: Path | None = None
    config_echo: dict = field(default_factory=dict)


@dataclass(slots=True)
class SearchReport:
    """Deterministic run record; wall-clock timings live alongside, not
    inside, so reports with one seed are byte-for-byte reproducible."""

    config: dict
    seeds: dict
    candidates: dict[str, list[dict]]
    reranked: dict[str, list[dict]]
    mappings: list[dict]
    winner: dict
    timings: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        body = {
            "config": self.config,
            "seeds": self.seeds,
            "candidates": self.candidates,
            "reranked": self.reranked,
            "mappings": self.mappings,
            "winner": self.winner,
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: Path) -> None:
        (out_dir / "report.json").write_text(self.to_json(), encoding="utf-8")
        (out_dir / "report.timings.json").write_text(
            json.dumps(self.timings, indent=2) + "\n", encoding="utf-8"
        )


def _candidate_row(c: Candidate) -> dict:
    row = {"tokens": list(c.seq), "text": c.text, "gen_score": c.gen_score}
    if c.contrastive_score is not None:
        row["contrastive_score"] = c.contrastive_score
    return row


def run_pipeline(cfg: PipelineConfig) -> SearchReport:
    """generate_all -> rerank_candidates -> top_n_mappings -> finetune_rerank."""
    timings: dict[str, float] = {}
    out_dir = cfg.out_dir
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def stage(name, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            raise PipelineStageError(name, exc) from exc
        timings[name] = time.perf_counter() - start
        return result

    split_seed = cfg.seed + SPLIT_SEED_OFFSET
    split = stage("split", lambda: sample_few_shot(cfg.data, cfg.k, split_seed, cfg.task.labels))
    for ex in split.train:
        cfg.task.check_example(ex)

    candidates = stage(
        "generate", lambda: generate_all(cfg.generator, cfg.template, split, cfg.search)
    )
    if out_dir is not None:
        save_candidates(out_dir / "candidates.jsonl", candidates)

    reranked = stage(
        "rerank",
        lambda: rerank_candidates(cfg.generator, cfg.template, split, candidates),
    )
    if out_dir is not None:
        save_candidates(out_dir / "reranked.jsonl", reranked)

    mappings = stage("combine", lambda: top_n_mappings(reranked, cfg.n))

    ft_config = replace(cfg.finetune, seed=cfg.seed + SHUFFLE_SEED_OFFSET)
    winner = stage(
        "finetune-rerank",
        lambda: finetune_rerank(
            cfg.classifier, cfg.template, split, mappings, ft_config, cfg.task
        ),
    )
    if out_dir is not None:
        save_mappings(out_dir / "mappings.jsonl", mappings)

    report = SearchReport(
        config=cfg.config_echo,
        seeds={
            "master": cfg.seed,
            "split": split_seed,
            "init": cfg.seed + INIT_SEED_OFFSET,
            "shuffle": cfg.seed + SHUFFLE_SEED_OFFSET,
        },
        candidates={y: [_candidate_row(c) for c in cs] for y, cs in candidates.items()},
        reranked={y: [_candidate_row(c) for c in cs] for y, cs in reranked.items()},
        mappings=[
            {
                "mapping": sm.mapping.as_text_dict(),
                "combo_score": sm.combo_score,
                "dev_metric": sm.dev_metric,
            }
            for sm in mappings
        ],
        winner={
            "mapping": winner.mapping.as_text_dict(),
            "combo_score": winner.combo_score,
            "dev_metric": winner.dev_metric,
        },
        timings=timings,
    )
    if out_dir is not None:
        report.write(out_dir)
    return report
