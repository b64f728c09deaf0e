"""Few-shot label-sequence search for conditional sequence models."""

from .beamsearch import (
    Candidate,
    SearchConfig,
    generate_all,
    generate_candidates,
    load_candidates,
    save_candidates,
    verify_gen_scores,
)
from .corpus import Example, FewShotSplit, TaskSpec, load_dataset, sample_few_shot
from .errors import (
    AutoSeqError,
    BackendError,
    DataError,
    PipelineStageError,
    UsageError,
)
from .metrics import accuracy, f1, matthews
from .model import ConditionalSequenceModel, FineTuneConfig, Vocab
from .pipeline import (
    PipelineConfig,
    SearchReport,
    evaluate_mapping,
    finetune_rerank,
    run_pipeline,
)
from .rerank import (
    ScoredMapping,
    contrastive_score,
    load_mappings,
    rerank_candidates,
    save_mappings,
    top_n_mappings,
)
from .scoring import LabelMapping, LabelSequence, class_scores, predict
from .tabular import KeywordSignature, TabularModel, uniform_model
from .templating import MASK, RenderedInput, Template, builtin_template, parse_template, render
from .tiny import TinyNeuralModel

__version__ = "0.1.0"

__all__ = [
    "AutoSeqError",
    "BackendError",
    "Candidate",
    "ConditionalSequenceModel",
    "DataError",
    "Example",
    "FewShotSplit",
    "FineTuneConfig",
    "KeywordSignature",
    "LabelMapping",
    "LabelSequence",
    "MASK",
    "PipelineConfig",
    "PipelineStageError",
    "RenderedInput",
    "ScoredMapping",
    "SearchConfig",
    "SearchReport",
    "TabularModel",
    "TaskSpec",
    "Template",
    "TinyNeuralModel",
    "UsageError",
    "Vocab",
    "accuracy",
    "builtin_template",
    "class_scores",
    "contrastive_score",
    "evaluate_mapping",
    "f1",
    "finetune_rerank",
    "generate_all",
    "generate_candidates",
    "load_candidates",
    "load_dataset",
    "load_mappings",
    "matthews",
    "parse_template",
    "predict",
    "render",
    "rerank_candidates",
    "run_pipeline",
    "sample_few_shot",
    "save_candidates",
    "save_mappings",
    "verify_gen_scores",
    "top_n_mappings",
    "uniform_model",
]
