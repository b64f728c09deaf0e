"""Command-line surface: generate | rerank | search | eval | serve-check.

One JSON config file drives a run; a handful of flags override the common
knobs. Exit codes: 0 ok, 1 usage, 2 data, 3 backend/transport, 4 internal.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .beamsearch import SearchConfig, generate_all, load_candidates, save_candidates
from .corpus import TaskSpec, load_dataset, sample_few_shot
from .errors import AutoSeqError, BackendError, DataError, PipelineStageError, UsageError
from .model import ConditionalSequenceModel, FineTuneConfig, Vocab
from .pipeline import (
    INIT_SEED_OFFSET,
    PipelineConfig,
    evaluate_mapping,
    finetune_rerank,
    mapping_for_model,
    run_pipeline,
)
from .rerank import ScoredMapping, rerank_candidates, save_mappings, top_n_mappings
from .scoring import LabelMapping, LabelSequence
from .serve_check import serve_check
from .tabular import load_tabular_spec
from .templating import builtin_template, parse_template, render
from .tiny import TinyNeuralModel

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND, EXIT_INTERNAL = 0, 1, 2, 3, 4


def _load_config(path: str | None, overrides: argparse.Namespace) -> dict:
    if path is None:
        raise UsageError("--config is required for this command")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: invalid JSON ({exc.msg})") from exc
    cfg.setdefault("_base_dir", str(p.parent))
    ov = vars(overrides)
    if ov.get("task"):
        cfg.setdefault("task", {})["kind"] = ov["task"]
    if ov.get("data"):
        cfg.setdefault("data", {})["path"] = ov["data"]
    if ov.get("seed") is not None:
        cfg["seed"] = ov["seed"]
    if ov.get("k") is not None:
        cfg.setdefault("split", {})["k"] = ov["k"]
    if ov.get("beam_width") is not None:
        cfg.setdefault("search", {})["beam_width"] = ov["beam_width"]
    if ov.get("max_len") is not None:
        cfg.setdefault("search", {})["max_len"] = ov["max_len"]
    if ov.get("autoword"):
        cfg.setdefault("search", {})["max_len"] = 1
    if ov.get("n") is not None:
        cfg["n"] = ov["n"]
    if ov.get("backend"):
        cfg.setdefault("generator", {})["backend"] = ov["backend"]
        cfg.setdefault("classifier", {})["backend"] = ov["backend"]
    if ov.get("remote_endpoint"):
        for section in ("generator", "classifier"):
            cfg.setdefault(section, {})["endpoint"] = ov["remote_endpoint"]
    if ov.get("out_dir"):
        cfg["out_dir"] = ov["out_dir"]
    return cfg


def _resolve(cfg: dict, relpath: str) -> Path:
    p = Path(relpath)
    return p if p.is_absolute() else Path(cfg["_base_dir"]) / p


def _task_from_config(cfg: dict) -> TaskSpec:
    t = cfg.get("task")
    if not t or "kind" not in t or "labels" not in t:
        raise UsageError("config needs task.kind and task.labels")
    return TaskSpec(
        task_kind=t["kind"],
        labels=tuple(t["labels"]),
        metric=t.get("metric", "accuracy"),
        positive_label=t.get("positive_label"),
    )


def _template_from_config(cfg: dict, task: TaskSpec):
    if "template" in cfg:
        return parse_template(cfg["template"])
    return builtin_template(task.task_kind)


def _data_from_config(cfg: dict):
    d = cfg.get("data")
    if not d or "path" not in d:
        raise UsageError("config needs data.path")
    return load_dataset(_resolve(cfg, d["path"]), d.get("format", "json-lines"))


def _split_from_config(cfg: dict, data, task: TaskSpec):
    s = cfg.get("split", {})
    seed = cfg.get("seed", 0)
    return sample_few_shot(data, s.get("k", 16), seed, task.labels)


def _build_model(
    cfg: dict, section: str, data, task: TaskSpec, seed: int
) -> ConditionalSequenceModel:
    spec = cfg.get(section, {"backend": "tiny-neural"})
    backend = spec.get("backend", "tiny-neural")
    if backend == "tabular":
        if "spec" not in spec:
            raise UsageError(f"{section}: tabular backend needs a 'spec' path")
        return load_tabular_spec(_resolve(cfg, spec["spec"]))
    if backend == "tiny-neural":
        if "checkpoint" in spec:
            return TinyNeuralModel.load(_resolve(cfg, spec["checkpoint"]))
        template = _template_from_config(cfg, task)
        texts = [render(template, ex).text for ex in data]
        gen_spec = cfg.get("generator", {})
        if gen_spec.get("backend") == "tabular" and "spec" in gen_spec:
            gen = load_tabular_spec(_resolve(cfg, gen_spec["spec"]))
            texts.append(" ".join(gen.vocab.tokens[i] for i in gen.vocab.content_ids))
        vocab = Vocab.from_texts(texts)
        return TinyNeuralModel(
            vocab,
            d_model=spec.get("d_model", 32),
            d_ff=spec.get("d_ff", 64),
            seed=spec.get("seed", seed),
        )
    if backend == "remote":
        from .remote import connect

        if "command" in spec:
            return connect(command=spec["command"])
        if "endpoint" in spec:
            return connect(endpoint=spec["endpoint"])
        raise UsageError(f"{section}: remote backend needs 'endpoint' or 'command'")
    raise UsageError(f"{section}: unknown backend {backend!r}")


def _search_config(cfg: dict) -> SearchConfig:
    s = cfg.get("search", {})
    return SearchConfig(
        beam_width=s.get("beam_width", 50),
        max_len=s.get("max_len", 20),
        length_penalty=s.get("length_penalty", 0.0),
    )


def _ft_config(cfg: dict) -> FineTuneConfig:
    f = cfg.get("finetune", {})
    return FineTuneConfig(
        steps=f.get("steps", 1000),
        batch_size=f.get("batch_size", 8),
        learning_rate=f.get("learning_rate", 6e-5),
        validate_every=f.get("validate_every", 100),
        seed=f.get("seed", cfg.get("seed", 0)),
    )


def _out_dir(cfg: dict) -> Path:
    out = cfg.get("out_dir", "out")
    path = _resolve(cfg, out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config_echo(cfg: dict) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if not k.startswith("_")}


def cmd_generate(args) -> int:
    cfg = _load_config(args.config, args)
    task = _task_from_config(cfg)
    data = _data_from_config(cfg)
    template = _template_from_config(cfg, task)
    split = _split_from_config(cfg, data, task)
    generator = _build_model(cfg, "generator", data, task, cfg.get("seed", 0))
    candidates = generate_all(generator, template, split, _search_config(cfg))
    out = _out_dir(cfg) / "candidates.jsonl"
    save_candidates(out, candidates)
    print(out)
    return EXIT_OK


def cmd_rerank(args) -> int:
    cfg = _load_config(args.config, args)
    task = _task_from_config(cfg)
    data = _data_from_config(cfg)
    template = _template_from_config(cfg, task)
    split = _split_from_config(cfg, data, task)
    generator = _build_model(cfg, "generator", data, task, cfg.get("seed", 0))
    out_dir = _out_dir(cfg)
    candidates = load_candidates(out_dir / "candidates.jsonl")
    reranked = rerank_candidates(generator, template, split, candidates)
    save_candidates(out_dir / "reranked.jsonl", reranked)
    mappings = top_n_mappings(reranked, cfg.get("n", 20))
    save_mappings(out_dir / "mappings.jsonl", mappings)
    print(out_dir / "mappings.jsonl")
    return EXIT_OK


def _baseline_mapping(path: Path, generator) -> ScoredMapping:
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read baseline mapping {path}: {exc}") from exc
    mapping = LabelMapping(
        tuple(
            (y, LabelSequence(generator.vocab.encode(text), text))
            for y, text in entries.items()
        )
    )
    return ScoredMapping(mapping, 0.0)


def cmd_search(args) -> int:
    cfg = _load_config(args.config, args)
    task = _task_from_config(cfg)
    data = _data_from_config(cfg)
    template = _template_from_config(cfg, task)
    seed = cfg.get("seed", 0)
    generator = _build_model(cfg, "generator", data, task, seed)
    classifier = _build_model(cfg, "classifier", data, task, seed + INIT_SEED_OFFSET)
    out_dir = _out_dir(cfg)
    if args.baseline_mapping:
        # bypass mode: evaluate a manual mapping, skipping generation/re-ranking
        split = _split_from_config(cfg, data, task)
        sm = _baseline_mapping(Path(args.baseline_mapping), generator)
        mapping_for_model(sm.mapping, classifier).validate(task)
        winner = finetune_rerank(classifier, template, split, [sm], _ft_config(cfg), task)
        result = {"mapping": winner.mapping.as_text_dict(), "dev_metric": winner.dev_metric}
        (out_dir / "report.json").write_text(
            json.dumps({"config": _config_echo(cfg), "winner": result}, indent=2,
                       sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(json.dumps(result))
        return EXIT_OK
    pipeline_cfg = PipelineConfig(
        task=task,
        template=template,
        data=data,
        generator=generator,
        classifier=classifier,
        search=_search_config(cfg),
        finetune=_ft_config(cfg),
        k=cfg.get("split", {}).get("k", 16),
        n=cfg.get("n", 20),
        seed=seed,
        out_dir=out_dir,
        config_echo=_config_echo(cfg),
    )
    report = run_pipeline(pipeline_cfg)
    print(json.dumps(report.winner))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config, args)
    task = _task_from_config(cfg)
    data = _data_from_config(cfg)
    template = _template_from_config(cfg, task)
    split = _split_from_config(cfg, data, task)
    if not args.mapping:
        raise UsageError("eval needs --mapping")
    if not args.checkpoint:
        raise UsageError("eval needs --checkpoint")
    model = TinyNeuralModel.load(args.checkpoint)
    entries = json.loads(Path(args.mapping).read_text(encoding="utf-8"))
    mapping = LabelMapping(
        tuple(
            (y, LabelSequence(model.vocab.encode(text), text))
            for y, text in entries.items()
        )
    )
    mapping.validate(task)
    metric = evaluate_mapping(model, template, mapping, split.dev, task)
    print(f"{task.metric}: {metric}")
    return EXIT_OK


def cmd_serve_check(args) -> int:
    from .remote import connect

    if args.remote_endpoint:
        model = connect(endpoint=args.remote_endpoint)
    elif args.server_command:
        model = connect(command=args.server_command.split())
    else:
        raise UsageError("serve-check needs --remote-endpoint or --server-command")
    try:
        results = serve_check(model)
    finally:
        model.close()
    ok = True
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"[{status}] {r.name}" + (f": {r.detail}" if r.detail else ""))
        ok = ok and r.ok
    return EXIT_OK if ok else EXIT_BACKEND


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; our contract reserves 2 for data errors
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="autoseq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--task", help="override task kind")
        p.add_argument("--data", help="override dataset path")
        p.add_argument("--seed", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--beam-width", type=int, dest="beam_width")
        p.add_argument("--max-len", type=int, dest="max_len")
        p.add_argument("--n", type=int)
        p.add_argument("--autoword", action="store_true")
        p.add_argument("--backend", choices=["tabular", "tiny-neural", "remote"])
        p.add_argument("--remote-endpoint", dest="remote_endpoint")
        p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("generate", help="write per-class candidate sequences")
    common(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("rerank", help="contrastively re-rank generated candidates")
    common(p)
    p.set_defaults(fn=cmd_rerank)

    p = sub.add_parser("search", help="run the full label-sequence search")
    common(p)
    p.add_argument("--baseline-mapping", help="manual mapping JSON; skips steps 1-2")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("eval", help="evaluate a mapping with a saved checkpoint")
    common(p)
    p.add_argument("--mapping", help="mapping JSON file {class: text}")
    p.add_argument("--checkpoint", help="tiny-neural checkpoint path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve-check", help="protocol conformance against a server")
    p.add_argument("--remote-endpoint", dest="remote_endpoint")
    p.add_argument("--server-command", dest="server_command")
    p.set_defaults(fn=cmd_serve_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineStageError as exc:
        code = EXIT_BACKEND if isinstance(exc.cause, BackendError) else EXIT_DATA
        print(f"error: {exc}", file=sys.stderr)
        return code
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except AutoSeqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit-code mapping
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
