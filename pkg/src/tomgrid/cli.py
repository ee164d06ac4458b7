"""Single command-line entry point: generate / render / verify / eval /
score / quiz, sharing a JSON config file whose values individual flags
override. Usage errors exit 2; integrity or verification failures exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .dataset import (
    DatasetError,
    GenerationConfig,
    grid_from_dict,
    load_dataset,
    load_manifest,
)
from .evalharness import (
    AdapterConfig,
    EvalError,
    QuizConfig,
    SessionAborted,
    emit_report,
    load_records,
    run_eval,
    run_quiz,
    score_all_models,
)
from .geometry import AdjacencyRule
from .oracle import verify_dataset
from .render import render_ascii, render_image
from .tasks import TaskError


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _generation_config(args, file_cfg: dict) -> GenerationConfig:
    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    modalities = pick(args.modalities, "modalities", "text,multimodal")
    if isinstance(modalities, str):
        modalities = tuple(m.strip() for m in modalities.split(",") if m.strip())
    return GenerationConfig(
        master_seed=pick(args.seed, "master_seed", 0),
        per_task_scenarios=pick(args.per_task, "per_task_scenarios", 400),
        modalities=tuple(modalities),
        adjacency_rule=AdjacencyRule(pick(args.adjacency, "adjacency_rule", "eight_neighborhood")),
        context_path=pick(args.contexts, "context_path", None),
    )


def _cmd_generate(args) -> int:
    cfg = _generation_config(args, _load_config_file(args.config))
    manifest = generate_with_progress(cfg, args.out)
    counts = manifest["counts"]
    print(
        f"tomgrid {__version__}: wrote {counts['samples']} samples "
        f"({counts['scenarios']} scenarios) to {args.out} "
        f"[master_seed={cfg.master_seed}, config_hash={manifest['config_hash'][:12]}]"
    )
    return 0


def generate_with_progress(cfg: GenerationConfig, out_dir: str):
    from .dataset import generate_dataset

    return generate_dataset(cfg, out_dir, progress=lambda msg: print(f"  {msg}", file=sys.stderr))


def _cmd_render(args) -> int:
    samples = load_dataset(args.dataset, verify_checksums=False)
    match = [s for s in samples if s.sample_id == args.sample or s.scenario_id == args.sample]
    if not match:
        print(f"no sample or scenario named {args.sample!r}", file=sys.stderr)
        return 1
    grid = grid_from_dict(match[0].scenario)
    if args.image:
        Path(args.image).write_bytes(render_image(grid))
        print(f"wrote {args.image}")
    else:
        sys.stdout.write(render_ascii(grid))
    return 0


def _cmd_verify(args) -> int:
    samples = load_dataset(args.dataset)
    report = verify_dataset(samples)
    manifest, _ = load_manifest(args.dataset)
    payload = {
        "header": {
            "harness_version": __version__,
            "master_seed": manifest.get("master_seed"),
            "config_hash": manifest.get("config_hash"),
        },
        "total": report.total,
        "passed": report.passed,
        "failures": [
            {"sample_id": sid, "independent_gold": list(gold), "diagnostics": diag}
            for sid, gold, diag in report.failures
        ],
    }
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"verified {report.passed}/{report.total} samples")
    for sid, gold, diag in report.failures[:20]:
        print(f"  FAIL {sid}: {diag}", file=sys.stderr)
    return 0 if report.ok else 1


def _cmd_eval(args) -> int:
    samples = load_dataset(args.dataset, verify_checksums=False)
    if args.limit:
        samples = samples[: args.limit]
    adapter = AdapterConfig(
        endpoint_url=args.endpoint,
        model_id=args.model,
        api_key_env=args.api_key_env,
        timeout_s=args.timeout,
        max_retries=args.max_retries,
    )
    modality = "multimodal" if args.modality == "image" else "text"
    store = run_eval(
        samples,
        adapter,
        modality=modality,
        store_path=args.out,
        dataset_root=args.dataset,
        concurrency=args.concurrency,
        resume=args.resume,
        progress=lambda msg: print(f"  {msg}", file=sys.stderr),
    )
    print(f"responses in {store}")
    return 0


def _cmd_score(args) -> int:
    samples = load_dataset(args.dataset, verify_checksums=False)
    records = load_records(args.responses)
    reports = score_all_models(records, samples)
    manifest, _ = load_manifest(args.dataset)
    header = {
        "harness_version": __version__,
        "master_seed": manifest.get("master_seed"),
        "config_hash": manifest.get("config_hash"),
        "responses": str(args.responses),
    }
    fmt = {"md": "markdown", "csv": "csv", "plotdata": "plotdata"}[args.format]
    content = emit_report(reports, fmt, header=header, out_path=args.out)
    if not args.out:
        sys.stdout.write(content)
    return 0


def _cmd_quiz(args) -> int:
    samples = load_dataset(args.dataset, verify_checksums=False)
    config = QuizConfig(n_questions=args.n, seed=args.seed, session_id=args.session)
    try:
        store = run_quiz(samples, config, args.out)
    except SessionAborted as exc:
        print(f"\n{exc}", file=sys.stderr)
        return 1
    print(f"\nresponses in {store}; score with: tomgrid score --responses {store} --dataset {args.dataset}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tomgrid", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tomgrid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="produce a benchmark from a master seed")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--per-task", dest="per_task", type=int, default=None)
    p.add_argument("--contexts", default=None, help="context library file")
    p.add_argument(
        "--adjacency",
        choices=[r.value for r in AdjacencyRule],
        default=None,
    )
    p.add_argument("--modalities", default=None, help="comma list: text,multimodal")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("render", help="print or export one sample's grid")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sample", required=True, help="sample or scenario id")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--ascii", action="store_true", default=True)
    group.add_argument("--image", metavar="OUT_PNG", default=None)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("verify", help="re-derive every gold answer independently")
    p.add_argument("--dataset", required=True)
    p.add_argument("--report", help="write a machine-readable fail report (JSON)")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("eval", help="run a model over the dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--endpoint", required=True, help="chat-completion POST URL")
    p.add_argument("--model", required=True)
    p.add_argument("--modality", choices=["text", "image"], default="text")
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--out", required=True, help="response store (JSONL)")
    p.add_argument("--api-key-env", default="TOMGRID_API_KEY")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--max-retries", type=int, default=5)
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("score", help="score stored responses")
    p.add_argument("--responses", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", choices=["md", "csv", "plotdata"], default="md")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("quiz", help="terminal human-study session")
    p.add_argument("--dataset", required=True)
    p.add_argument("--n", type=int, default=45)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--session", default="session-0")
    p.set_defaults(func=_cmd_quiz)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, TaskError, EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
