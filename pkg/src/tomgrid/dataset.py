"""End-to-end dataset production: instantiate scenarios, derive and verify
questions, render prompts and images, and write a reproducible on-disk
benchmark (records.jsonl + images/ + manifest.json).

Everything is a pure function of the master seed and the generation
config: per-scenario seeds are derived with a documented counter-based
split (blake2b over "master:task:index"), so any subset can be
regenerated independently. Every sample passes the independent oracle
before it is written; a single failure aborts the run with the offending
seed. Output files carry no timestamps, so two runs with the same master
seed are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import __version__
from .contexts import load_contexts
from .epistemics import Move
from .geometry import AdjacencyRule, Grid
from .intents import AttitudeKind
from .oracle import verify_sample
from .promptgen import Modality, assemble_prompt
from .render import render_image
from .tasks import (
    GenerationFailed,
    Question,
    Scenario,
    TASK_KINDS,
    TaskKind,
    instantiate,
    make_questions,
)

BELIEF_PRIOR = "uniform_over_maximizers"

RECORDS_FILENAME = "records.jsonl"
MANIFEST_FILENAME = "manifest.json"
IMAGES_DIRNAME = "images"


class DatasetError(Exception):
    pass


class SchemaError(DatasetError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ChecksumMismatch(DatasetError):
    pass


class IntegrityError(DatasetError):
    pass


@dataclass(frozen=True)
class GenerationConfig:
    master_seed: int = 0
    per_task_scenarios: int = 400
    modalities: tuple[str, ...] = ("text", "multimodal")
    adjacency_rule: AdjacencyRule = AdjacencyRule.EIGHT_NEIGHBORHOOD
    context_path: str | None = None

    def canonical(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "per_task_scenarios": self.per_task_scenarios,
            "modalities": sorted(self.modalities),
            "adjacency_rule": self.adjacency_rule.value,
            "context_path": self.context_path,
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass
class Sample:
    sample_id: str
    scenario_id: str
    task: str
    question_kind: str
    format_variant: int
    scenario: dict
    question: dict
    gold_letters: tuple[str, ...]
    prompt_text: str | None
    prompt_multimodal: str | None
    image_path: str | None
    provenance: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "scenario_id": self.scenario_id,
            "task": self.task,
            "question_kind": self.question_kind,
            "format_variant": self.format_variant,
            "scenario": self.scenario,
            "question": self.question,
            "gold_letters": list(self.gold_letters),
            "prompt_text": self.prompt_text,
            "prompt_multimodal": self.prompt_multimodal,
            "image_path": self.image_path,
            "provenance": self.provenance,
        }


_REQUIRED_FIELDS = (
    "sample_id",
    "scenario_id",
    "task",
    "question_kind",
    "format_variant",
    "scenario",
    "question",
    "gold_letters",
)


def scenario_seed(master_seed: int, task: TaskKind, index: int) -> int:
    digest = hashlib.blake2b(
        f"{master_seed}:{task.value}:{index}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def question_seed(seed: int) -> int:
    digest = hashlib.blake2b(f"{seed}:questions".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def scenario_to_dict(scenario: Scenario) -> dict:
    events = []
    for event in scenario.events:
        if isinstance(event, Move):
            events.append({"kind": "move", "agent": event.agent, "direction": event.direction.value})
        else:
            events.append({"kind": "communicate", "agent": event.agent, "info": event.info})
    attitude: dict = {"kind": scenario.attitude.kind.value}
    if scenario.attitude.kind is AttitudeKind.MIXED:
        attitude["coop_target"] = scenario.attitude.coop_target
        attitude["obstruct_target"] = scenario.attitude.obstruct_target
    return {
        "task": scenario.task.value,
        "seed": scenario.seed,
        "adjacency_rule": scenario.adjacency_rule.value,
        "transformation": scenario.transformation.value,
        "size_delta": scenario.size_delta,
        "agent_permutation": list(scenario.agent_perm),
        "info_permutation": list(scenario.info_perm),
        "context": {
            "id": scenario.context.id,
            "setting": scenario.context.setting,
            "agent_noun": scenario.context.agent_noun,
            "agent_noun_plural": scenario.context.agent_noun_plural,
            "place_noun": scenario.context.place_noun,
            "info_labels": list(scenario.context.info_labels),
        },
        "side": scenario.grid.side,
        "placements": {str(a): list(c) for a, c in sorted(scenario.grid.placements.items())},
        "locked_pairs": sorted(sorted(pair) for pair in scenario.grid.locked_pairs),
        "initial_knowledge": {
            str(a): sorted(k) for a, k in sorted(scenario.initial_knowledge.items())
        },
        "attitude": attitude,
        "target_agent": scenario.target_agent,
        "events": events,
    }


def question_to_dict(question: Question) -> dict:
    return {
        "kind": question.kind.value,
        "variant": question.variant,
        "subjects": dict(question.subjects),
        "options": [
            {"letter": o.letter, "text": o.text, "semantic": list(o.semantic)}
            for o in question.options
        ],
        "gold_letters": sorted(question.gold_letters),
    }


def grid_from_dict(scenario: dict) -> Grid:
    return Grid(
        side=int(scenario["side"]),
        placements={int(a): tuple(c) for a, c in scenario["placements"].items()},
        locked_pairs=frozenset(frozenset(p) for p in scenario.get("locked_pairs", [])),
    )


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def generate_dataset(config: GenerationConfig, out_dir: str | Path, progress=None) -> dict:
    """Produce the full benchmark under `out_dir` and return the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    contexts = load_contexts(config.context_path)
    multimodal = "multimodal" in config.modalities
    text = "text" in config.modalities
    if not (multimodal or text):
        raise DatasetError("config enables no modality")

    if multimodal:
        (out / IMAGES_DIRNAME).mkdir(exist_ok=True)

    from .tasks import TEMPLATES  # constraint lists exported for auditability

    records_path = out / RECORDS_FILENAME
    image_hashes: dict[str, str] = {}
    per_task_counts: dict[str, int] = {}
    total = 0

    with records_path.open("w", encoding="utf-8", newline="\n") as records_file:
        for task in TASK_KINDS:
            for index in range(config.per_task_scenarios):
                seed = scenario_seed(config.master_seed, task, index)
                try:
                    scenario = instantiate(
                        task, seed, contexts, adjacency_rule=config.adjacency_rule
                    )
                    questions = make_questions(scenario, random.Random(question_seed(seed)))
                except Exception as exc:
                    raise GenerationFailed(
                        f"{task.value} scenario {index} (seed {seed}): {exc}"
                    ) from exc

                scenario_id = f"{task.value}-{index:05d}"
                scenario_dict = scenario_to_dict(scenario)

                image_rel = None
                if multimodal:
                    png = render_image(scenario.grid)
                    image_rel = f"{IMAGES_DIRNAME}/{scenario_id}.png"
                    (out / image_rel).write_bytes(png)
                    image_hashes[image_rel] = hashlib.sha256(png).hexdigest()

                for question in questions:
                    sample = Sample(
                        sample_id=f"{scenario_id}-{question.kind.value}",
                        scenario_id=scenario_id,
                        task=task.value,
                        question_kind=question.kind.value,
                        format_variant=question.variant,
                        scenario=scenario_dict,
                        question=question_to_dict(question),
                        gold_letters=tuple(sorted(question.gold_letters)),
                        prompt_text=assemble_prompt(scenario, question, Modality.TEXT)
                        if text
                        else None,
                        prompt_multimodal=assemble_prompt(scenario, question, Modality.MULTIMODAL)
                        if multimodal
                        else None,
                        image_path=image_rel,
                        provenance={
                            "generator_version": __version__,
                            "master_seed": config.master_seed,
                            "scenario_seed": seed,
                            "belief_prior": BELIEF_PRIOR,
                        },
                    )
                    result = verify_sample(
                        sample.scenario, sample.question, list(sample.gold_letters)
                    )
                    if not result.ok:
                        raise GenerationFailed(
                            f"oracle rejected {sample.sample_id} (seed {seed}): "
                            f"{result.diagnostics}"
                        )
                    records_file.write(json.dumps(sample.to_record(), sort_keys=True) + "\n")
                    total += 1
                per_task_counts[task.value] = per_task_counts.get(task.value, 0) + 3
            if progress is not None:
                progress(f"{task.value}: {config.per_task_scenarios} scenarios")

    manifest = {
        "format_version": 1,
        "generator_version": __version__,
        "master_seed": config.master_seed,
        "config": config.canonical(),
        "config_hash": config.hash(),
        "belief_prior": BELIEF_PRIOR,
        "counts": {
            "samples": total,
            "scenarios": total // 3,
            "per_task": per_task_counts,
            "per_task_per_question_kind": config.per_task_scenarios,
        },
        "records_file": {
            "path": RECORDS_FILENAME,
            "lines": total,
            "sha256": _sha256_file(records_path),
        },
        "images": {"count": len(image_hashes), "sha256": image_hashes},
        "template_constraints": {
            kind.value: list(TEMPLATES[kind].constraints) for kind in TASK_KINDS
        },
    }
    (out / MANIFEST_FILENAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def _validate_record(record: dict, line: int) -> None:
    for key in _REQUIRED_FIELDS:
        if key not in record:
            raise SchemaError(f"missing field {key!r}", line)
    options = record["question"].get("options")
    if not isinstance(options, list) or not 2 <= len(options) <= 4:
        raise SchemaError("question needs 2..4 options", line)
    letters = {o.get("letter") for o in options}
    gold = record["gold_letters"]
    if not gold or not set(gold) <= letters:
        raise SchemaError("gold letters empty or outside option letters", line)
    if record["question"].get("gold_letters") != sorted(gold):
        raise SchemaError("question/gold letter mismatch", line)
    scenario = record["scenario"]
    for key in ("side", "placements", "initial_knowledge", "events", "target_agent"):
        if key not in scenario:
            raise SchemaError(f"scenario missing {key!r}", line)


def load_manifest(path: str | Path) -> tuple[dict, Path]:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_FILENAME
    if not p.exists():
        raise DatasetError(f"no manifest at {p}")
    return json.loads(p.read_text(encoding="utf-8")), p.parent


def load_dataset(path: str | Path, verify_checksums: bool = True) -> list[Sample]:
    """Load, schema-validate, and checksum-verify a generated dataset."""
    manifest, root = load_manifest(path)
    records_path = root / manifest["records_file"]["path"]
    if not records_path.exists():
        raise IntegrityError(f"records file missing: {records_path}")
    if verify_checksums:
        digest = _sha256_file(records_path)
        if digest != manifest["records_file"]["sha256"]:
            raise ChecksumMismatch(
                f"records file digest {digest} does not match manifest"
            )

    samples: list[Sample] = []
    with records_path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc}", line_no) from exc
            _validate_record(record, line_no)
            samples.append(
                Sample(
                    sample_id=record["sample_id"],
                    scenario_id=record["scenario_id"],
                    task=record["task"],
                    question_kind=record["question_kind"],
                    format_variant=record["format_variant"],
                    scenario=record["scenario"],
                    question=record["question"],
                    gold_letters=tuple(record["gold_letters"]),
                    prompt_text=record.get("prompt_text"),
                    prompt_multimodal=record.get("prompt_multimodal"),
                    image_path=record.get("image_path"),
                    provenance=record.get("provenance", {}),
                )
            )

    expected = manifest["records_file"]["lines"]
    if len(samples) != expected:
        raise SchemaError(f"expected {expected} records, found {len(samples)}")

    image_hashes = manifest.get("images", {}).get("sha256", {})
    checked: set[str] = set()
    for sample in samples:
        if sample.image_path is None or sample.image_path in checked:
            continue
        checked.add(sample.image_path)
        image_file = root / sample.image_path
        if not image_file.exists():
            raise IntegrityError(f"missing image for {sample.sample_id}: {sample.image_path}")
        if verify_checksums and sample.image_path in image_hashes:
            if _sha256_file(image_file) != image_hashes[sample.image_path]:
                raise ChecksumMismatch(f"image digest mismatch: {sample.image_path}")
    return samples


def iter_scenario_triples(samples: Iterable[Sample]) -> dict[str, dict[str, Sample]]:
    """scenario_id -> {question_kind -> sample}; used by scoring and quiz."""
    triples: dict[str, dict[str, Sample]] = {}
    for sample in samples:
        triples.setdefault(sample.scenario_id, {})[sample.question_kind] = sample
    return triples
