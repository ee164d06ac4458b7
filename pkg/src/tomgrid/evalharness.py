"""Model evaluation: a generic chat-completion client, robust answer-tag
extraction, the P/B/I/PB/PBI score family, report emission, and the
terminal quiz used for human sessions.

Wire contract: POST {model, temperature: 0, messages: [{role: "user",
content: ...}]} to a configurable URL with a bearer token taken from an
environment variable. Multimodal samples attach the PNG as an inline
base64 image part. Answer extraction precedence: the first valid
<Answer>L</Answer> tag, then "Answer: L" style markers, then a final line
consisting of a lone letter; anything else is unparseable and scores as
incorrect.
"""

from __future__ import annotations

import base64
import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import os

import requests

from . import __version__
from .dataset import Sample, iter_scenario_triples
from .render import render_ascii
from .dataset import grid_from_dict

QUESTION_KIND_ORDER = ("percept", "belief", "intention")
TASK_ORDER = ("cmsc", "cmcc", "pcc", "oc", "mc")

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class EvalError(Exception):
    pass


class MissingApiKey(EvalError):
    pass


class HttpError(EvalError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class RateLimited(HttpError):
    pass


class RequestTimeout(EvalError):
    pass


class SessionAborted(EvalError):
    def __init__(self, path: Path, answered: int):
        super().__init__(f"session aborted after {answered} answers; partial file at {path}")
        self.path = path
        self.answered = answered


@dataclass(frozen=True)
class AdapterConfig:
    endpoint_url: str
    model_id: str
    api_key_env: str = "TOMGRID_API_KEY"
    timeout_s: float = 120.0
    max_retries: int = 5
    backoff_base_s: float = 1.0
    max_output_tokens: int | None = None


@dataclass(frozen=True)
class QueryResult:
    text: str
    retries: int
    latency_s: float


def _request_body(adapter: AdapterConfig, prompt: str, image_bytes: bytes | None) -> dict:
    if image_bytes is None:
        content: object = prompt
    else:
        encoded = base64.b64encode(image_bytes).decode("ascii")
        content = [
            {"type": "text", "text": prompt},
            {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{encoded}"}},
        ]
    body = {
        "model": adapter.model_id,
        "temperature": 0,
        "messages": [{"role": "user", "content": content}],
    }
    if adapter.max_output_tokens is not None:
        body["max_tokens"] = adapter.max_output_tokens
    return body


def query_model(
    adapter: AdapterConfig,
    prompt: str,
    image_bytes: bytes | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> QueryResult:
    """Single-turn completion at temperature 0 with bounded retries.

    Retries with exponential backoff on timeouts, connection errors, 429,
    and 5xx; other HTTP statuses fail immediately.
    """
    key = os.environ.get(adapter.api_key_env, "")
    if not key:
        raise MissingApiKey(f"set {adapter.api_key_env} to call {adapter.endpoint_url}")
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    body = _request_body(adapter, prompt, image_bytes)

    start = time.monotonic()
    last_error: EvalError | None = None
    for attempt in range(adapter.max_retries + 1):
        if attempt:
            sleep(adapter.backoff_base_s * 2 ** (attempt - 1))
        try:
            response = requests.post(
                adapter.endpoint_url, json=body, headers=headers, timeout=adapter.timeout_s
            )
        except requests.Timeout:
            last_error = RequestTimeout(f"timeout after {adapter.timeout_s}s")
            continue
        except requests.RequestException as exc:
            last_error = EvalError(f"request failed: {exc}")
            continue
        if response.status_code in RETRYABLE_STATUS:
            cls = RateLimited if response.status_code == 429 else HttpError
            last_error = cls(response.status_code, response.text)
            continue
        if response.status_code != 200:
            raise HttpError(response.status_code, response.text)
        payload = response.json()
        text = payload["choices"][0]["message"]["content"]
        return QueryResult(text=text, retries=attempt, latency_s=time.monotonic() - start)
    raise last_error if last_error is not None else EvalError("retries exhausted")


_TAG_RE = re.compile(r"<answer>(.*?)</answer>", re.IGNORECASE | re.DOTALL)
_TAG_INNER_RE = re.compile(r"^\s*\(?([A-Da-d])\b")
_MARKER_RE = re.compile(r"\*{0,2}answer\*{0,2}\s*:\s*\*{0,2}\s*\(?([A-Da-d])\b", re.IGNORECASE)
_LONE_LETTER_RE = re.compile(r"^\(?([A-Da-d])[).:]?$")


def extract_answer(raw: str, option_letters: Sequence[str]) -> str | None:
    """Extract the chosen letter, or None when unparseable.

    Precedence: (1) first <Answer>L</Answer> tag with a valid letter,
    (2) an "Answer: L" / "**Answer:** L" marker, (3) a final line that is
    a lone letter. The letter must be one of the sample's option letters.
    """
    valid = {letter.upper() for letter in option_letters}
    for match in _TAG_RE.finditer(raw):
        inner = _TAG_INNER_RE.match(match.group(1))
        if inner and inner.group(1).upper() in valid:
            return inner.group(1).upper()
    marker = _MARKER_RE.search(raw)
    if marker and marker.group(1).upper() in valid:
        return marker.group(1).upper()
    lines = [line.strip() for line in raw.splitlines() if line.strip()]
    if lines:
        lone = _LONE_LETTER_RE.match(lines[-1])
        if lone and lone.group(1).upper() in valid:
            return lone.group(1).upper()
    return None


# --------------------------------------------------------------------------
# Response store
# --------------------------------------------------------------------------

def store_header(extra: dict | None = None) -> dict:
    header = {"type": "header", "harness_version": __version__}
    if extra:
        header.update(extra)
    return header


def append_record(path: Path, record: dict) -> None:
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")
        f.flush()


def load_records(path: str | Path) -> list[dict]:
    """Response records from a store file, header and status lines skipped."""
    records = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            if row.get("type", "response") == "response":
                records.append(row)
    return records


def run_eval(
    samples: Sequence[Sample],
    adapter: AdapterConfig,
    modality: str,
    store_path: str | Path,
    dataset_root: str | Path,
    concurrency: int = 4,
    resume: bool = False,
    limit: int | None = None,
    progress: Callable[[str], None] | None = None,
) -> Path:
    """Query the model for every sample, appending crash-safe records."""
    store = Path(store_path)
    done: set[str] = set()
    if resume and store.exists():
        for record in load_records(store):
            if record.get("error") is None:
                done.add(record["sample_id"])
    elif store.exists() and not resume:
        raise EvalError(f"{store} exists; pass resume=True to continue it")
    else:
        append_record(
            store,
            store_header(
                {
                    "model_id": adapter.model_id,
                    "modality": modality,
                    "endpoint": adapter.endpoint_url,
                }
            ),
        )

    todo = [s for s in samples if s.sample_id not in done]
    if limit is not None:
        todo = todo[:limit]
    root = Path(dataset_root)

    def worker(sample: Sample) -> dict:
        prompt = sample.prompt_multimodal if modality == "multimodal" else sample.prompt_text
        if prompt is None:
            return {
                "type": "response",
                "sample_id": sample.sample_id,
                "model_id": adapter.model_id,
                "modality": modality,
                "raw_output": None,
                "extracted": None,
                "correct": False,
                "latency_s": 0.0,
                "retries": 0,
                "timestamp": time.time(),
                "error": f"sample has no {modality} prompt",
            }
        image = None
        if modality == "multimodal" and sample.image_path:
            image = (root / sample.image_path).read_bytes()
        try:
            result = query_model(adapter, prompt, image)
            extracted = extract_answer(result.text, [o["letter"] for o in sample.question["options"]])
            return {
                "type": "response",
                "sample_id": sample.sample_id,
                "model_id": adapter.model_id,
                "modality": modality,
                "raw_output": result.text,
                "extracted": extracted,
                "correct": extracted in sample.gold_letters,
                "latency_s": result.latency_s,
                "retries": result.retries,
                "timestamp": time.time(),
                "error": None,
            }
        except EvalError as exc:
            return {
                "type": "response",
                "sample_id": sample.sample_id,
                "model_id": adapter.model_id,
                "modality": modality,
                "raw_output": None,
                "extracted": None,
                "correct": False,
                "latency_s": 0.0,
                "retries": adapter.max_retries,
                "timestamp": time.time(),
                "error": str(exc),
            }

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        for n, record in enumerate(pool.map(worker, todo), start=1):
            append_record(store, record)
            if progress is not None and n % 50 == 0:
                progress(f"{n}/{len(todo)} responses")
    return store


# --------------------------------------------------------------------------
# Scoring
# --------------------------------------------------------------------------

@dataclass
class TaskScores:
    scenarios: int
    p: float
    b: float
    i: float
    pb: float
    pbi: float


@dataclass
class ScoreReport:
    model_id: str
    per_task: dict[str, TaskScores]
    avg_pbi: float
    unparseable_rate: float
    scored_records: int
    incomplete_scenarios: list[str]
    unmatched_records: int

    def check_invariants(self) -> None:
        for task, scores in self.per_task.items():
            if not (
                scores.pbi <= scores.pb + 1e-9
                and scores.pb <= min(scores.p, scores.b) + 1e-9
            ):
                raise AssertionError(f"conjunction bound violated for {task}")


def score(records: Iterable[dict], samples: Sequence[Sample], model_id: str | None = None) -> ScoreReport:
    """P/B/I accuracies plus the PB/PBI conjunctions over scenario triples.

    Only scenarios whose full percept/belief/intention triple has a
    response are scored; the rest are excluded and reported. The last
    record per sample wins, unparseable or errored responses count as
    incorrect, and correctness is recomputed against the dataset gold.
    """
    by_id = {s.sample_id: s for s in samples}
    model_ids = sorted({r["model_id"] for r in records})
    if model_id is None:
        if len(model_ids) > 1:
            raise ValueError(f"records span several model ids: {model_ids}; pass model_id")
        model_id = model_ids[0] if model_ids else "unknown"

    latest: dict[str, dict] = {}
    unmatched = 0
    for record in records:
        if record["model_id"] != model_id:
            continue
        if record["sample_id"] not in by_id:
            unmatched += 1
            continue
        latest[record["sample_id"]] = record

    triples = iter_scenario_triples(samples)
    complete: dict[str, dict[str, bool]] = {}
    incomplete: list[str] = []
    unparseable = 0
    considered = 0
    for scenario_id, kinds in sorted(triples.items()):
        if set(kinds) != set(QUESTION_KIND_ORDER):
            incomplete.append(scenario_id)
            continue
        if any(kinds[k].sample_id not in latest for k in QUESTION_KIND_ORDER):
            incomplete.append(scenario_id)
            continue
        outcome = {}
        for kind in QUESTION_KIND_ORDER:
            sample = kinds[kind]
            record = latest[sample.sample_id]
            considered += 1
            extracted = record.get("extracted")
            if extracted is None:
                unparseable += 1
            outcome[kind] = extracted in sample.gold_letters
        complete[scenario_id] = outcome

    per_task: dict[str, TaskScores] = {}
    for task in TASK_ORDER:
        ids = [sid for sid in complete if sid.startswith(task + "-")]
        if not ids:
            continue
        n = len(ids)
        p = sum(complete[sid]["percept"] for sid in ids) / n
        b = sum(complete[sid]["belief"] for sid in ids) / n
        i = sum(complete[sid]["intention"] for sid in ids) / n
        pb = sum(complete[sid]["percept"] and complete[sid]["belief"] for sid in ids) / n
        pbi = (
            sum(
                complete[sid]["percept"] and complete[sid]["belief"] and complete[sid]["intention"]
                for sid in ids
            )
            / n
        )
        per_task[task] = TaskScores(
            scenarios=n, p=100 * p, b=100 * b, i=100 * i, pb=100 * pb, pbi=100 * pbi
        )

    avg = sum(t.pbi for t in per_task.values()) / len(per_task) if per_task else 0.0
    report = ScoreReport(
        model_id=model_id,
        per_task=per_task,
        avg_pbi=avg,
        unparseable_rate=unparseable / considered if considered else 0.0,
        scored_records=considered,
        incomplete_scenarios=incomplete,
        unmatched_records=unmatched,
    )
    report.check_invariants()
    return report


def score_all_models(records: Iterable[dict], samples: Sequence[Sample]) -> list[ScoreReport]:
    records = list(records)
    model_ids = sorted({r["model_id"] for r in records})
    return [score(records, samples, model_id=m) for m in model_ids]


def emit_report(
    reports: Sequence[ScoreReport],
    fmt: str,
    header: dict | None = None,
    out_path: str | Path | None = None,
) -> str:
    """Render reports as markdown, csv, or plotdata (per-task PBI values)."""
    header = dict(header or {})
    header.setdefault("harness_version", __version__)
    tasks = TASK_ORDER

    if fmt == "markdown":
        lines = [f"<!-- {json.dumps(header, sort_keys=True)} -->", ""]
        cols = ["Model"]
        for task in tasks:
            cols += [f"{task.upper()} {m}" for m in ("P", "B", "I", "PBI")]
        cols.append("Avg")
        lines.append("| " + " | ".join(cols) + " |")
        lines.append("|" + "---|" * len(cols))
        for report in reports:
            row = [report.model_id]
            for task in tasks:
                scores = report.per_task.get(task)
                if scores is None:
                    row += ["-"] * 4
                else:
                    row += [f"{v:.1f}" for v in (scores.p, scores.b, scores.i, scores.pbi)]
            row.append(f"{report.avg_pbi:.1f}")
            lines.append("| " + " | ".join(row) + " |")
        content = "\n".join(lines) + "\n"
    elif fmt == "csv":
        rows = ["model,task,scenarios,p,b,i,pb,pbi,unparseable_rate,harness_version"]
        for report in reports:
            for task in tasks:
                scores = report.per_task.get(task)
                if scores is None:
                    continue
                rows.append(
                    f"{report.model_id},{task},{scores.scenarios},"
                    f"{scores.p:.4f},{scores.b:.4f},{scores.i:.4f},"
                    f"{scores.pb:.4f},{scores.pbi:.4f},"
                    f"{report.unparseable_rate:.4f},{__version__}"
                )
        content = "\n".join(rows) + "\n"
    elif fmt == "plotdata":
        series = [
            {"model": r.model_id, "task": task, "pbi": r.per_task[task].pbi}
            for r in reports
            for task in tasks
            if task in r.per_task
        ] + [{"model": r.model_id, "task": "avg", "pbi": r.avg_pbi} for r in reports]
        content = json.dumps({"header": header, "series": series}, indent=2, sort_keys=True) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")

    if out_path is not None:
        Path(out_path).write_text(content, encoding="utf-8")
    return content


# --------------------------------------------------------------------------
# Terminal quiz (human study protocol)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QuizConfig:
    n_questions: int = 45
    seed: int = 0
    session_id: str = "session-0"


def _attention_check(sample: Sample, index: int) -> tuple[str, dict[str, str], str]:
    """A trivially verifiable grid-reading question between task blocks."""
    grid = grid_from_dict(sample.scenario)
    plural = sample.scenario["context"]["agent_noun_plural"]
    count = len(grid.placements)
    options = {letter: str(value) for letter, value in zip("ABCD", range(2, 6))}
    gold = next(letter for letter, value in options.items() if value == str(count))
    text = (
        "Attention check:\n"
        + render_ascii(grid)
        + f"\nHow many {plural} are shown on the grid above?\n"
        + "\n".join(f"{letter}) {value}" for letter, value in options.items())
    )
    return text, options, gold


def run_quiz(
    samples: Sequence[Sample],
    config: QuizConfig,
    out_path: str | Path,
    input_fn: Callable[[str], str] = input,
    print_fn: Callable[[str], None] = print,
    clock: Callable[[], float] = time.monotonic,
) -> Path:
    """Serve scored items equally split across tasks, with attention checks
    between task blocks; responses land in a store scoreable by score().

    The session presents the same text prompts models see. Aborting
    (EOF or interrupt) preserves the partial response file.
    """
    if config.n_questions % (3 * len(TASK_ORDER)) != 0:
        raise ValueError("question count must be a multiple of 15 (triples per task)")
    per_task_scenarios = config.n_questions // (3 * len(TASK_ORDER))

    import random as _random

    rng = _random.Random(config.seed)
    triples = iter_scenario_triples(samples)
    blocks: list[tuple[str, list[Sample]]] = []
    for task in TASK_ORDER:
        ids = sorted(
            sid
            for sid, kinds in triples.items()
            if sid.startswith(task + "-") and set(kinds) == set(QUESTION_KIND_ORDER)
        )
        if len(ids) < per_task_scenarios:
            raise ValueError(f"dataset has only {len(ids)} complete {task} scenarios")
        chosen = rng.sample(ids, per_task_scenarios)
        block = [triples[sid][kind] for sid in chosen for kind in QUESTION_KIND_ORDER]
        blocks.append((task, block))

    store = Path(out_path)
    model_id = f"human-{config.session_id}"
    append_record(
        store,
        store_header({"model_id": model_id, "quiz_seed": config.seed, "n_questions": config.n_questions}),
    )

    answered = 0
    failed_checks = 0
    try:
        for block_ix, (task, block) in enumerate(blocks):
            for sample in block:
                letters = [o["letter"] for o in sample.question["options"]]
                print_fn(sample.prompt_text or "")
                start = clock()
                while True:
                    raw = input_fn("Your answer letter: ").strip().upper()
                    if raw in letters:
                        break
                    print_fn(f"Please answer one of: {', '.join(letters)}")
                append_record(
                    store,
                    {
                        "type": "response",
                        "sample_id": sample.sample_id,
                        "model_id": model_id,
                        "modality": "text",
                        "raw_output": raw,
                        "extracted": raw,
                        "correct": raw in sample.gold_letters,
                        "latency_s": clock() - start,
                        "timestamp": time.time(),
                        "attention": False,
                        "error": None,
                    },
                )
                answered += 1
            if block_ix < len(blocks) - 1:
                text, options, gold = _attention_check(block[-1], block_ix)
                print_fn(text)
                start = clock()
                while True:
                    raw = input_fn("Your answer letter: ").strip().upper()
                    if raw in options:
                        break
                    print_fn(f"Please answer one of: {', '.join(options)}")
                passed = raw == gold
                failed_checks += 0 if passed else 1
                append_record(
                    store,
                    {
                        "type": "attention_check",
                        "sample_id": f"attention-{block_ix}",
                        "model_id": model_id,
                        "raw_output": raw,
                        "correct": passed,
                        "latency_s": clock() - start,
                        "timestamp": time.time(),
                        "attention": True,
                    },
                )
    except (EOFError, KeyboardInterrupt):
        append_record(store, {"type": "status", "aborted": True, "answered": answered})
        raise SessionAborted(store, answered) from None

    append_record(
        store,
        {
            "type": "status",
            "aborted": False,
            "answered": answered,
            "failed_attention_checks": failed_checks,
            "flagged": failed_checks > 0,
        },
    )
    return store
