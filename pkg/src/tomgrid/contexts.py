"""Social-context library: scenario skins loaded from a curated text file.

File grammar (UTF-8, line-oriented): records are blocks of `key: value`
lines separated by blank lines; `#` starts a comment line. Keys:

    context: <unique id>                        (starts a record)
    setting: <sentence containing {n}>          ({n} = agent count)
    agent:   <singular noun>
    agent_plural: <plural noun>                 (optional; default agent + "s")
    place:   <place noun>
    info:    <label> | <label> | <label> | <label>

Every record needs exactly four distinct non-empty info labels.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

_REQUIRED_KEYS = ("setting", "agent", "place", "info")
_KNOWN_KEYS = ("context", "setting", "agent", "agent_plural", "place", "info")


class ContextError(Exception):
    pass


class ParseError(ContextError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(ContextError):
    pass


@dataclass(frozen=True)
class SocialContext:
    id: str
    setting: str
    agent_noun: str
    agent_noun_plural: str
    place_noun: str
    info_labels: tuple[str, str, str, str]

    def describe_setting(self, agent_count: int) -> str:
        return self.setting.format(n=agent_count)


def default_context_path() -> Path:
    return Path(str(resources.files("tomgrid").joinpath("data/contexts.txt")))


def _finish_record(fields: dict[str, str], start_line: int) -> SocialContext:
    missing = [k for k in _REQUIRED_KEYS if k not in fields]
    if missing:
        raise ValidationError(
            f"context '{fields.get('context', '?')}' (line {start_line}) missing field(s): "
            + ", ".join(missing)
        )
    labels = tuple(part.strip() for part in fields["info"].split("|"))
    if len(labels) != 4:
        raise ValidationError(
            f"context '{fields['context']}': expected 4 info labels, got {len(labels)}"
        )
    if any(not lbl for lbl in labels) or len(set(labels)) != 4:
        raise ValidationError(
            f"context '{fields['context']}': info labels must be non-empty and distinct"
        )
    if "{n}" not in fields["setting"]:
        raise ValidationError(
            f"context '{fields['context']}': setting must contain the {{n}} placeholder"
        )
    return SocialContext(
        id=fields["context"],
        setting=fields["setting"],
        agent_noun=fields["agent"],
        agent_noun_plural=fields.get("agent_plural", fields["agent"] + "s"),
        place_noun=fields["place"],
        info_labels=labels,  # type: ignore[arg-type]
    )


def parse_contexts(text: str) -> list[SocialContext]:
    contexts: list[SocialContext] = []
    seen_ids: set[str] = set()
    fields: dict[str, str] = {}
    start_line = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            if fields and not line:
                contexts.append(_finish_record(fields, start_line))
                fields = {}
            continue
        if ":" not in line:
            raise ParseError(f"expected 'key: value', got {line!r}", line_no)
        key, _, value = line.partition(":")
        key, value = key.strip(), value.strip()
        if key not in _KNOWN_KEYS:
            raise ParseError(f"unknown key {key!r}", line_no)
        if not value:
            raise ParseError(f"empty value for {key!r}", line_no)
        if key == "context":
            if fields:
                contexts.append(_finish_record(fields, start_line))
            fields = {"context": value}
            start_line = line_no
            if value in seen_ids:
                raise ValidationError(f"duplicate context id '{value}' (line {line_no})")
            seen_ids.add(value)
        else:
            if not fields:
                raise ParseError(f"field {key!r} before any 'context:' line", line_no)
            if key in fields:
                raise ParseError(f"duplicate field {key!r} in record", line_no)
            fields[key] = value
    if fields:
        contexts.append(_finish_record(fields, start_line))
    if not contexts:
        raise ValidationError("context file defines no contexts")
    return contexts


def load_contexts(path: str | Path | None = None) -> list[SocialContext]:
    """Load and validate the context library (packaged default if no path)."""
    p = Path(path) if path is not None else default_context_path()
    return parse_contexts(p.read_text(encoding="utf-8"))


def sample_context(contexts: list[SocialContext], rng: random.Random) -> SocialContext:
    """Uniform draw, deterministic under the rng's seed."""
    if not contexts:
        raise ValidationError("cannot sample from an empty context list")
    return contexts[rng.randrange(len(contexts))]
