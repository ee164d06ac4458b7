"""Prompt assembly: the exact section layout shown to models, the two
format variants per question kind, and answer-order shuffling.

The assembled text is byte-stable given (scenario, question, modality).
Question wording lives in a versioned paraphrase table; the percept
variants flip the truth polarity ("Is the statement ... true/false?"),
which is already folded into the gold letters when questions are built.
Two quirks of the reference prompts are reproduced on purpose: Rule 6 and
the collaborative attitude sentence end with a trailing space.
"""

from __future__ import annotations

import random
from enum import Enum

from .geometry import AdjacencyRule
from .epistemics import Communicate, Move
from .intents import AttitudeKind
from .render import render_ascii
from .tasks import Question, QuestionKind, Scenario, Semantic, TaskKind

ANSWER_TAG_INSTRUCTION = (
    "Provide your final answer within the tags <Answer>[answer]</Answer> "
    "(e.g. <Answer>A</Answer>)."
)

PARAPHRASE_TABLE_VERSION = 1


class Modality(str, Enum):
    TEXT = "text"
    MULTIMODAL = "multimodal"


def _article(noun: str) -> str:
    return "an" if noun[:1].lower() in "aeiou" else "a"


def _id_list(agent_count: int) -> str:
    ids = [f"A{i}" for i in range(agent_count)]
    return ", ".join(ids[:-1]) + ", and " + ids[-1]


def _events_word(scenario: Scenario) -> str:
    return "Event" if len(scenario.events) == 1 else "Events"


def _sorted_labels(scenario: Scenario, pieces: frozenset[int]) -> list[str]:
    return [scenario.context.info_labels[i] for i in sorted(pieces)]


_RULE6 = {
    AdjacencyRule.EIGHT_NEIGHBORHOOD: (
        "6. If a {agent} shares a piece of information during the Event(s), only the "
        "{plural} in the adjacent cells (up, down, left, right, and diagonally "
        "neighboring cells) will learn it. "
    ),
    AdjacencyRule.MANHATTAN_ONE_TO_TWO: (
        "6. If a {agent} shares a piece of information during the Event(s), only the "
        "{plural} within a combined horizontal and vertical offset of at most two "
        "cells (for example one cell up, two cells left, or one cell up and one cell "
        "left) will learn it. "
    ),
}


def _percept_statement(scenario: Scenario, question: Question) -> str:
    s = question.subjects
    word = _events_word(scenario)
    if scenario.task is TaskKind.CMSC:
        return f"After the {word}, A{s['listener']} learns what A{s['speaker']} communicated"
    if scenario.task is TaskKind.CMCC:
        return (
            f"After the {word}, A{s['x']} learns what A{s['y']} communicated and vice versa"
        )
    if scenario.task is TaskKind.MC:
        return f"After the {word}, A{s['x']} and A{s['y']} can communicate"
    return f"During the {word}, A{s['listener']} learns what A{s['speaker']} communicated"


def question_text(scenario: Scenario, question: Question) -> str:
    """Wording for (task, question kind, variant); see the module notes."""
    t = f"A{scenario.target_agent}"
    s = question.subjects
    word = _events_word(scenario)
    noun = scenario.context.agent_noun

    if question.kind is QuestionKind.PERCEPT:
        polarity = "true" if question.variant == 1 else "false"
        return f"Is the statement '{_percept_statement(scenario, question)}' {polarity}?"

    if question.kind is QuestionKind.BELIEF:
        if scenario.task is TaskKind.CMSC:
            if question.variant == 1:
                return f"After the {word}, what information does {t} believe she is still missing?"
            return f"Which information does {t} believe she is still missing after the {word}?"
        if scenario.task is TaskKind.CMCC:
            pair = f"A{s['x']} and A{s['y']}"
            if question.variant == 1:
                return (
                    f"After the {word}, which information does {t} believe {pair} "
                    "are likely still missing, respectively?"
                )
            return (
                f"Which information does {t} believe {pair} are likely still missing "
                f"after the {word}, respectively?"
            )
        if scenario.task is TaskKind.MC:
            if question.variant == 1:
                return f"After the {word}, which information does {t} believe A{s['subject']} is missing?"
            return f"Which information does {t} believe A{s['subject']} is missing after the {word}?"
        talk = f"A{s['speaker']} has communicated to A{s['receiver']}"
        if question.variant == 1:
            return f"Which information does {t} believe {talk} during the {word}?"
        return f"During the {word}, which information does {t} believe {talk}?"

    if scenario.task in (TaskKind.CMSC, TaskKind.CMCC):
        if question.variant == 1:
            return f"After the {word}, which {noun} is {t} most likely to approach?"
        return f"Which {noun} is {t} most likely to approach after the {word}?"
    if question.variant == 1:
        return f"After the {word}, which information is {t} most likely to communicate?"
    return f"Which information is {t} most likely to communicate after the {word}?"


def _attitude_block(scenario: Scenario) -> str:
    t = f"A{scenario.target_agent}"
    plural = scenario.context.agent_noun_plural
    attitude = scenario.attitude
    if attitude.kind is AttitudeKind.COOPERATIVE:
        return (
            f"Collaborative: {t} wants to learn new information from other {plural} "
            f"and share information that other {plural} don't know. "
        )
    if attitude.kind is AttitudeKind.OBSTRUCTIVE:
        return f"Obstructive: {t} doesn't want other {plural} to learn new information."
    k = f"A{attitude.coop_target}"
    l = f"A{attitude.obstruct_target}"
    return (
        f"Collaborative towards {k}: {t} wants {k} to learn new information.\n"
        f"Obstructive towards {l}: {t} doesn't want {l} to learn new information."
    )


def _event_lines(scenario: Scenario) -> str:
    noun = scenario.context.agent_noun.capitalize()
    lines = []
    for event in scenario.events:
        if isinstance(event, Communicate):
            label = scenario.context.info_labels[event.info]
            lines.append(f"{noun} A{event.agent} communicates '{label}'.")
        elif isinstance(event, Move):
            lines.append(f"{noun} A{event.agent} moves one cell {event.direction.value}.")
    return "\n".join(lines)


def assemble_prompt(scenario: Scenario, question: Question, modality: Modality) -> str:
    """Full prompt text for one sample; byte-stable given its inputs."""
    ctx = scenario.context
    agent, plural, place = ctx.agent_noun, ctx.agent_noun_plural, ctx.place_noun
    n = scenario.agent_count
    side = scenario.grid.side
    labels = list(ctx.info_labels)

    rules = "\n".join(
        [
            f"1. The {place} is represented as a grid of size {side}x{side} with {n} "
            f"{plural}: {_id_list(n)}. Each {agent} occupies one cell.",
            f"2. Each {agent} starts out knowing a subset of 4 pieces of information: {labels!r}.",
            f"3. By default, {plural} have two goals: (1) learning information they are "
            f"missing from other {plural}, and (2) communicating information that other "
            f"{plural} are missing. Setting a {agent}'s Attitude can influence their goals.",
            f"4. Each {agent} can see the positions, movements, and initial information "
            f"of other {plural}. However, they cannot see any new information other "
            f"{plural} learn later, so they must infer it.",
            f"5. Event(s) change the state of the {place} and include: movement of "
            f"{plural} (up, down, left, right) or communication of information. Aside "
            f"from what is specified in the Event(s), no other movement or communication happens.",
            _RULE6[scenario.adjacency_rule].format(agent=agent, plural=plural),
        ]
    )

    if modality is Modality.TEXT:
        grid_block = (
            f"Initial position of the {plural} in the {place}:\n"
            + render_ascii(scenario.grid)
        )
        closing = "Based on the information above, choose one of the following answers:"
    else:
        grid_block = (
            f"The initial position of the {plural} in the {place} is shown in the "
            "provided image.\n"
        )
        closing = (
            "Based on the information above and on the image, choose one of the "
            "following answers:"
        )

    knowledge_lines = "\n".join(
        f"- A{a}: {_sorted_labels(scenario, scenario.initial_knowledge[a])!r}"
        for a in sorted(scenario.initial_knowledge)
    )
    option_lines = "\n".join(f"{o.letter}) {o.text}" for o in question.options)

    return (
        "Task:\n"
        f"You are a helpful AI assistant tasked to answer a question about "
        f"{_article(agent)} {agent} in {_article(place)} {place}.\n"
        "\n"
        "Setup:\n"
        f"You are observing a gridworld that represents {ctx.describe_setting(n)}.\n"
        "\n"
        "Rules:\n"
        f"{rules}\n"
        "\n"
        f"{grid_block}"
        "\n"
        f"Information initially known by the {plural}:\n"
        f"{knowledge_lines}\n"
        "\n"
        f"A{scenario.target_agent}'s Attitude:\n"
        f"{_attitude_block(scenario)}\n"
        "\n"
        f"{_events_word(scenario)}:\n"
        f"{_event_lines(scenario)}\n"
        "\n"
        "Question:\n"
        f"{question_text(scenario, question)}\n"
        "\n"
        f"{closing}\n"
        f"{option_lines}\n"
        "\n"
        f"{ANSWER_TAG_INSTRUCTION}\n"
    )


def select_format_variant(qkind: QuestionKind, rng: random.Random) -> int:
    """Uniform over the two shipped variants for the question kind."""
    del qkind  # both variants exist for every kind
    return rng.randint(1, 2)


def shuffle_answers(question: Question, gold: frozenset[Semantic], rng: random.Random) -> Question:
    """Uniformly permute options, assign letters, and remap gold letters."""
    order = list(range(len(question.options)))
    rng.shuffle(order)
    letters = "ABCD"
    options = tuple(
        type(question.options[0])(
            letter=letters[pos], text=question.options[ix].text, semantic=question.options[ix].semantic
        )
        for pos, ix in enumerate(order)
    )
    gold_letters = frozenset(o.letter for o in options if o.semantic in gold)
    if not gold_letters:
        raise ValueError("gold semantics missing from the option set")
    return Question(
        kind=question.kind,
        variant=question.variant,
        subjects=question.subjects,
        options=options,
        gold_letters=gold_letters,
    )
