"""The five task templates and everything that turns one of them into a
concrete scenario: placements, knowledge assignments, attitudes, event
scripts, gold-answer derivation, and question construction.

Templates are written in role space: role 0 is always the questioned
(target) agent and information pieces are the abstract ids 0..3.
Instantiation shuffles agent ids, samples a board expansion, applies one
of the seven board transformations (remapping scripted move directions to
match), samples a social context, and permutes which context label plays
which abstract piece. Everything downstream of instantiation, including
gold derivation, works in concrete space: displayed agent ids and context
label indices.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .contexts import SocialContext
from .epistemics import (
    FULL_KNOWLEDGE,
    BeliefState,
    Communicate,
    Event,
    Move,
    WorldState,
    certain_missing,
    hearers,
    init_state,
    observe_event,
    rational_messages,
    step_world,
)
from .geometry import (
    DEFAULT_ADJACENCY_RULE,
    AdjacencyRule,
    Direction,
    Grid,
    Transformation,
    TRANSFORMATIONS,
    can_hear,
    increase_size,
    transform,
    transform_direction,
)
from .intents import Attitude, AttitudeKind, best_messages, best_move_targets


class TaskError(Exception):
    pass


class GenerationFailed(TaskError):
    pass


class DerivationInconsistent(TaskError):
    pass


class TaskKind(str, Enum):
    CMSC = "cmsc"
    CMCC = "cmcc"
    PCC = "pcc"
    OC = "oc"
    MC = "mc"


TASK_KINDS: tuple[TaskKind, ...] = tuple(TaskKind)


class QuestionKind(str, Enum):
    PERCEPT = "percept"
    BELIEF = "belief"
    INTENTION = "intention"


QUESTION_KINDS: tuple[QuestionKind, ...] = tuple(QuestionKind)

# Semantic option/gold identifiers are plain tuples so they hash, compare,
# and serialize trivially:
#   ("yesno", "yes"|"no")
#   ("info", label_index)
#   ("agent", agent_id)
#   ("pair_none",)                                  "not missing any"
#   ("pair_claims", (agent, label), (agent, label))
Semantic = tuple


@dataclass(frozen=True)
class TemplateCommunicate:
    role: int
    info: int | None = None           # fixed piece, or
    choices: tuple[int, ...] = ()     # one sampled uniformly at instantiation


@dataclass(frozen=True)
class TemplateMove:
    role: int
    direction: Direction


@dataclass(frozen=True)
class TaskTemplate:
    kind: TaskKind
    agent_count: int
    side: int
    placements: dict[int, tuple[int, int]]
    initial_knowledge: dict[int, frozenset[int]]
    locked_role_pairs: frozenset[frozenset[int]]
    pinned_roles: frozenset[int]
    attitude_kind: AttitudeKind
    attitude_roles: tuple[int, int] | None  # (coop, obstruct) for mixed
    events: tuple[TemplateCommunicate | TemplateMove, ...]
    percept: tuple  # ("hears", listener, speaker) | ("mutual_exchange", x, y) | ("can_communicate_after", x, y)
    belief: tuple   # ("self_missing",) | ("pair_complete", x, y) | ("message_support", speaker, receiver, event_ix) | ("other_missing", subject)
    intention: str  # "move" | "message"
    constraints: tuple[str, ...]


TEMPLATES: dict[TaskKind, TaskTemplate] = {
    TaskKind.CMSC: TaskTemplate(
        kind=TaskKind.CMSC,
        agent_count=4,
        side=6,
        placements={0: (1, 4), 1: (0, 4), 2: (1, 0), 3: (5, 4)},
        initial_knowledge={
            0: frozenset({1, 3}),
            1: frozenset({0, 3}),
            2: frozenset({0, 1, 2}),
            3: frozenset({2, 3}),
        },
        locked_role_pairs=frozenset({frozenset({0, 1})}),
        pinned_roles=frozenset(),
        attitude_kind=AttitudeKind.COOPERATIVE,
        attitude_roles=None,
        events=(TemplateCommunicate(role=1, info=0),),
        percept=("hears", 0, 1),
        belief=("self_missing",),
        intention="move",
        constraints=(
            "four agents on a side-6 board",
            "target is orthogonally adjacent to the speaker (locked pair)",
            "both bystanders are out of hearing range of the speaker under both adjacency rules",
            "speaker holds the communicated piece; the target starts without it",
            "after hearing, the target has a unique best agent to approach",
            "without hearing, the best agent to approach is a different unique agent",
        ),
    ),
    TaskKind.CMCC: TaskTemplate(
        kind=TaskKind.CMCC,
        agent_count=4,
        side=6,
        placements={0: (0, 5), 1: (2, 0), 2: (3, 0), 3: (5, 5)},
        initial_knowledge={
            0: FULL_KNOWLEDGE,
            1: frozenset({0, 2, 3}),
            2: frozenset({0, 1, 2}),
            3: frozenset({0, 1, 2}),
        },
        locked_role_pairs=frozenset({frozenset({1, 2})}),
        pinned_roles=frozenset(),
        attitude_kind=AttitudeKind.COOPERATIVE,
        attitude_roles=None,
        events=(TemplateCommunicate(role=1, info=3), TemplateCommunicate(role=2, info=1)),
        percept=("mutual_exchange", 1, 2),
        belief=("pair_complete", 1, 2),
        intention="move",
        constraints=(
            "four agents on a side-6 board",
            "the two communicators are orthogonally adjacent (locked pair)",
            "target and fourth agent are out of hearing range of both communicators under both adjacency rules",
            "each communicator sends exactly the piece the other is missing",
            "the fourth agent misses exactly one piece, which the target holds",
        ),
    ),
    TaskKind.PCC: TaskTemplate(
        kind=TaskKind.PCC,
        agent_count=3,
        side=5,
        placements={0: (3, 4), 1: (1, 4), 2: (0, 4)},
        initial_knowledge={
            0: frozenset({0, 1, 2}),
            1: frozenset({2, 3}),
            2: frozenset({0, 1, 2}),
        },
        locked_role_pairs=frozenset({frozenset({1, 2})}),
        pinned_roles=frozenset({0}),
        attitude_kind=AttitudeKind.COOPERATIVE,
        attitude_roles=None,
        events=(TemplateCommunicate(role=2, choices=(0, 1)), TemplateMove(role=1, direction=Direction.DOWN)),
        percept=("hears", 1, 2),
        belief=("message_support", 2, 1, 0),
        intention="message",
        constraints=(
            "three agents on a side-5 board",
            "receiver is orthogonally adjacent to the communicator (locked pair)",
            "target is out of hearing range of the communicator under both adjacency rules",
            "the sampled message is always one of the receiver's two missing pieces",
            "one scripted cell move makes the receiver adjacent to the target",
            "the communicator stays out of the target's hearing range after the move",
        ),
    ),
    TaskKind.MC: TaskTemplate(
        kind=TaskKind.MC,
        agent_count=3,
        side=5,
        placements={0: (0, 2), 1: (1, 2), 2: (3, 2)},
        initial_knowledge={
            0: FULL_KNOWLEDGE,
            1: frozenset({2, 3}),
            2: frozenset({1, 2, 3}),
        },
        locked_role_pairs=frozenset({frozenset({0, 1})}),
        pinned_roles=frozenset({2}),
        attitude_kind=AttitudeKind.MIXED,
        attitude_roles=(1, 2),
        events=(TemplateMove(role=2, direction=Direction.UP),),
        percept=("can_communicate_after", 1, 2),
        belief=("other_missing", 2),
        intention="message",
        constraints=(
            "three agents on a side-5 board",
            "target is orthogonally adjacent to the ally (locked pair)",
            "the rival starts two cells from the ally and becomes adjacent after its one scripted move",
            "the rival never enters the target's hearing range",
            "the rival misses exactly one piece; the ally misses two, one of which the rival holds",
        ),
    ),
}

# OC shares the PCC board and knowledge; only the target attitude differs.
TEMPLATES[TaskKind.OC] = TaskTemplate(
    kind=TaskKind.OC,
    agent_count=3,
    side=5,
    placements=dict(TEMPLATES[TaskKind.PCC].placements),
    initial_knowledge=dict(TEMPLATES[TaskKind.PCC].initial_knowledge),
    locked_role_pairs=TEMPLATES[TaskKind.PCC].locked_role_pairs,
    pinned_roles=TEMPLATES[TaskKind.PCC].pinned_roles,
    attitude_kind=AttitudeKind.OBSTRUCTIVE,
    attitude_roles=None,
    events=TEMPLATES[TaskKind.PCC].events,
    percept=TEMPLATES[TaskKind.PCC].percept,
    belief=TEMPLATES[TaskKind.PCC].belief,
    intention="message",
    constraints=TEMPLATES[TaskKind.PCC].constraints
    + ("exactly one held piece is certainly known to the whole audience",),
)


@dataclass(frozen=True)
class Scenario:
    """One fully instantiated task, in concrete (displayed) space."""

    task: TaskKind
    seed: int
    adjacency_rule: AdjacencyRule
    transformation: Transformation
    size_delta: int
    agent_perm: tuple[int, ...]  # role -> agent id
    info_perm: tuple[int, ...]   # abstract piece -> context label index
    context: SocialContext
    grid: Grid
    initial_knowledge: dict[int, frozenset[int]]
    attitude: Attitude
    target_agent: int
    events: tuple[Event, ...]

    @property
    def agent_count(self) -> int:
        return len(self.agent_perm)

    def role_agent(self, role: int) -> int:
        return self.agent_perm[role]


@dataclass(frozen=True)
class Option:
    letter: str
    text: str
    semantic: Semantic


@dataclass(frozen=True)
class Question:
    kind: QuestionKind
    variant: int
    subjects: dict[str, int]
    options: tuple[Option, ...]
    gold_letters: frozenset[str]

    @property
    def option_letters(self) -> tuple[str, ...]:
        return tuple(o.letter for o in self.options)


def validate_template(template: TaskTemplate) -> None:
    """Assert the written constraint list against the template geometry."""
    grid = Grid(
        template.side,
        dict(template.placements),
        frozenset(template.locked_role_pairs),
    )
    grid.validate()
    if len(template.placements) != template.agent_count:
        raise TaskError(f"{template.kind}: wrong agent count")

    world = WorldState(grid, {r: k for r, k in template.initial_knowledge.items()})
    for ix, ev in enumerate(template.events):
        if isinstance(ev, TemplateCommunicate):
            pieces = (ev.info,) if ev.info is not None else ev.choices
            if not pieces:
                raise TaskError(f"{template.kind}: event {ix} communicates nothing")
            for piece in pieces:
                if piece not in template.initial_knowledge[ev.role]:
                    raise TaskError(
                        f"{template.kind}: role {ev.role} cannot communicate piece {piece}"
                    )
            # Audience must be identical under both rules so gold answers
            # do not depend on the configured rule.
            audiences = {
                rule: hearers(world.grid, ev.role, rule) for rule in AdjacencyRule
            }
            if len(set(audiences.values())) != 1:
                raise TaskError(f"{template.kind}: event {ix} audience depends on the rule")
        else:
            world = step_world(world, Move(ev.role, ev.direction), DEFAULT_ADJACENCY_RULE)


for _t in TEMPLATES.values():
    validate_template(_t)


def _resolve_events(
    template: TaskTemplate,
    agent_perm: Sequence[int],
    info_perm: Sequence[int],
    transformation: Transformation,
    rng: random.Random,
) -> tuple[Event, ...]:
    events: list[Event] = []
    for ev in template.events:
        if isinstance(ev, TemplateMove):
            events.append(
                Move(agent_perm[ev.role], transform_direction(ev.direction, transformation))
            )
        else:
            piece = ev.info if ev.info is not None else ev.choices[rng.randrange(len(ev.choices))]
            events.append(Communicate(agent_perm[ev.role], info_perm[piece]))
    return tuple(events)


def instantiate(
    kind: TaskKind,
    seed: int,
    contexts: list[SocialContext],
    adjacency_rule: AdjacencyRule = DEFAULT_ADJACENCY_RULE,
) -> Scenario:
    """Deterministically instantiate one scenario from (kind, seed).

    Draw order is fixed and documented: agent shuffle, size delta,
    expansion displacements, transformation, context, info shuffle, then
    any scripted message choice.
    """
    from .contexts import sample_context  # local to keep import surface flat

    template = TEMPLATES[kind]
    rng = random.Random(seed)

    ids = list(range(template.agent_count))
    rng.shuffle(ids)
    agent_perm = tuple(ids)

    delta = rng.randint(0, 3)
    base = Grid(
        template.side,
        {agent_perm[role]: cell for role, cell in template.placements.items()},
        frozenset(
            frozenset(agent_perm[r] for r in pair) for pair in template.locked_role_pairs
        ),
    )
    pinned = frozenset(agent_perm[r] for r in template.pinned_roles)
    try:
        expanded = increase_size(base, delta, rng, pinned=pinned)
    except Exception as exc:
        raise GenerationFailed(f"{kind.value} seed {seed}: {exc}") from exc

    transformation = TRANSFORMATIONS[rng.randrange(len(TRANSFORMATIONS))]
    grid = transform(expanded, transformation)

    context = sample_context(contexts, rng)

    labels = list(range(4))
    rng.shuffle(labels)
    info_perm = tuple(labels)

    events = _resolve_events(template, agent_perm, info_perm, transformation, rng)

    knowledge = {
        agent_perm[role]: frozenset(info_perm[i] for i in pieces)
        for role, pieces in template.initial_knowledge.items()
    }
    if template.attitude_kind is AttitudeKind.MIXED:
        coop_role, obstruct_role = template.attitude_roles
        attitude = Attitude.mixed(agent_perm[coop_role], agent_perm[obstruct_role])
    elif template.attitude_kind is AttitudeKind.OBSTRUCTIVE:
        attitude = Attitude.obstructive()
    else:
        attitude = Attitude.cooperative()

    return Scenario(
        task=kind,
        seed=seed,
        adjacency_rule=adjacency_rule,
        transformation=transformation,
        size_delta=delta,
        agent_perm=agent_perm,
        info_perm=info_perm,
        context=context,
        grid=grid,
        initial_knowledge=knowledge,
        attitude=attitude,
        target_agent=agent_perm[0],
        events=events,
    )


def replay(
    scenario: Scenario,
) -> tuple[list[tuple[WorldState, dict[int, BeliefState]]], WorldState, dict[int, BeliefState]]:
    """Run the event script; returns per-event pre-states plus the finals."""
    world, beliefs = init_state(scenario.grid, scenario.initial_knowledge)
    steps: list[tuple[WorldState, dict[int, BeliefState]]] = []
    for event in scenario.events:
        steps.append((world, beliefs))
        next_world = step_world(world, event, scenario.adjacency_rule)
        beliefs = {
            a: observe_event(b, event, world, scenario.adjacency_rule)
            for a, b in beliefs.items()
        }
        world = next_world
    return steps, world, beliefs


def percept_fact(scenario: Scenario) -> bool:
    """Truth value of the task's percept statement on the actual trajectory."""
    template = TEMPLATES[scenario.task]
    spec = template.percept
    steps, final_world, _ = replay(scenario)
    rule = scenario.adjacency_rule
    if spec[0] == "hears":
        listener = scenario.role_agent(spec[1])
        speaker = scenario.role_agent(spec[2])
        for (world, _b), event in zip(steps, scenario.events):
            if isinstance(event, Communicate) and event.agent == speaker:
                return can_hear(world.grid, listener, speaker, rule)
        raise DerivationInconsistent("percept references a communication that never happens")
    if spec[0] == "mutual_exchange":
        x, y = scenario.role_agent(spec[1]), scenario.role_agent(spec[2])
        heard = []
        for (world, _b), event in zip(steps, scenario.events):
            if isinstance(event, Communicate) and event.agent in (x, y):
                listener = y if event.agent == x else x
                heard.append(can_hear(world.grid, listener, event.agent, rule))
        if len(heard) != 2:
            raise DerivationInconsistent("mutual exchange needs exactly two communications")
        return all(heard)
    if spec[0] == "can_communicate_after":
        x, y = scenario.role_agent(spec[1]), scenario.role_agent(spec[2])
        return can_hear(final_world.grid, x, y, rule)
    raise DerivationInconsistent(f"unknown percept fact kind {spec[0]!r}")


def derive_gold(scenario: Scenario, qkind: QuestionKind) -> frozenset[Semantic]:
    """Gold answer as a set of semantic option identifiers (size 1 or 2)."""
    template = TEMPLATES[scenario.task]
    target = scenario.target_agent

    if qkind is QuestionKind.PERCEPT:
        return frozenset({("yesno", "yes" if percept_fact(scenario) else "no")})

    steps, final_world, final_beliefs = replay(scenario)
    belief = final_beliefs[target]

    if qkind is QuestionKind.BELIEF:
        spec = template.belief
        if spec[0] == "self_missing":
            missing = certain_missing(belief, target)
            if len(missing) != 1:
                raise DerivationInconsistent(f"self-missing gold has size {len(missing)}")
            return frozenset(("info", m) for m in missing)
        if spec[0] == "pair_complete":
            x, y = scenario.role_agent(spec[1]), scenario.role_agent(spec[2])
            for member in (x, y):
                if belief.worlds[member] != frozenset({FULL_KNOWLEDGE}):
                    raise DerivationInconsistent(
                        f"target is not certain agent {member} is complete"
                    )
            return frozenset({("pair_none",)})
        if spec[0] == "message_support":
            speaker = scenario.role_agent(spec[1])
            event_ix = spec[3]
            world_before, beliefs_before = steps[event_ix]
            audience = hearers(world_before.grid, speaker, scenario.adjacency_rule)
            support = rational_messages(beliefs_before[target], speaker, audience)
            if not 1 <= len(support) <= 2:
                raise DerivationInconsistent(f"message support has size {len(support)}")
            return frozenset(("info", m) for m in support)
        if spec[0] == "other_missing":
            subject = scenario.role_agent(spec[1])
            missing = certain_missing(belief, subject)
            if len(missing) != 1:
                raise DerivationInconsistent(f"other-missing gold has size {len(missing)}")
            return frozenset(("info", m) for m in missing)
        raise DerivationInconsistent(f"unknown belief kind {spec[0]!r}")

    own = final_world.knowledge[target]
    try:
        if template.intention == "move":
            movers = best_move_targets(target, own, belief)
            return frozenset(("agent", a) for a in movers)
        audience = hearers(final_world.grid, target, scenario.adjacency_rule)
        messages = best_messages(target, own, scenario.attitude, belief, audience)
    except Exception as exc:
        raise DerivationInconsistent(f"intention derivation failed: {exc}") from exc
    if not 1 <= len(messages) <= 2:
        raise DerivationInconsistent(f"intention gold has size {len(messages)}")
    return frozenset(("info", m) for m in messages)


def _belief_subjects(scenario: Scenario) -> dict[str, int]:
    spec = TEMPLATES[scenario.task].belief
    subjects = {"observer": scenario.target_agent}
    if spec[0] == "pair_complete":
        subjects["x"] = scenario.role_agent(spec[1])
        subjects["y"] = scenario.role_agent(spec[2])
    elif spec[0] == "message_support":
        subjects["speaker"] = scenario.role_agent(spec[1])
        subjects["receiver"] = scenario.role_agent(spec[2])
        subjects["event_index"] = spec[3]
    elif spec[0] == "other_missing":
        subjects["subject"] = scenario.role_agent(spec[1])
    return subjects


def _percept_subjects(scenario: Scenario) -> dict[str, int]:
    spec = TEMPLATES[scenario.task].percept
    if spec[0] == "hears":
        return {"listener": scenario.role_agent(spec[1]), "speaker": scenario.role_agent(spec[2])}
    return {"x": scenario.role_agent(spec[1]), "y": scenario.role_agent(spec[2])}


def _pair_option_text(scenario: Scenario, semantic: Semantic) -> str:
    t = f"A{scenario.target_agent}"
    x = f"A{_belief_subjects(scenario)['x']}"
    y = f"A{_belief_subjects(scenario)['y']}"
    if semantic[0] == "pair_none":
        return f"{t} believes that {x} and {y} are not missing any information"
    (_, (xa, xp), (ya, yp)) = semantic
    labels = scenario.context.info_labels
    return (
        f"{t} believes that A{xa} is missing {labels[xp]} "
        f"and A{ya} is missing {labels[yp]}"
    )


def _belief_options(scenario: Scenario, rng: random.Random) -> list[tuple[str, Semantic]]:
    spec = TEMPLATES[scenario.task].belief
    labels = scenario.context.info_labels
    if spec[0] != "pair_complete":
        return [(labels[i], ("info", i)) for i in range(4)]

    x, y = scenario.role_agent(spec[1]), scenario.role_agent(spec[2])
    x_missing = next(iter(FULL_KNOWLEDGE - scenario.initial_knowledge[x]))
    y_missing = next(iter(FULL_KNOWLEDGE - scenario.initial_knowledge[y]))
    common = sorted(scenario.initial_knowledge[x] & scenario.initial_knowledge[y])
    rng.shuffle(common)
    semantics: list[Semantic] = [
        ("pair_none",),
        ("pair_claims", (x, x_missing), (y, y_missing)),
        ("pair_claims", (x, common[0]), (y, y_missing)),
        ("pair_claims", (x, common[1]), (y, x_missing)),
    ]
    return [(_pair_option_text(scenario, s), s) for s in semantics]


def _intention_options(scenario: Scenario) -> list[tuple[str, Semantic]]:
    if TEMPLATES[scenario.task].intention == "move":
        others = [a for a in sorted(scenario.initial_knowledge) if a != scenario.target_agent]
        return [(f"A{a}", ("agent", a)) for a in others]
    labels = scenario.context.info_labels
    return [(labels[i], ("info", i)) for i in range(4)]


def make_questions(scenario: Scenario, rng: random.Random) -> list[Question]:
    """One question per kind, with format variant, options, and letters.

    Per question the rng is consumed in a fixed order: format variant,
    option-construction draws, then the answer shuffle.
    """
    from .promptgen import select_format_variant, shuffle_answers

    questions: list[Question] = []
    for qkind in QUESTION_KINDS:
        variant = select_format_variant(qkind, rng)
        if qkind is QuestionKind.PERCEPT:
            fact = percept_fact(scenario)
            answer_yes = fact if variant == 1 else not fact
            base = [("Yes", ("yesno", "yes")), ("No", ("yesno", "no"))]
            gold = frozenset({("yesno", "yes" if answer_yes else "no")})
            subjects = _percept_subjects(scenario)
        elif qkind is QuestionKind.BELIEF:
            base = _belief_options(scenario, rng)
            gold = derive_gold(scenario, qkind)
            subjects = _belief_subjects(scenario)
        else:
            base = _intention_options(scenario)
            gold = derive_gold(scenario, qkind)
            subjects = {"actor": scenario.target_agent}

        semantics = {s for _text, s in base}
        if not gold <= semantics:
            raise DerivationInconsistent(
                f"{scenario.task.value} {qkind.value}: gold {sorted(gold)} outside option schema"
            )
        questions.append(
            shuffle_answers(
                Question(
                    kind=qkind,
                    variant=variant,
                    subjects=subjects,
                    options=tuple(
                        Option(letter="", text=text, semantic=s) for text, s in base
                    ),
                    gold_letters=frozenset(),
                ),
                gold,
                rng,
            )
        )
    return questions
