"""Ground-truth world state and per-observer possible-worlds belief
tracking under partial observability of communication content.

Knowledge is a subset of the four information pieces {0, 1, 2, 3}, held as
a frozenset. A belief state maps each agent to the family of knowledge
sets consistent with the observer's evidence; the observer's own entry is
always a singleton. Positions and movements are common knowledge, so only
communication content can be uncertain: when an observer sees a
communication it cannot hear, it models the speaker as a cooperative
utility maximizer and keeps every optimal message as a possible world
(uniform prior over maximizers when several exist).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

from .geometry import AdjacencyRule, Direction, Grid, apply_move, can_hear

INFO_IDS: tuple[int, ...] = (0, 1, 2, 3)
FULL_KNOWLEDGE: frozenset[int] = frozenset(INFO_IDS)

KnowledgeSet = frozenset


class EpistemicsError(Exception):
    pass


class IllegalEvent(EpistemicsError):
    pass


class InconsistentObservation(EpistemicsError):
    """An observation emptied a possible-set family; signals a template or
    derivation bug, never a legal runtime state."""


class UnknownAgent(EpistemicsError):
    pass


@dataclass(frozen=True)
class Move:
    agent: int
    direction: Direction


@dataclass(frozen=True)
class Communicate:
    agent: int
    info: int


Event = Union[Move, Communicate]


@dataclass
class WorldState:
    grid: Grid
    knowledge: dict[int, frozenset[int]]

    def copy(self) -> "WorldState":
        return WorldState(self.grid.copy(), dict(self.knowledge))


@dataclass
class BeliefState:
    """One observer's possible knowledge sets for every agent."""

    observer: int
    worlds: dict[int, frozenset[frozenset[int]]]

    def copy(self) -> "BeliefState":
        return BeliefState(self.observer, dict(self.worlds))


def init_state(
    grid: Grid, knowledge: Mapping[int, frozenset[int]]
) -> tuple[WorldState, dict[int, BeliefState]]:
    """Initial world plus one belief state per agent.

    Starting positions and starting knowledge are common knowledge, so
    every observer's family for every agent is the singleton of that
    agent's initial set.
    """
    world = WorldState(grid.copy(), {a: frozenset(k) for a, k in knowledge.items()})
    beliefs = {
        observer: BeliefState(
            observer,
            {a: frozenset({world.knowledge[a]}) for a in world.knowledge},
        )
        for observer in world.knowledge
    }
    return world, beliefs


def hearers(grid: Grid, speaker: int, rule: AdjacencyRule) -> frozenset[int]:
    """Agents in hearing range of a speaking agent."""
    return frozenset(
        a for a in grid.placements if a != speaker and can_hear(grid, a, speaker, rule)
    )


def step_world(world: WorldState, event: Event, rule: AdjacencyRule) -> WorldState:
    """Advance the actual world by one event.

    A move updates the grid. A communication adds the piece to the
    knowledge of every agent in hearing range; speaking never changes the
    speaker's own set.
    """
    if isinstance(event, Move):
        try:
            next_grid = apply_move(world.grid, event.agent, event.direction)
        except Exception as exc:
            raise IllegalEvent(f"blocked move: {exc}") from exc
        return WorldState(next_grid, dict(world.knowledge))

    if event.info not in world.knowledge.get(event.agent, frozenset()):
        raise IllegalEvent(
            f"agent {event.agent} cannot communicate piece {event.info} it does not hold"
        )
    out = world.copy()
    for listener in hearers(world.grid, event.agent, rule):
        out.knowledge[listener] = out.knowledge[listener] | {event.info}
    return out


def observe_event(
    belief: BeliefState, event: Event, world_before: WorldState, rule: AdjacencyRule
) -> BeliefState:
    """Update one observer's belief state for an event it watched.

    Movements carry no knowledge content. For a communication, the
    observer always sees who speaks and who is in range; it learns the
    content only if it is itself speaker or hearer. When the content is
    hidden, each hearer's possible sets are extended with every message
    the speaker would rationally pick (cooperative maximizer under the
    observer's current belief about the speaker); a unique maximizer keeps
    the belief sharp, several maximizers multiply the worlds.
    """
    if isinstance(event, Move):
        return belief

    audience = hearers(world_before.grid, event.agent, rule)
    if not audience:
        return belief

    out = belief.copy()
    observer_hears = belief.observer == event.agent or belief.observer in audience

    if observer_hears:
        # Content is known: seeing the speaker utter the piece also proves
        # the speaker holds it.
        consistent = frozenset(w for w in out.worlds[event.agent] if event.info in w)
        if not consistent:
            raise InconsistentObservation(
                f"observer {belief.observer}: no possible world lets agent "
                f"{event.agent} communicate piece {event.info}"
            )
        out.worlds[event.agent] = consistent
        for listener in audience:
            out.worlds[listener] = frozenset(w | {event.info} for w in out.worlds[listener])
        return out

    messages = rational_messages(out, event.agent, audience)
    for listener in audience:
        posterior = frozenset(w | {m} for w in out.worlds[listener] for m in messages)
        if not posterior:
            raise InconsistentObservation(
                f"observer {belief.observer}: empty posterior for agent {listener}"
            )
        out.worlds[listener] = posterior
    return out


def rational_messages(belief: BeliefState, speaker: int, audience: frozenset[int]) -> frozenset[int]:
    """Messages a third-party speaker would rationally pick, as modeled by
    the observer holding `belief`.

    Third parties are assumed cooperative (the default attitude); the set
    is the union over the observer's possible speaker worlds of the
    optimal messages in that world.
    """
    from .intents import Attitude, NoValidMessage, best_messages  # intents depends on this module

    messages: frozenset[int] = frozenset()
    for speaker_world in belief.worlds[speaker]:
        try:
            messages = messages | best_messages(
                speaker,
                own=speaker_world,
                attitude=Attitude.cooperative(),
                belief=belief,
                audience=audience,
            )
        except NoValidMessage:
            # Nothing novel to say in this world: the utterance is
            # uninformative, so any held piece is possible.
            messages = messages | speaker_world
    return messages


def certain_missing(belief: BeliefState, target: int) -> frozenset[int]:
    """Pieces the target lacks in every possible world."""
    try:
        worlds = belief.worlds[target]
    except KeyError:
        raise UnknownAgent(f"agent {target} not tracked by observer {belief.observer}") from None
    missing = FULL_KNOWLEDGE
    for w in worlds:
        missing = missing - w
    return missing


def possibly_missing(belief: BeliefState, target: int) -> frozenset[int]:
    """Pieces the target lacks in at least one possible world."""
    try:
        worlds = belief.worlds[target]
    except KeyError:
        raise UnknownAgent(f"agent {target} not tracked by observer {belief.observer}") from None
    out: frozenset[int] = frozenset()
    for w in worlds:
        out = out | (FULL_KNOWLEDGE - w)
    return out
