"""Utility-maximizing action selection: optimal movement targets and
optimal messages under cooperative, obstructive, and mixed attitudes.

The movement utility of approaching another agent is the number of pieces
learnable from it plus the number of pieces shareable with it. Message
utilities are set-valued: cooperative speakers pick pieces the audience
lacks, obstructive speakers pick pieces the audience certainly already
holds, and mixed speakers pick pieces the cooperative target lacks that
the obstructive target already holds. All selections are evaluated in
expectation over the acting agent's possible-worlds belief, with exact
rational arithmetic so ties are detected exactly; ties return every
maximizer.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import AbstractSet, Iterable

from .epistemics import BeliefState


class IntentError(Exception):
    pass


class NoValidMessage(IntentError):
    """The defining message set is empty; signals a malformed template."""


class AttitudeKind(str, Enum):
    COOPERATIVE = "cooperative"
    OBSTRUCTIVE = "obstructive"
    MIXED = "mixed"


@dataclass(frozen=True)
class Attitude:
    kind: AttitudeKind
    coop_target: int | None = None
    obstruct_target: int | None = None

    @staticmethod
    def cooperative() -> "Attitude":
        return Attitude(AttitudeKind.COOPERATIVE)

    @staticmethod
    def obstructive() -> "Attitude":
        return Attitude(AttitudeKind.OBSTRUCTIVE)

    @staticmethod
    def mixed(coop_target: int, obstruct_target: int) -> "Attitude":
        if coop_target == obstruct_target:
            raise ValueError("mixed attitude targets must be distinct")
        return Attitude(AttitudeKind.MIXED, coop_target, obstruct_target)


def movement_utility(own: frozenset[int], believed_target: frozenset[int]) -> int:
    """Learnable pieces plus shareable pieces; symmetric in its arguments."""
    return len(believed_target - own) + len(own - believed_target)


def _prob_lacking(worlds: AbstractSet[frozenset[int]], piece: int) -> Fraction:
    """P(piece not held), uniform over the possible sets."""
    return Fraction(sum(1 for w in worlds if piece not in w), len(worlds))


def _argmax(scores: dict[int, Fraction]) -> frozenset[int]:
    best = max(scores.values())
    return frozenset(k for k, v in scores.items() if v == best)


def expected_movement_utility(
    own: frozenset[int], worlds: AbstractSet[frozenset[int]]
) -> Fraction:
    total = sum(movement_utility(own, w) for w in worlds)
    return Fraction(total, len(worlds))


def best_move_targets(agent: int, own: frozenset[int], belief: BeliefState) -> frozenset[int]:
    """Other agents maximizing expected movement utility; ties return all."""
    candidates = [a for a in belief.worlds if a != agent]
    if not candidates:
        raise IntentError("no other agent to approach")
    scores = {a: expected_movement_utility(own, belief.worlds[a]) for a in candidates}
    return _argmax(scores)


def best_messages(
    agent: int,
    own: frozenset[int],
    attitude: Attitude,
    belief: BeliefState,
    audience: Iterable[int],
) -> frozenset[int]:
    """Optimal pieces for the agent to communicate, given its attitude.

    Cooperative scoring is the expected number of audience members for
    whom the piece is novel, which reduces to the plain set difference for
    one listener with a sharp belief. Obstructive messages must already be
    held by every audience member in every possible world. Mixed scoring
    is the expected joint indicator of "novel to the cooperative target"
    and "stale for the obstructive target".
    """
    audience = sorted(set(audience))
    if not own:
        raise NoValidMessage(f"agent {agent} holds no information")
    if attitude.kind is not AttitudeKind.MIXED and not audience:
        raise NoValidMessage("no audience in hearing range")

    if attitude.kind is AttitudeKind.COOPERATIVE:
        scores = {
            m: sum((_prob_lacking(belief.worlds[h], m) for h in audience), Fraction(0))
            for m in own
        }
        positive = {m: s for m, s in scores.items() if s > 0}
        if not positive:
            raise NoValidMessage("no piece is novel to any listener")
        return _argmax(positive)

    if attitude.kind is AttitudeKind.OBSTRUCTIVE:
        safe = frozenset(
            m
            for m in own
            if all(_prob_lacking(belief.worlds[h], m) == 0 for h in audience)
        )
        if not safe:
            raise NoValidMessage("every held piece could teach someone something")
        return safe

    coop, obstruct = attitude.coop_target, attitude.obstruct_target
    scores = {
        m: _prob_lacking(belief.worlds[coop], m)
        * (1 - _prob_lacking(belief.worlds[obstruct], m))
        for m in own
    }
    positive = {m: s for m, s in scores.items() if s > 0}
    if not positive:
        raise NoValidMessage("no piece helps the ally while staying stale for the rival")
    return _argmax(positive)
