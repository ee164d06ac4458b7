"""Independent re-derivation of every gold answer by explicit world
enumeration and exact argmax.

This module is a deliberate second implementation: it works on the plain
serialized sample (scenario snapshot + question record), uses its own
geometry and replay code, and never calls the template/derivation helpers
it is checking. Hidden communications branch the world set over every
message consistent with third-party cooperative rationality, weights are
exact rationals, and candidate actions are scored by summation over the
enumerated worlds. Verification is a pure function; Fail is a value, not
an exception.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

_FULL = frozenset({0, 1, 2, 3})


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    independent_gold: tuple[str, ...]
    diagnostics: str = ""


@dataclass
class VerifyReport:
    total: int
    passed: int
    failures: list[tuple[str, tuple[str, ...], str]]

    @property
    def ok(self) -> bool:
        return not self.failures


def _adjacent(rule: str, a: tuple[int, int], b: tuple[int, int]) -> bool:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    if rule == "eight_neighborhood":
        return max(dr, dc) == 1
    return 1 <= dr + dc <= 2


_DELTAS = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}


def _semantic_key(semantic) -> tuple:
    def freeze(x):
        return tuple(freeze(v) for v in x) if isinstance(x, (list, tuple)) else x

    return freeze(semantic)


class _Trace:
    """Actual trajectory: per-event positions, hearer sets, and knowledge."""

    def __init__(self, scenario: dict):
        self.rule = scenario["adjacency_rule"]
        positions = {int(a): tuple(c) for a, c in scenario["placements"].items()}
        knowledge = {int(a): frozenset(k) for a, k in scenario["initial_knowledge"].items()}
        self.agents = sorted(knowledge)
        self.initial = dict(knowledge)
        self.event_positions: list[dict[int, tuple[int, int]]] = []
        self.event_hearers: list[frozenset[int]] = []
        for event in scenario["events"]:
            self.event_positions.append(dict(positions))
            if event["kind"] == "move":
                agent = int(event["agent"])
                dr, dc = _DELTAS[event["direction"]]
                r, c = positions[agent]
                positions[agent] = (r + dr, c + dc)
                self.event_hearers.append(frozenset())
            else:
                speaker = int(event["agent"])
                audience = frozenset(
                    a
                    for a in self.agents
                    if a != speaker and _adjacent(self.rule, positions[a], positions[speaker])
                )
                self.event_hearers.append(audience)
                for listener in audience:
                    knowledge[listener] = knowledge[listener] | {int(event["info"])}
        self.final_positions = positions
        self.final_knowledge = knowledge


def _heard(trace: _Trace, scenario: dict, agent: int, event_ix: int) -> bool:
    event = scenario["events"][event_ix]
    if event["kind"] != "communicate":
        return False
    return agent == int(event["agent"]) or agent in trace.event_hearers[event_ix]


def _enumerate_worlds(
    scenario: dict, trace: _Trace, observer: int
) -> list[tuple[Fraction, dict[int, frozenset], tuple]]:
    """All joint knowledge assignments consistent with the observer's
    evidence, with exact probabilities and per-event message assignments."""
    worlds: list[tuple[Fraction, dict[int, frozenset], tuple]] = [
        (Fraction(1), dict(trace.initial), ())
    ]
    for ix, event in enumerate(scenario["events"]):
        if event["kind"] == "move":
            worlds = [(p, k, msgs + (None,)) for p, k, msgs in worlds]
            continue
        speaker = int(event["agent"])
        audience = trace.event_hearers[ix]
        if not audience:
            worlds = [(p, k, msgs + (None,)) for p, k, msgs in worlds]
            continue
        next_worlds = []
        if observer == speaker or observer in audience:
            piece = int(event["info"])
            for p, k, msgs in worlds:
                if piece not in k[speaker]:
                    continue  # evidence excludes this world
                nk = dict(k)
                for h in audience:
                    nk[h] = nk[h] | {piece}
                next_worlds.append((p, nk, msgs + (piece,)))
        else:
            for p, k, msgs in worlds:
                # The speaker's view of each hearer: initial knowledge plus
                # every earlier message both of them heard.
                believed = {}
                for h in audience:
                    extra = {
                        msgs[j]
                        for j in range(ix)
                        if msgs[j] is not None
                        and _heard(trace, scenario, h, j)
                        and _heard(trace, scenario, speaker, j)
                    }
                    believed[h] = trace.initial[h] | extra
                scores = {
                    c: sum(1 for h in audience if c not in believed[h]) for c in k[speaker]
                }
                best = max(scores.values())
                rational = sorted(c for c, s in scores.items() if s == best) if best > 0 else sorted(k[speaker])
                share = Fraction(1, len(rational))
                for c in rational:
                    nk = dict(k)
                    for h in audience:
                        nk[h] = nk[h] | {c}
                    next_worlds.append((p * share, nk, msgs + (c,)))
        if not next_worlds:
            raise ValueError("observation history admits no possible world")
        worlds = next_worlds
    return worlds


def _percept_fact(scenario: dict, trace: _Trace, subjects: dict) -> bool:
    task = scenario["task"]
    if task == "mc":
        x, y = int(subjects["x"]), int(subjects["y"])
        return _adjacent(trace.rule, trace.final_positions[x], trace.final_positions[y])
    if task == "cmcc":
        x, y = int(subjects["x"]), int(subjects["y"])
        outcomes = []
        for ix, event in enumerate(scenario["events"]):
            if event["kind"] == "communicate" and int(event["agent"]) in (x, y):
                listener = y if int(event["agent"]) == x else x
                positions = trace.event_positions[ix]
                outcomes.append(
                    _adjacent(trace.rule, positions[listener], positions[int(event["agent"])])
                )
        return len(outcomes) == 2 and all(outcomes)
    listener, speaker = int(subjects["listener"]), int(subjects["speaker"])
    for ix, event in enumerate(scenario["events"]):
        if event["kind"] == "communicate" and int(event["agent"]) == speaker:
            positions = trace.event_positions[ix]
            return _adjacent(trace.rule, positions[listener], positions[speaker])
    return False


def _gold_semantics(scenario: dict, question: dict) -> set[tuple]:
    trace = _Trace(scenario)
    observer = int(scenario["target_agent"])
    kind = question["kind"]
    subjects = question["subjects"]

    if kind == "percept":
        fact = _percept_fact(scenario, trace, subjects)
        answer_yes = fact if int(question["variant"]) == 1 else not fact
        return {("yesno", "yes" if answer_yes else "no")}

    worlds = _enumerate_worlds(scenario, trace, observer)

    if kind == "belief":
        task = scenario["task"]
        if task == "cmsc":
            missing = _FULL - trace.final_knowledge[observer]
            return {("info", m) for m in missing}
        if task == "cmcc":
            gold = set()
            for option in question["options"]:
                semantic = _semantic_key(option["semantic"])
                if semantic[0] == "pair_none":
                    x, y = int(subjects["x"]), int(subjects["y"])
                    holds = all(k[x] == _FULL and k[y] == _FULL for _p, k, _m in worlds)
                elif semantic[0] == "pair_claims":
                    (_, (xa, xp), (ya, yp)) = semantic
                    holds = all(xp not in k[xa] and yp not in k[ya] for _p, k, _m in worlds)
                else:
                    holds = False
                if holds:
                    gold.add(semantic)
            return gold
        if task == "mc":
            subject = int(subjects["subject"])
            missing = {m for m in _FULL if all(m not in k[subject] for _p, k, _m in worlds)}
            return {("info", m) for m in missing}
        event_ix = int(subjects["event_index"])
        support = {msgs[event_ix] for _p, _k, msgs in worlds}
        return {("info", m) for m in support}

    own = trace.final_knowledge[observer]
    attitude = scenario["attitude"]
    if scenario["task"] in ("cmsc", "cmcc"):
        candidates = [
            _semantic_key(o["semantic"])[1]
            for o in question["options"]
            if _semantic_key(o["semantic"])[0] == "agent"
        ]
        utilities = {
            a: sum(
                p * (len(k[a] - own) + len(own - k[a]))
                for p, k, _m in worlds
            )
            for a in candidates
        }
        best = max(utilities.values())
        return {("agent", a) for a, u in utilities.items() if u == best}

    audience = [
        a
        for a in trace.agents
        if a != observer
        and _adjacent(trace.rule, trace.final_positions[a], trace.final_positions[observer])
    ]
    if attitude["kind"] == "obstructive":
        safe = {
            m
            for m in own
            if all(all(m in k[h] for h in audience) for _p, k, _m in worlds)
        }
        return {("info", m) for m in safe}
    if attitude["kind"] == "mixed":
        coop, obstruct = int(attitude["coop_target"]), int(attitude["obstruct_target"])
        scores = {
            m: sum(
                p
                for p, k, _m in worlds
                if m not in k[coop] and m in k[obstruct]
            )
            for m in own
        }
    else:
        scores = {
            m: sum(
                p * sum(1 for h in audience if m not in k[h])
                for p, k, _m in worlds
            )
            for m in own
        }
    positive = {m: s for m, s in scores.items() if s > 0}
    if not positive:
        return set()
    best = max(positive.values())
    return {("info", m) for m, s in positive.items() if s == best}


def verify_sample(scenario: dict, question: dict, claimed_gold: list[str]) -> VerifyResult:
    """Re-derive the gold answer from scratch; Pass iff the letter sets match."""
    try:
        gold = _gold_semantics(scenario, question)
    except Exception as exc:
        return VerifyResult(False, (), f"independent derivation failed: {exc}")

    by_semantic: dict[tuple, str] = {
        _semantic_key(o["semantic"]): o["letter"] for o in question["options"]
    }
    letters = set()
    for semantic in gold:
        letter = by_semantic.get(semantic)
        if letter is None:
            return VerifyResult(
                False, (), f"independent gold {semantic} has no matching option"
            )
        letters.add(letter)
    independent = tuple(sorted(letters))
    if letters == set(claimed_gold):
        return VerifyResult(True, independent)
    return VerifyResult(
        False,
        independent,
        f"claimed {sorted(set(claimed_gold))} but independent derivation gives {list(independent)}",
    )


def verify_dataset(samples) -> VerifyReport:
    """verify_sample over every sample; empty input verifies vacuously."""
    failures = []
    passed = 0
    total = 0
    for sample in samples:
        total += 1
        result = verify_sample(sample.scenario, sample.question, list(sample.gold_letters))
        if result.ok:
            passed += 1
        else:
            failures.append((sample.sample_id, result.independent_gold, result.diagnostics))
    return VerifyReport(total=total, passed=passed, failures=failures)
