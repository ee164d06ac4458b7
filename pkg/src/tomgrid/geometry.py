"""Board geometry: agent placement, template transformations, spacing
expansion, single-cell movement, and the spatial hearing predicate.

Coordinates are 0-indexed (row, col) with row 0 at the top. This module is
the single conversion site for the 1-indexed closed-form transformation
maps used in the design notes: a 1-indexed map T'_{i,j} = T_{m-j+1, i}
becomes the 0-indexed cell map (r, c) -> (c, s-1-r) used below.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from enum import Enum

Coord = tuple[int, int]


class GridError(Exception):
    """Base class for geometry errors."""


class OutOfBounds(GridError):
    pass


class CellOccupied(GridError):
    pass


class AgentNotPlaced(GridError):
    pass


class PlacementInfeasible(GridError):
    pass


class AdjacencyRule(str, Enum):
    """Which spatial predicate decides who can hear a communication.

    EIGHT_NEIGHBORHOOD matches the prose rule shown in every prompt
    (orthogonal and diagonal neighbors). MANHATTAN_ONE_TO_TWO matches the
    distance formula 1 <= |dr| + |dc| <= 2, which additionally admits
    straight-line distance-2 hearing. Exactly one rule is active per
    scenario and is recorded in scenario metadata.
    """

    EIGHT_NEIGHBORHOOD = "eight_neighborhood"
    MANHATTAN_ONE_TO_TWO = "manhattan_one_to_two"


DEFAULT_ADJACENCY_RULE = AdjacencyRule.EIGHT_NEIGHBORHOOD


class Transformation(str, Enum):
    IDENTITY = "identity"
    ROT90 = "rot90"
    ROT180 = "rot180"
    ROT270 = "rot270"
    MIRROR_H = "mirror_h"
    MIRROR_V = "mirror_v"
    TRANSPOSE = "transpose"


TRANSFORMATIONS: tuple[Transformation, ...] = tuple(Transformation)


class Direction(str, Enum):
    UP = "up"
    DOWN = "down"
    LEFT = "left"
    RIGHT = "right"


_DIRECTION_DELTAS: dict[Direction, Coord] = {
    Direction.UP: (-1, 0),
    Direction.DOWN: (1, 0),
    Direction.LEFT: (0, -1),
    Direction.RIGHT: (0, 1),
}

# 0-indexed cell maps for a square side-s board; see module docstring.
_CELL_MAPS = {
    Transformation.IDENTITY: lambda r, c, s: (r, c),
    Transformation.ROT90: lambda r, c, s: (c, s - 1 - r),
    Transformation.ROT180: lambda r, c, s: (s - 1 - r, s - 1 - c),
    Transformation.ROT270: lambda r, c, s: (s - 1 - c, r),
    Transformation.MIRROR_H: lambda r, c, s: (s - 1 - r, c),
    Transformation.MIRROR_V: lambda r, c, s: (r, s - 1 - c),
    Transformation.TRANSPOSE: lambda r, c, s: (c, r),
}

# How a movement direction reads after the board is transformed. Needed so
# scripted events stay meaningful on transformed grids.
_DIRECTION_MAPS: dict[Transformation, dict[Direction, Direction]] = {
    Transformation.IDENTITY: {d: d for d in Direction},
    Transformation.ROT90: {
        Direction.UP: Direction.RIGHT,
        Direction.RIGHT: Direction.DOWN,
        Direction.DOWN: Direction.LEFT,
        Direction.LEFT: Direction.UP,
    },
    Transformation.ROT180: {
        Direction.UP: Direction.DOWN,
        Direction.DOWN: Direction.UP,
        Direction.LEFT: Direction.RIGHT,
        Direction.RIGHT: Direction.LEFT,
    },
    Transformation.ROT270: {
        Direction.UP: Direction.LEFT,
        Direction.LEFT: Direction.DOWN,
        Direction.DOWN: Direction.RIGHT,
        Direction.RIGHT: Direction.UP,
    },
    Transformation.MIRROR_H: {
        Direction.UP: Direction.DOWN,
        Direction.DOWN: Direction.UP,
        Direction.LEFT: Direction.LEFT,
        Direction.RIGHT: Direction.RIGHT,
    },
    Transformation.MIRROR_V: {
        Direction.UP: Direction.UP,
        Direction.DOWN: Direction.DOWN,
        Direction.LEFT: Direction.RIGHT,
        Direction.RIGHT: Direction.LEFT,
    },
    Transformation.TRANSPOSE: {
        Direction.UP: Direction.LEFT,
        Direction.LEFT: Direction.UP,
        Direction.DOWN: Direction.RIGHT,
        Direction.RIGHT: Direction.DOWN,
    },
}


def chebyshev(a: Coord, b: Coord) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def manhattan(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass
class Grid:
    """Square board with up to four agents, each occupying one cell.

    `locked_pairs` are unordered agent pairs that must stay mutually
    adjacent through spacing expansion (they carry a task-critical
    adjacency).
    """

    side: int
    placements: dict[int, Coord]
    locked_pairs: frozenset[frozenset[int]] = field(default_factory=frozenset)

    def copy(self) -> "Grid":
        return Grid(self.side, dict(self.placements), self.locked_pairs)

    def in_bounds(self, cell: Coord) -> bool:
        return 0 <= cell[0] < self.side and 0 <= cell[1] < self.side

    def cell_of(self, agent: int) -> Coord:
        try:
            return self.placements[agent]
        except KeyError:
            raise AgentNotPlaced(f"agent {agent} is not placed") from None

    def validate(self, rule: AdjacencyRule = DEFAULT_ADJACENCY_RULE) -> None:
        """Raise GridError if any placement invariant is violated."""
        if self.side < 1:
            raise GridError(f"side must be >= 1, got {self.side}")
        seen: dict[Coord, int] = {}
        for agent, cell in self.placements.items():
            if not 0 <= agent <= 3:
                raise GridError(f"agent id {agent} outside 0..3")
            if not self.in_bounds(cell):
                raise OutOfBounds(f"agent {agent} at {cell} outside side-{self.side} board")
            if cell in seen:
                raise CellOccupied(f"agents {seen[cell]} and {agent} share cell {cell}")
            seen[cell] = agent
        for pair in self.locked_pairs:
            a, b = sorted(pair)
            if not can_hear(self, a, b, rule):
                raise GridError(f"locked pair ({a}, {b}) not adjacent under {rule.value}")


def can_hear(grid: Grid, listener: int, speaker: int, rule: AdjacencyRule) -> bool:
    """Whether `listener` is in hearing range of `speaker`.

    Symmetric in its two agent arguments; both must be placed and distinct.
    """
    if listener == speaker:
        raise ValueError("listener and speaker must differ")
    a = grid.cell_of(listener)
    b = grid.cell_of(speaker)
    if rule is AdjacencyRule.EIGHT_NEIGHBORHOOD:
        return chebyshev(a, b) == 1
    return 1 <= manhattan(a, b) <= 2


def transform(grid: Grid, kind: Transformation) -> Grid:
    """Apply one of the seven board isometries.

    Total on valid grids: side is unchanged (boards are square) and every
    pairwise distance, hence every locked adjacency, is preserved.
    """
    cell_map = _CELL_MAPS[kind]
    s = grid.side
    placements = {a: cell_map(r, c, s) for a, (r, c) in grid.placements.items()}
    return Grid(s, placements, grid.locked_pairs)


def transform_direction(direction: Direction, kind: Transformation) -> Direction:
    return _DIRECTION_MAPS[kind][direction]


def apply_move(grid: Grid, agent: int, direction: Direction) -> Grid:
    """Move one agent by one cell; destination must be free and in bounds."""
    r, c = grid.cell_of(agent)
    dr, dc = _DIRECTION_DELTAS[direction]
    dest = (r + dr, c + dc)
    if not grid.in_bounds(dest):
        raise OutOfBounds(f"agent {agent} cannot move {direction.value} from {(r, c)}")
    if dest in grid.placements.values():
        raise CellOccupied(f"cell {dest} already occupied")
    out = grid.copy()
    out.placements[agent] = dest
    return out


def increase_size(
    grid: Grid,
    delta: int,
    rng: random.Random,
    pinned: frozenset[int] = frozenset(),
) -> Grid:
    """Grow the board side by `delta` and push free agents outward.

    Agents in a locked pair, and `pinned` agents (whose offset to the rest
    of the configuration is task-critical), keep their cells. Every other
    agent is displaced by up to `delta` cells to a uniformly chosen cell
    that is weakly farther (in both Chebyshev and Manhattan distance) from
    every other agent, so pairwise distances never shrink and no new
    hearing relation can appear. Keeping the original cell is always a
    valid choice, so the operation cannot fail on a valid grid.
    """
    if not 0 <= delta <= 3:
        raise ValueError(f"delta must be in 0..3, got {delta}")
    locked_agents = {a for pair in grid.locked_pairs for a in pair}
    out = Grid(grid.side + delta, dict(grid.placements), grid.locked_pairs)
    if delta == 0:
        out.validate()
        return out

    free = [a for a in sorted(grid.placements) if a not in locked_agents and a not in pinned]
    for agent in free:
        origin = out.placements[agent]
        others = {a: cell for a, cell in out.placements.items() if a != agent}
        candidates = []
        for dr in range(-delta, delta + 1):
            for dc in range(-delta, delta + 1):
                dest = (origin[0] + dr, origin[1] + dc)
                if not out.in_bounds(dest) or dest in others.values():
                    continue
                grew_apart = all(
                    chebyshev(dest, cell) >= chebyshev(origin, cell)
                    and manhattan(dest, cell) >= manhattan(origin, cell)
                    for cell in others.values()
                )
                if grew_apart:
                    candidates.append(dest)
        if not candidates:
            raise PlacementInfeasible(f"no displacement available for agent {agent}")
        out.placements[agent] = candidates[rng.randrange(len(candidates))]

    out.validate()
    return out
