"""The Manhattan lattice: Z^2 with streets and avenues oriented by parity.

A horizontal edge at height ``y`` points East when ``y`` is even and West
otherwise; a vertical edge at abscissa ``x`` points North when ``x`` is even
and South otherwise.  Every vertex therefore has exactly one outgoing street
move and one outgoing avenue move.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Iterable, NamedTuple, Sequence

from .errors import ContractError


class Direction(IntEnum):
    # The integer order E < N < W < S is the canonical enumeration order.
    E = 0
    N = 1
    W = 2
    S = 3

    @property
    def dx(self) -> int:
        return _DX[self]

    @property
    def dy(self) -> int:
        return _DY[self]

    @property
    def is_street(self) -> bool:
        return self in (Direction.E, Direction.W)

    def reverse(self) -> "Direction":
        return Direction((self + 2) % 4)

    def __str__(self) -> str:
        return self.name


_DX = (1, 0, -1, 0)
_DY = (0, 1, 0, -1)
_FROM_DELTA = {(1, 0): Direction.E, (0, 1): Direction.N, (-1, 0): Direction.W, (0, -1): Direction.S}


class Point(NamedTuple):
    x: int
    y: int

    @property
    def parity(self) -> int:
        return (self.x + self.y) & 1

    def step(self, d: Direction) -> "Point":
        return Point(self.x + _DX[d], self.y + _DY[d])


ORIGIN = Point(0, 0)


def direction_between(a: Sequence[int], b: Sequence[int]) -> Direction:
    """The unit direction from ``a`` to ``b``; raises if they are not neighbours."""
    try:
        return _FROM_DELTA[(b[0] - a[0], b[1] - a[1])]
    except KeyError:
        raise ContractError(f"{tuple(a)} and {tuple(b)} are not lattice neighbours") from None


def street_direction(y: int) -> Direction:
    return Direction.E if y % 2 == 0 else Direction.W


def avenue_direction(x: int) -> Direction:
    return Direction.N if x % 2 == 0 else Direction.S


def outgoing_directions(p: Sequence[int]) -> frozenset[Direction]:
    """The two directions whose oriented edge leaves ``p``."""
    return frozenset((street_direction(p[1]), avenue_direction(p[0])))


def is_legal_step(p: Sequence[int], d: Direction) -> bool:
    return d == street_direction(p[1]) or d == avenue_direction(p[0])


def is_turn(d_prev: Direction, d_next: Direction) -> bool:
    if d_next == Direction(d_prev).reverse():
        raise ContractError(f"reversal {Direction(d_prev).name}->{Direction(d_next).name} is not a step of an oriented walk")
    return (d_prev - d_next) % 2 == 1


def legal_extensions(p: Sequence[int], d_prev: Direction | None, turned_prev: bool) -> frozenset[Direction]:
    """Outgoing directions at ``p`` that do not make a second consecutive turn.

    Self-avoidance is the caller's business.
    """
    out = outgoing_directions(p)
    if d_prev is None or not turned_prev:
        return out
    return frozenset(d for d in out if not is_turn(d_prev, d))


def reflect_direction(d: Direction, flip_ew: bool, flip_ns: bool) -> Direction:
    if flip_ew and d.is_street:
        return d.reverse()
    if flip_ns and not d.is_street:
        return d.reverse()
    return d


def transport_flips(v: Sequence[int]) -> tuple[bool, bool]:
    """Reflections carrying the Manhattan orientation at ``v`` onto the one at the origin.

    Moving the origin to ``v`` by translation preserves orientation only when
    both coordinates of ``v`` are even.  An odd ``y`` inverts the streets,
    repaired by the East/West mirror; an odd ``x`` inverts the avenues,
    repaired by the North/South mirror.  Returns ``(flip_ew, flip_ns)``.
    """
    return (v[1] % 2 == 1, v[0] % 2 == 1)


def transport_steps(steps: Iterable[Direction], start: Sequence[int]) -> tuple[Direction, ...]:
    """Re-express a walk leaving ``start`` as a walk leaving the origin.

    The map is an automorphism of the oriented lattice (translation then the
    parity reflections), so legality, turns and self-avoidance all survive.
    It is an involution given ``start``.
    """
    flip_ew, flip_ns = transport_flips(start)
    return tuple(reflect_direction(Direction(d), flip_ew, flip_ns) for d in steps)


def untransport_steps(steps: Iterable[Direction], start: Sequence[int]) -> tuple[Direction, ...]:
    # the reflections are involutions
    return transport_steps(steps, start)


def swap_diagonal(d: Direction) -> Direction:
    """Image of ``d`` under the reflection (x, y) -> (y, x), which preserves the orientation."""
    return (Direction.N, Direction.E, Direction.S, Direction.W)[d]
