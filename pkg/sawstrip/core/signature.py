"""
Boundary-line signatures and the local move rules of the sweep.

A signature packs one 2-bit state per boundary slot (slot 0 in the lowest
bits) followed by a 2-bit walk-end class:

    EMPTY       0   no edge
    LOWER       1   lower end of an arc (its partner lies at a higher slot)
    UPPER       2   upper end of an arc
    FREE        3   strand leading to a walk end

Arcs nest like parentheses. The class field records which boundary the
walk's far end was placed on (0 while it is still unplaced); the near end is
the origin half-edge ``a``, injected as a FREE in-edge at the origin site.

Slot layout for a sweep position at site t with slot width w (2 for the
square and honeycomb lattices, 3 for the triangular lattice): the site's w
in-slots start at ``t * (w - 1)`` and its w out-slots replace them in place.
At the end of a column the whole line shifts up by w - 1 slots.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from ..errors import EngineError, WidthLimitError
from .geometry import CellEvent, SiteMove, WalkClass

logger = logging.getLogger(__name__)

EMPTY, LOWER, UPPER, FREE = 0, 1, 2, 3

# Codes are stored as int64 in the engine
MAX_CODE_BITS = 63

COMPLETED = -1


class Transition(NamedTuple):
    target: int  # new code, or COMPLETED when the walk closes at this site
    event: CellEvent
    walk_class: int  # class of a completed walk, 0 otherwise


@dataclass(frozen=True)
class SlotLayout:
    n_slots: int
    width: int

    def __post_init__(self):
        if 2 * self.n_slots + 2 > MAX_CODE_BITS:
            raise WidthLimitError(
                f"{self.n_slots} boundary slots need {2 * self.n_slots + 2} bits; "
                f"the packed signature holds {MAX_CODE_BITS}"
            )

    @property
    def step(self) -> int:
        return self.width - 1

    def offset(self, t: int) -> int:
        return t * self.step

    @property
    def slot_mask(self) -> int:
        return (1 << (2 * self.n_slots)) - 1


def encode(states: Sequence[int], walk_class: int, n_slots: int) -> int:
    code = 0
    for i, s in enumerate(states):
        code |= (s & 3) << (2 * i)
    return code | (walk_class << (2 * n_slots))


def decode(code: int, n_slots: int) -> tuple[list[int], int]:
    states = [(code >> (2 * i)) & 3 for i in range(n_slots)]
    return states, (code >> (2 * n_slots)) & 3


def partner(states: Sequence[int], i: int) -> int:
    """Index of the other end of the arc ending at slot i."""
    s = states[i]
    if s == LOWER:
        depth = 0
        for j in range(i + 1, len(states)):
            if states[j] == LOWER:
                depth += 1
            elif states[j] == UPPER:
                if depth == 0:
                    return j
                depth -= 1
    elif s == UPPER:
        depth = 0
        for j in range(i - 1, -1, -1):
            if states[j] == UPPER:
                depth += 1
            elif states[j] == LOWER:
                if depth == 0:
                    return j
                depth -= 1
    else:
        raise EngineError(f"slot {i} holds state {s}, not an arc end")
    raise EngineError(f"unmatched arc end at slot {i}: {list(states)}")


def is_valid(states: Sequence[int], walk_class: int = 0) -> bool:
    """Balanced, non-crossing arcs and at most two free ends."""
    depth = 0
    for s in states:
        if s == LOWER:
            depth += 1
        elif s == UPPER:
            depth -= 1
            if depth < 0:
                return False
    if depth != 0:
        return False
    free = sum(1 for s in states if s == FREE)
    if free > 2:
        return False
    # A second free strand exists only once the far end has been placed
    return free < 2 or walk_class != 0


def rotate(code: int, layout: SlotLayout) -> int:
    """Shift the line by one column; the vacated top slots must be empty."""
    shift = 2 * layout.step
    slots = code & layout.slot_mask
    if slots >> (2 * layout.n_slots - shift):
        raise EngineError(f"occupied slot pushed past the boundary: {code:#x}")
    return ((slots << shift) & layout.slot_mask) | (code & ~layout.slot_mask)


def _contact(move: SiteMove, visited: bool, outs: Sequence[int]) -> int:
    if visited and move.weighted_site:
        return 1
    if any(move.weighted_out[k] for k in outs):
        return 1
    return 0


def site_transitions(
    code: int,
    move: SiteMove,
    layout: SlotLayout,
    classes: frozenset[int],
) -> list[Transition]:
    """
    Every legal continuation of one signature across one site.

    ``classes`` lists the walk classes whose end half-edges may be used;
    exits of any other class are treated as absent.
    """
    states, z = decode(code, layout.n_slots)
    off = layout.offset(move.t)
    w = layout.width
    ins = states[off:off + w]
    contact_side = move.weighted_site or any(move.weighted_out)

    if not move.present:
        if any(ins):
            raise EngineError(f"edge into an absent site at t={move.t}: {code:#x}")
        return [Transition(code, CellEvent(0, 0, contact_side), 0)]

    for k, s in enumerate(ins):
        if s and not move.in_edges[k]:
            raise EngineError(f"state {s} on a missing in-edge at t={move.t}: {code:#x}")

    exits = [c for c in move.exits if int(c) in classes]
    free_outs = [k for k in range(w) if move.out_edges[k]]
    bonus = move.origin_steps if move.origin else 0
    occupied = [(off + k, s) for k, s in enumerate(ins) if s]
    if move.origin:
        occupied.append((None, FREE))

    base = list(states)
    base[off:off + w] = [EMPTY] * w
    out: list[Transition] = []

    def cell(outs: Sequence[int], visited: bool = True) -> CellEvent:
        return CellEvent(len(outs) + bonus, _contact(move, visited, outs), contact_side)

    def emit(new_states: list[int], new_z: int, outs: Sequence[int]) -> None:
        out.append(Transition(encode(new_states, new_z, layout.n_slots), cell(outs), 0))

    def complete(rest: list[int], walk_class: int) -> None:
        if any(rest) or walk_class == 0:
            return
        out.append(Transition(COMPLETED, cell(()), walk_class))

    d = len(occupied)
    if d == 0:
        out.append(Transition(code, CellEvent(0, 0, contact_side), 0))
        if z == 0:
            for c in exits:
                for k in free_outs:
                    new = list(base)
                    new[off + k] = FREE
                    emit(new, int(c), (k,))
        for i, k1 in enumerate(free_outs):
            for k2 in free_outs[i + 1:]:
                new = list(base)
                new[off + k1] = LOWER
                new[off + k2] = UPPER
                emit(new, z, (k1, k2))

    elif d == 1:
        _, s = occupied[0]
        for k in free_outs:
            new = list(base)
            new[off + k] = s
            emit(new, z, (k,))
        if z == 0:
            for c in exits:
                if s == FREE:
                    complete(base, int(c))
                else:
                    new = list(base)
                    new[partner(states, occupied[0][0])] = FREE
                    out.append(Transition(encode(new, int(c), layout.n_slots), cell(()), 0))

    elif d == 2:
        (i1, s1), (i2, s2) = occupied
        new = list(base)
        if s1 == FREE and s2 == FREE:
            complete(new, z)
        elif s1 == FREE or s2 == FREE:
            loop_slot = i2 if s1 == FREE else i1
            new[partner(states, loop_slot)] = FREE
            emit(new, z, ())
        elif s1 == LOWER and s2 == LOWER:
            new[partner(states, i2)] = LOWER
            emit(new, z, ())
        elif s1 == UPPER and s2 == UPPER:
            new[partner(states, i1)] = UPPER
            emit(new, z, ())
        elif s1 == UPPER and s2 == LOWER:
            emit(new, z, ())
        # LOWER then UPPER closes a loop: dropped

    # three or more occupied in-edges cannot meet at a vertex of a SAW
    return out


def initial_code() -> int:
    return 0


def describe(code: int, n_slots: int) -> str:
    """Human-readable form, e.g. ``'.(|)*' z=B``."""
    states, z = decode(code, n_slots)
    glyph = {EMPTY: ".", LOWER: "(", UPPER: ")", FREE: "*"}
    name = WalkClass(z).name if z else "-"
    return "".join(glyph[s] for s in states) + f" z={name}"
