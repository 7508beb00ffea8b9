"""
Lattice geometry - the three lattices, their strips and surface rules.

Coordinates are (t, l): ``t = 0..T`` runs across the strip from the origin
boundary (alpha, t = 0) to the weighted surface (t = T); ``l`` runs along
the strip. A strip of half-length L holds the columns ``l = -L..L``; the
walk's origin mid-edge ``a`` is the inward half-edge of vertex (0, 0).

The honeycomb lattice is embedded as a brick wall: every longitudinal bond
(t, l)-(t, l+1) is present and the transverse bond (t, l)-(t+1, l) exists
iff ``t + l`` is odd. Vertices with ``t + l`` even therefore carry a bond
towards alpha ("inner" vertices, solid alpha exits at t = 0) and vertices
with ``t + l`` odd a bond towards beta ("outer" vertices). The triangular
lattice is the square lattice plus the diagonal (t, l)-(t+1, l+1).

Honeycomb patch S_{T,L}::

        l
        ^      eps   (top vertex of each column leaves at the same angle)
        |    .-----.
        |   /       |
      a>|  |         |  beta (outer half-edges of column T, weighted)
        |   \       |
        |    '-----'
        |      eps-bar
        +-----------------> t
      alpha        column t holds |l| <= 2L - 1 + t
"""

import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterator, NamedTuple, Optional

import mpmath
from mpmath import mpf
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

# Digits used when materialising lattice constants; comfortably above the
# double-double working tier.
CONSTANT_DPS = 64

# Published series estimates, zero-padded beyond the quoted digits.
SQUARE_XC = "0.37905227776"
TRIANGULAR_XC = "0.2409175745"


class LatticeKind(str, Enum):
    HONEYCOMB = "honeycomb"
    SQUARE = "square"
    TRIANGULAR = "triangular"


# Powers of x carried by the origin move. Honeycomb and square series count
# visited vertices (the two boundary half-steps make one extra step);
# triangular series count bonds.
ORIGIN_STEPS = {
    LatticeKind.HONEYCOMB: 1,
    LatticeKind.SQUARE: 1,
    LatticeKind.TRIANGULAR: 0,
}


class WeightingMode(str, Enum):
    ALTERNATE_SITE = "alternate-site"
    ALL_SITE = "all-site"
    EDGE = "edge"


class Shape(str, Enum):
    STRIP = "strip"
    PATCH = "patch"


class WalkClass(IntEnum):
    """Boundary a walk terminates on (0 is reserved for 'not yet')."""

    A = 1  # alpha \ {a}
    B = 2  # beta
    E = 3  # eps U eps-bar


def critical_x(lattice: LatticeKind) -> mpf:
    """
    Critical step fugacity x_c of a lattice.

    Honeycomb uses the exact 1/sqrt(2+sqrt(2)); square and triangular use
    the best series estimates, zero-padded past their quoted digits.
    """
    with mpmath.workdps(CONSTANT_DPS):
        if lattice == LatticeKind.HONEYCOMB:
            return 1 / mpmath.sqrt(2 + mpmath.sqrt(2))
        if lattice == LatticeKind.SQUARE:
            return mpf(SQUARE_XC)
        if lattice == LatticeKind.TRIANGULAR:
            return mpf(TRIANGULAR_XC)
    raise ValueError(f"Unknown lattice: {lattice}")


def connective_constant(lattice: LatticeKind) -> mpf:
    """mu = 1/x_c; exact sqrt(2+sqrt(2)) on the honeycomb lattice."""
    with mpmath.workdps(CONSTANT_DPS):
        if lattice == LatticeKind.HONEYCOMB:
            return mpmath.sqrt(2 + mpmath.sqrt(2))
        return 1 / critical_x(lattice)


class StripSpec(BaseModel):
    """Everything that determines one generating-function build."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lattice: LatticeKind
    width_T: int = Field(ge=0)
    half_length_L: int = Field(default=250, ge=1)
    mode: WeightingMode = WeightingMode.ALL_SITE
    trunc_M: int = Field(default=250, ge=1)
    x: Optional[mpf] = None
    shape: Shape = Shape.STRIP

    @field_validator("x", mode="before")
    @classmethod
    def _coerce_x(cls, value):
        if value is None:
            return None
        with mpmath.workdps(CONSTANT_DPS):
            value = mpf(value)
        if not mpmath.isfinite(value) or value <= 0:
            raise ValueError("step fugacity x must be finite and positive")
        return value

    @model_validator(mode="after")
    def _check_pairing(self):
        if self.mode == WeightingMode.ALTERNATE_SITE and self.lattice != LatticeKind.HONEYCOMB:
            raise ValueError("alternate-site weighting exists only on the honeycomb lattice")
        if self.shape == Shape.PATCH and self.lattice != LatticeKind.HONEYCOMB:
            raise ValueError("patch geometry is defined for the honeycomb lattice only")
        return self

    @property
    def step_fugacity(self) -> mpf:
        return self.x if self.x is not None else critical_x(self.lattice)

    @property
    def at_critical_x(self) -> bool:
        with mpmath.workdps(CONSTANT_DPS):
            return self.step_fugacity == critical_x(self.lattice)

    def key(self) -> dict:
        """JSON-safe identity of the build (used by checkpoints and reports)."""
        return {
            "lattice": self.lattice.value,
            "width_T": self.width_T,
            "half_length_L": self.half_length_L,
            "mode": self.mode.value,
            "trunc_M": self.trunc_M,
            "x": mpmath.nstr(self.step_fugacity, 40),
            "shape": self.shape.value,
        }

    def describe(self) -> str:
        return (
            f"{self.lattice.value}/{self.mode.value} {self.shape.value} "
            f"T={self.width_T} L={self.half_length_L} M={self.trunc_M}"
        )


class CellEvent(NamedTuple):
    """Weight picked up by one local move: x**new_edges * y**new_contacts."""

    new_edges: int  # 0..2, plus ORIGIN_STEPS at the origin
    new_contacts: int  # 0..1
    contact_side: bool  # site or one of its out-edges lies on the weighted surface


@dataclass(frozen=True)
class SiteMove:
    """
    Local picture of one site as seen by the sweep.

    Slots are listed in boundary-line order. Square/honeycomb: in =
    (side, back), out = (ahead, side). Triangular: in = (side, diag,
    back), out = (ahead, diag, side). "side" bonds run to t+1 (out) or come
    from t-1 (in), "back"/"ahead" bonds from l-1 / to l+1, diagonals from
    (t-1, l-1) / to (t+1, l+1).
    """

    t: int
    present: bool
    in_edges: tuple[bool, ...]
    out_edges: tuple[bool, ...]
    exits: tuple[WalkClass, ...] = ()
    origin: bool = False
    origin_steps: int = 1
    weighted_site: bool = False
    weighted_out: tuple[bool, ...] = ()
    column: int = field(default=0, compare=False)

    @property
    def width(self) -> int:
        return len(self.in_edges)


class StripGeometry:
    """Vertex/bond model of a strip or patch, shared by the sweep and the DFS oracle."""

    def __init__(self, spec: StripSpec):
        self.spec = spec
        self.lattice = spec.lattice
        self.T = spec.width_T
        self.L = spec.half_length_L
        self.mode = spec.mode
        self.patch = spec.shape == Shape.PATCH
        # Half-height of column 0 in the patch.
        self.patch_r0 = 2 * self.L - 1

    # -- vertex set ---------------------------------------------------------

    @property
    def column_range(self) -> range:
        reach = self.patch_r0 + self.T if self.patch else self.L
        return range(-reach, reach + 1)

    def has_vertex(self, t: int, l: int) -> bool:
        if t < 0 or t > self.T:
            return False
        if self.patch:
            return abs(l) <= self.patch_r0 + t
        return -self.L <= l <= self.L

    def is_outer(self, t: int, l: int) -> bool:
        """Honeycomb vertex whose transverse bond points towards beta."""
        return (t + l) % 2 == 1

    def _has_side_bond(self, t: int, l: int) -> bool:
        """Bond (t, l)-(t+1, l), ignoring whether (t+1, l) exists."""
        if self.lattice == LatticeKind.HONEYCOMB:
            return self.is_outer(t, l)
        return True

    def bond_exists(self, u: tuple[int, int], v: tuple[int, int]) -> bool:
        if not (self.has_vertex(*u) and self.has_vertex(*v)):
            return False
        (t1, l1), (t2, l2) = sorted([u, v])
        dt, dl = t2 - t1, l2 - l1
        if dt == 0 and abs(dl) == 1:
            return True
        if dt == 1 and dl == 0:
            return self._has_side_bond(t1, l1)
        if dt == 1 and dl == 1:
            return self.lattice == LatticeKind.TRIANGULAR
        return False

    def neighbours(self, t: int, l: int) -> list[tuple[int, int]]:
        steps = [(0, 1), (0, -1), (1, 0), (-1, 0)]
        if self.lattice == LatticeKind.TRIANGULAR:
            steps += [(1, 1), (-1, -1)]
        return [
            (t + dt, l + dl)
            for dt, dl in steps
            if self.bond_exists((t, l), (t + dt, l + dl))
        ]

    def exits(self, t: int, l: int) -> list[WalkClass]:
        """Boundary half-edges at a vertex (the origin's own half-edge excluded)."""
        found: list[WalkClass] = []
        if not self.has_vertex(t, l):
            return found
        if t == 0 and (l != 0) and self.has_alpha_bond(l):
            found.append(WalkClass.A)
        if t == self.T and self._has_side_bond(t, l):
            found.append(WalkClass.B)
        if self.patch and abs(l) == self.patch_r0 + t:
            found.append(WalkClass.E)
        return found

    def has_alpha_bond(self, l: int) -> bool:
        if self.lattice == LatticeKind.HONEYCOMB:
            return not self.is_outer(0, l)
        return True

    # -- surface weights ----------------------------------------------------

    def site_weighted(self, t: int, l: int) -> bool:
        if t != self.T or self.mode == WeightingMode.EDGE:
            return False
        if self.mode == WeightingMode.ALTERNATE_SITE:
            return self.is_outer(t, l)
        return True

    def bond_weighted(self, u: tuple[int, int], v: tuple[int, int]) -> bool:
        if self.mode != WeightingMode.EDGE:
            return False
        return u[0] == v[0] == self.T and abs(u[1] - v[1]) == 1

    # -- sweep descriptors --------------------------------------------------

    @property
    def slot_width(self) -> int:
        return 3 if self.lattice == LatticeKind.TRIANGULAR else 2

    @property
    def n_slots(self) -> int:
        return (self.T + 2) * (self.slot_width - 1)

    def site_move(self, t: int, l: int) -> SiteMove:
        triangular = self.lattice == LatticeKind.TRIANGULAR
        present = self.has_vertex(t, l)
        here = (t, l)
        side_in = present and self.bond_exists((t - 1, l), here)
        back_in = present and self.bond_exists((t, l - 1), here)
        ahead = (t, l + 1)
        side = (t + 1, l)
        ahead_out = present and self.bond_exists(here, ahead)
        side_out = present and self.bond_exists(here, side)
        if triangular:
            diag_in = present and self.bond_exists((t - 1, l - 1), here)
            diag = (t + 1, l + 1)
            diag_out = present and self.bond_exists(here, diag)
            in_edges = (side_in, diag_in, back_in)
            out_edges = (ahead_out, diag_out, side_out)
            weighted_out = (
                ahead_out and self.bond_weighted(here, ahead),
                diag_out and self.bond_weighted(here, diag),
                side_out and self.bond_weighted(here, side),
            )
        else:
            in_edges = (side_in, back_in)
            out_edges = (ahead_out, side_out)
            weighted_out = (
                ahead_out and self.bond_weighted(here, ahead),
                side_out and self.bond_weighted(here, side),
            )
        return SiteMove(
            t=t,
            present=present,
            in_edges=in_edges,
            out_edges=out_edges,
            exits=tuple(self.exits(t, l)),
            origin=present and t == 0 and l == 0,
            origin_steps=ORIGIN_STEPS[self.lattice],
            weighted_site=present and self.site_weighted(t, l),
            weighted_out=weighted_out,
            column=l,
        )

    def column_sites(self, l: int) -> tuple[SiteMove, ...]:
        return tuple(self.site_move(t, l) for t in range(self.T + 1))


def column_stream(spec: StripSpec) -> Iterator[tuple[int, tuple[SiteMove, ...]]]:
    """
    Ordered per-site move descriptors for the whole sweep.

    Yields ``(l, sites)`` for every column along the strip, ``sites`` being
    the T+1 descriptors in sweep order (t = 0..T). Deterministic: equal
    specs give equal streams.
    """
    geometry = StripGeometry(spec)
    for l in geometry.column_range:
        yield l, geometry.column_sites(l)
