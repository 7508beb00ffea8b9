"""
Honeycomb identities relating the A, B and E generating functions.

On a finite patch at x = x_c the three classes satisfy

    1 = cos(3pi/8) A(y) + cos(pi/4) E(y) + (y* - y) / (y (y* - 1)) B(y)

for every y > 0, with y* = 1 + sqrt(2). On strips the edge-weighted series
are the alternate-site series with y -> y**2 (A) and y -> y**2 divided by y
(B). This module builds the series and measures how well both hold.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import mpmath
from mpmath import mpf
from pydantic import BaseModel, ConfigDict, Field

from ..core.geometry import (
    LatticeKind,
    Shape,
    StripGeometry,
    StripSpec,
    WalkClass,
    WeightingMode,
    critical_x,
)
from ..core.oracle import enumerate_classes
from ..core.poly import ContactPolynomial
from ..core.transfer import build_A
from ..errors import IdentityError

logger = logging.getLogger(__name__)

ANALYSIS_DPS = 50
RESIDUAL_TOL = mpf("1e-25")
GRID_POINTS = 16
SCHEMA_VERSION = 1


class HoneycombConstants(BaseModel):
    """Critical-point constants entering the identity."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x_c: mpf
    y_star: mpf
    c_A: mpf
    c_E: mpf

    @classmethod
    def compute(cls, dps: int = ANALYSIS_DPS) -> "HoneycombConstants":
        with mpmath.workdps(dps + 10):
            return cls(
                x_c=critical_x(LatticeKind.HONEYCOMB),
                y_star=1 + 1 / mpmath.cos(mpmath.pi / 4),
                c_A=mpmath.cos(3 * mpmath.pi / 8),
                c_E=mpmath.cos(mpmath.pi / 4),
            )

    def B_weight(self, y) -> mpf:
        y = mpf(y)
        return (self.y_star - y) / (y * (self.y_star - 1))

    def check(self) -> dict:
        """Deviations of the two closed-form relations between x_c and y*."""
        x2 = self.x_c**2
        return {
            "y_star_x_c_squared": abs(self.y_star * x2 - 1 / mpmath.sqrt(2)),
            "y_star_from_x_c": abs(self.y_star - 1 / (1 - 2 * x2)),
        }


@dataclass(frozen=True)
class PatchSeries:
    """A, B and E of the patch S_{T,L} at one step fugacity."""

    T: int
    L: int
    x: mpf
    A: ContactPolynomial
    B: ContactPolynomial
    E: ContactPolynomial


class ResidualRow(BaseModel):
    y: str
    residual: str


class IdentityReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    T: int
    L: int
    rows: list[ResidualRow]
    max_residual: str
    corollary_residual: str
    passed: bool


class MapCheckReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    T: int
    half_length_L: int
    trunc_M: int
    A_max_deviation: str
    B_max_deviation: str
    passed: bool
    tolerance: str = Field(default=mpmath.nstr(RESIDUAL_TOL, 3))


def patch_weighted_sites(T: int, L: int) -> int:
    """Number of weighted (beta-side) sites of the patch S_{T,L}."""
    spec = StripSpec(
        lattice=LatticeKind.HONEYCOMB, width_T=T, half_length_L=L,
        mode=WeightingMode.ALTERNATE_SITE, shape=Shape.PATCH,
    )
    geometry = StripGeometry(spec)
    return sum(1 for l in geometry.column_range if geometry.has_vertex(T, l) and geometry.site_weighted(T, l))


def build_patch(
    T: int,
    L: int,
    x=None,
    trunc_M: Optional[int] = None,
    threads: Optional[int] = None,
    working_digits: int = 31,
    budget_mb: Optional[float] = None,
) -> PatchSeries:
    """
    A, B, E of the honeycomb patch S_{T,L} by a transfer-matrix sweep.

    The default trunc_M keeps every contact count the patch allows, so the
    series are complete rather than truncated.
    """
    if trunc_M is None:
        trunc_M = max(1, patch_weighted_sites(T, L))
    spec = StripSpec(
        lattice=LatticeKind.HONEYCOMB,
        width_T=T,
        half_length_L=L,
        mode=WeightingMode.ALTERNATE_SITE,
        trunc_M=trunc_M,
        x=x,
        shape=Shape.PATCH,
    )
    result = build_A(spec, threads=threads, working_digits=working_digits, budget_mb=budget_mb)
    return PatchSeries(T=T, L=L, x=spec.step_fugacity, A=result.A, B=result.B, E=result.E)


def build_patch_exhaustive(T: int, L: int, x=None) -> PatchSeries:
    """The same series from depth-first enumeration; only for tiny patches."""
    spec = StripSpec(
        lattice=LatticeKind.HONEYCOMB, width_T=T, half_length_L=L,
        mode=WeightingMode.ALTERNATE_SITE, x=x, shape=Shape.PATCH,
    )
    geometry = StripGeometry(spec)
    n_vertices = sum(
        1 for l in geometry.column_range for t in range(T + 1) if geometry.has_vertex(t, l)
    )
    tables = enumerate_classes(spec, n_vertices)
    trunc_M = max(1, patch_weighted_sites(T, L))
    step = spec.step_fugacity

    def series(walk_class: WalkClass) -> ContactPolynomial:
        counts = tables[walk_class].counts
        with mpmath.workdps(ANALYSIS_DPS):
            coeffs = [
                mpmath.fsum(int(counts[n, m]) * step**n for n in range(counts.shape[0]) if counts[n, m])
                for m in range(trunc_M + 1)
            ]
        return ContactPolynomial.from_coefficients(coeffs, trunc_M)

    return PatchSeries(
        T=T, L=L, x=step,
        A=series(WalkClass.A), B=series(WalkClass.B), E=series(WalkClass.E),
    )


def _require_critical(patch: PatchSeries, constants: HoneycombConstants) -> None:
    if abs(mpf(patch.x) - constants.x_c) > mpf("1e-30"):
        raise IdentityError(
            f"patch built at x={mpmath.nstr(patch.x, 12)}, the identity holds at x_c"
        )


def identity_residual(
    patch: PatchSeries, y, constants: Optional[HoneycombConstants] = None
) -> mpf:
    """|1 - cos(3pi/8) A - cos(pi/4) E - B_weight(y) B| at one y > 0."""
    constants = constants or HoneycombConstants.compute()
    _require_critical(patch, constants)
    with mpmath.workdps(ANALYSIS_DPS):
        y = mpf(y)
        if y <= 0:
            raise IdentityError("the identity is evaluated at y > 0")
        total = (
            constants.c_A * patch.A.eval(y)
            + constants.c_E * patch.E.eval(y)
            + constants.B_weight(y) * patch.B.eval(y)
        )
        return abs(1 - total)


def corollary_residual(patch: PatchSeries, constants: Optional[HoneycombConstants] = None) -> mpf:
    """Residual at y = y*, where the B term drops out."""
    constants = constants or HoneycombConstants.compute()
    _require_critical(patch, constants)
    with mpmath.workdps(ANALYSIS_DPS):
        y = constants.y_star
        return abs(1 - constants.c_A * patch.A.eval(y) - constants.c_E * patch.E.eval(y))


def default_grid(points: int = GRID_POINTS) -> list[mpf]:
    """Evenly spaced y in (0, 3]."""
    return [3 * mpf(k) / points for k in range(1, points + 1)]


def patch_residual_grid(
    patch: PatchSeries,
    ys: Optional[Sequence] = None,
    tol=RESIDUAL_TOL,
) -> IdentityReport:
    constants = HoneycombConstants.compute()
    ys = list(ys) if ys is not None else default_grid()
    residuals = [identity_residual(patch, y, constants) for y in ys]
    corollary = corollary_residual(patch, constants)
    worst = max(residuals + [corollary])
    passed = worst <= mpf(tol)
    if not passed:
        logger.warning(
            f"Identity residual {mpmath.nstr(worst, 5)} on S_{{{patch.T},{patch.L}}} exceeds {tol}"
        )
    return IdentityReport(
        T=patch.T,
        L=patch.L,
        rows=[
            ResidualRow(y=mpmath.nstr(y, 10), residual=mpmath.nstr(r, 5))
            for y, r in zip(ys, residuals)
        ],
        max_residual=mpmath.nstr(max(residuals), 5),
        corollary_residual=mpmath.nstr(corollary, 5),
        passed=passed,
    )


def check_edge_site_maps(
    T: int,
    half_length_L: int = 250,
    trunc_M: int = 250,
    threads: Optional[int] = None,
    tol=RESIDUAL_TOL,
) -> MapCheckReport:
    """
    Compare edge-weighted strip series with the mapped alternate-site ones.

    A_e(y) = A_a(y**2) and B_e(y) = B_a(y**2) / y coefficient-wise.
    """
    common = dict(lattice=LatticeKind.HONEYCOMB, width_T=T, half_length_L=half_length_L, trunc_M=trunc_M)
    alternate = build_A(StripSpec(mode=WeightingMode.ALTERNATE_SITE, **common), with_b=True, threads=threads)
    edge = build_A(StripSpec(mode=WeightingMode.EDGE, **common), with_b=True, threads=threads)
    return compare_edge_site(alternate.A, alternate.B, edge.A, edge.B, T, half_length_L, tol)


def compare_edge_site(
    A_a: ContactPolynomial,
    B_a: ContactPolynomial,
    A_e: ContactPolynomial,
    B_e: ContactPolynomial,
    T: int = 0,
    half_length_L: int = 0,
    tol=RESIDUAL_TOL,
) -> MapCheckReport:
    M = A_e.trunc_M
    mapped_A = A_a.compose_square().truncate(M)
    mapped_B = B_a.compose_square().scale_div_y().truncate(M)
    with mpmath.workdps(ANALYSIS_DPS):
        dev_A = A_e.max_deviation(mapped_A)
        dev_B = B_e.max_deviation(mapped_B)
    passed = max(dev_A, dev_B) <= mpf(tol)
    logger.info(
        f"Edge/alternate-site maps at T={T}: A deviation {mpmath.nstr(dev_A, 3)}, "
        f"B deviation {mpmath.nstr(dev_B, 3)}"
    )
    return MapCheckReport(
        T=T,
        half_length_L=half_length_L,
        trunc_M=M,
        A_max_deviation=mpmath.nstr(dev_A, 5),
        B_max_deviation=mpmath.nstr(dev_B, 5),
        passed=passed,
    )
