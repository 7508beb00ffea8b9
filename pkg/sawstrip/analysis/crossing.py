"""
Crossings y_c(T) of successive strip generating functions.
"""

import logging
from typing import Callable, Mapping, Optional, Sequence

import mpmath
from mpmath import mpf
from pydantic import BaseModel, ConfigDict

from ..core.geometry import LatticeKind, connective_constant
from ..core.poly import ContactPolynomial
from ..errors import ConfigError, CrossingError

logger = logging.getLogger(__name__)

ANALYSIS_DPS = 50
DEFAULT_TOL = mpf("1e-20")
SCAN_SAMPLES = 64
MAX_ITERATIONS = 500
TABLE_DECIMALS = 15

Bracket = tuple[mpf, mpf]


class CrossingEstimate(BaseModel):
    """One row of a crossing table: (T, y_c(T), A_T(x_c, y_c(T)))."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    T: int
    y_cross: mpf
    A_at_cross: mpf
    bracket_used: tuple[mpf, mpf]
    iterations: int
    sign_changes: int = 1
    residual: mpf = mpf(0)  # |A_T - A_{T+1}| at the returned root

    def to_row(self, decimals: int = TABLE_DECIMALS) -> dict:
        return {
            "T": self.T,
            "y_c": fixed(self.y_cross, decimals),
            "A": fixed(self.A_at_cross, decimals),
        }


def fixed(value, decimals: int = TABLE_DECIMALS) -> str:
    """Fixed-point string with exactly ``decimals`` places, rounded to nearest."""
    with mpmath.workdps(decimals + 30):
        scaled = int(mpmath.nint(mpf(value) * mpf(10) ** decimals))
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled)).rjust(decimals + 1, "0")
    if decimals == 0:
        return f"{sign}{digits}"
    return f"{sign}{digits[:-decimals]}.{digits[-decimals:]}"


def default_bracket(lattice: LatticeKind) -> Bracket:
    """(1, mu**2): the rigorous bounds on the critical surface fugacity."""
    mu = connective_constant(lattice)
    return mpf(1), mu * mu


def scan_sign_changes(
    f: Callable[[mpf], mpf], bracket: Bracket, samples: int = SCAN_SAMPLES
) -> list[Bracket]:
    """Sub-intervals of a uniform grid over the bracket on which f changes sign."""
    lo, hi = mpf(bracket[0]), mpf(bracket[1])
    if not lo < hi:
        raise ConfigError(f"empty bracket ({lo}, {hi})")
    grid = [lo + (hi - lo) * k / samples for k in range(samples + 1)]
    values = [f(y) for y in grid]
    found = []
    for k in range(samples):
        a, b = values[k], values[k + 1]
        if a == 0:
            found.append((grid[k], grid[k]))
        elif a * b < 0:
            found.append((grid[k], grid[k + 1]))
    if values[-1] == 0:
        found.append((grid[-1], grid[-1]))
    return found


def _refine(f, lo: mpf, hi: mpf, tol: mpf) -> tuple[mpf, int]:
    """
    Bisection with interleaved secant steps.

    Every second step is a plain bisection, so the bracket at least halves
    each two iterations.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo, 0
    if fhi == 0:
        return hi, 0
    if flo * fhi > 0:
        raise CrossingError(f"no sign change on [{mpmath.nstr(lo, 12)}, {mpmath.nstr(hi, 12)}]")

    for iteration in range(1, MAX_ITERATIONS + 1):
        width = hi - lo
        if width <= tol:
            return (lo + hi) / 2, iteration - 1
        mid = (lo + hi) / 2
        if iteration % 2:
            trial = hi - fhi * width / (fhi - flo)
            # keep secant points away from the bracket ends
            if lo + width / 16 < trial < hi - width / 16:
                mid = trial
        fmid = f(mid)
        if fmid == 0:
            return mid, iteration
        if (fmid < 0) == (flo < 0):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    raise CrossingError(f"bracket refinement did not reach tol={tol} in {MAX_ITERATIONS} steps")


def _choose(changes: Sequence[Bracket], hint: Optional[mpf], what: str) -> Bracket:
    if not changes:
        raise CrossingError(f"no sign change of {what} in the bracket")
    if len(changes) > 1:
        spans = ", ".join(f"[{mpmath.nstr(a, 8)}, {mpmath.nstr(b, 8)}]" for a, b in changes)
        if hint is None:
            logger.warning(f"{len(changes)} sign changes of {what}: {spans}; using the highest")
            return changes[-1]
        chosen = min(changes, key=lambda ab: abs((ab[0] + ab[1]) / 2 - hint))
        logger.warning(
            f"{len(changes)} sign changes of {what}: {spans}; "
            f"using the one nearest {mpmath.nstr(hint, 10)}"
        )
        return chosen
    return changes[0]


def find_crossing(
    A_T: ContactPolynomial,
    A_T1: ContactPolynomial,
    bracket: Optional[Bracket] = None,
    tol=DEFAULT_TOL,
    lattice: Optional[LatticeKind] = None,
    hint: Optional[mpf] = None,
    T: int = 0,
    dps: int = ANALYSIS_DPS,
) -> CrossingEstimate:
    """
    Intersection of A_T(x, y) and A_{T+1}(x, y) in y.

    Args:
        A_T, A_T1: generating functions of widths T and T+1
        bracket: search interval; defaults to (1, mu**2) of ``lattice``
        tol: width of the final bracket
        hint: previous crossing, used to pick among several sign changes
        T: width label carried into the estimate
        dps: mpmath digits for the search

    Raises:
        CrossingError: no sign change in the bracket
    """
    if bracket is None:
        if lattice is None:
            raise ConfigError("find_crossing needs a bracket or a lattice for the default one")
        bracket = default_bracket(lattice)

    with mpmath.workdps(dps):
        lo, hi = mpf(bracket[0]), mpf(bracket[1])
        tol = mpf(tol)

        def diff(y):
            return A_T.eval(y) - A_T1.eval(y)

        changes = scan_sign_changes(diff, (lo, hi))
        sub = _choose(changes, hint, f"A_{T} - A_{T + 1}")
        root, iterations = _refine(diff, sub[0], sub[1], tol) if sub[0] != sub[1] else (sub[0], 0)
        a, b = A_T.eval(root), A_T1.eval(root)
        common = (a + b) / 2
        residual = abs(a - b)
        if residual > 10 * tol * max(abs(common), 1):
            logger.warning(
                f"Crossing residual {mpmath.nstr(residual, 5)} at T={T} "
                "exceeds the bracket tolerance"
            )

        estimate = CrossingEstimate(
            T=T,
            y_cross=+root,
            A_at_cross=+common,
            bracket_used=(lo, hi),
            iterations=iterations,
            sign_changes=len(changes),
            residual=+residual,
        )
    logger.info(
        f"y_c({T}) = {mpmath.nstr(estimate.y_cross, 16)}, "
        f"A = {mpmath.nstr(estimate.A_at_cross, 16)}"
    )
    return estimate


def solve_level(
    A_T: ContactPolynomial,
    level,
    bracket: Bracket,
    tol=DEFAULT_TOL,
    dps: int = ANALYSIS_DPS,
) -> mpf:
    """Root of A_T(x, y) = level inside the bracket."""
    with mpmath.workdps(dps):
        level = mpf(level)

        def gap(y):
            return A_T.eval(y) - level

        changes = scan_sign_changes(gap, (mpf(bracket[0]), mpf(bracket[1])))
        sub = _choose(changes, None, "A_T - level")
        if sub[0] == sub[1]:
            return +sub[0]
        root, _ = _refine(gap, sub[0], sub[1], mpf(tol))
        return +root


def crossing_sequence(
    series: Mapping[int, ContactPolynomial],
    lattice: LatticeKind,
    bracket: Optional[Bracket] = None,
    tol=DEFAULT_TOL,
    dps: int = ANALYSIS_DPS,
) -> list[CrossingEstimate]:
    """
    y_c(T) for every pair of consecutive widths present in ``series``.

    Each crossing uses the previous one as the hint for disambiguation.
    """
    widths = sorted(series)
    estimates: list[CrossingEstimate] = []
    hint = None
    for T in widths:
        if T + 1 not in series:
            continue
        estimate = find_crossing(
            series[T], series[T + 1], bracket=bracket, tol=tol,
            lattice=lattice, hint=hint, T=T, dps=dps,
        )
        estimates.append(estimate)
        hint = estimate.y_cross
    direction = monotone_direction([e.y_cross for e in estimates])
    if len(estimates) > 2 and direction is None:
        logger.warning("Crossing sequence is not monotone in T")
    return estimates


def monotone_direction(values: Sequence[mpf]) -> Optional[str]:
    """'increasing', 'decreasing', 'constant' or None for a non-monotone sequence."""
    steps = [b - a for a, b in zip(values, values[1:])]
    if all(s == 0 for s in steps):
        return "constant"
    if all(s >= 0 for s in steps):
        return "increasing"
    if all(s <= 0 for s in steps):
        return "decreasing"
    return None
