"""
Sequence extrapolation for finite-width estimates.

All tables are built at analysis precision (mpmath, 50 digits by default).
Column 0 of every table is the input sequence; entry ``entries[k][i]`` is
the k-th order estimate built from terms ``i, i+1, ...``. Entries whose
recurrence would divide by a near-zero quantity are stored as ``None``.
"""

import logging
from enum import Enum
from typing import Optional, Sequence

import mpmath
from mpmath import mpf
from pydantic import BaseModel, ConfigDict, Field

from ..errors import ExtrapolationError

logger = logging.getLogger(__name__)

ANALYSIS_DPS = 50
NEAR_ZERO = mpf("1e-40")

Entries = list[list[Optional[mpf]]]


class Algorithm(str, Enum):
    BULIRSCH_STOER = "bulirsch-stoer"
    WYNN_EPSILON = "wynn-epsilon"
    LEVIN_U = "levin-u"
    BREZINSKI_THETA = "brezinski-theta"
    NEVILLE = "neville"
    BARBER_HAMER = "barber-hamer"


class ExtrapolationParams(BaseModel):
    """
    Tuning knobs shared by the algorithms.

    ``w`` is the exponent of the abscissae h = 1/T**w (Bulirsch-Stoer and
    Neville); ``theta`` the leading correction exponent for Barber-Hamer;
    ``widths`` the T label of each term (default 1, 2, ...).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    w: float = Field(default=1.0, gt=0)
    theta: float = Field(default=1.0, gt=0)
    widths: Optional[list[int]] = None
    threshold: float = Field(default=1e-40, gt=0)
    seed: str = Field(default="richardson", pattern="^(richardson|zero)$")
    dps: int = Field(default=ANALYSIS_DPS, ge=30)


class ExtrapolationTable(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    algorithm: Algorithm
    entries: Entries
    w: float = 1.0
    best: mpf
    spread: mpf
    best_column: int
    settled: mpf
    stability: mpf
    settled_column: int
    absent: int = 0

    def to_dict(self, digits: int = 20) -> dict:
        def fmt(v):
            return None if v is None else mpmath.nstr(v, digits)

        return {
            "algorithm": self.algorithm.value,
            "w": self.w,
            "best": fmt(self.best),
            "spread": mpmath.nstr(self.spread, 5),
            "best_column": self.best_column,
            "settled": fmt(self.settled),
            "stability": mpmath.nstr(self.stability, 5),
            "settled_column": self.settled_column,
            "absent": self.absent,
            "entries": [[fmt(v) for v in column] for column in self.entries],
        }


class ConsensusReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    per_algorithm: dict[str, dict]
    consensus: mpf
    max_disagreement: mpf
    failed: dict[str, str] = Field(default_factory=dict)

    def to_dict(self, digits: int = 20) -> dict:
        return {
            "per_algorithm": self.per_algorithm,
            "consensus": mpmath.nstr(self.consensus, digits),
            "max_disagreement": mpmath.nstr(self.max_disagreement, 5),
            "failed": self.failed,
        }


# ---------------------------------------------------------------------------
# Recurrences
# ---------------------------------------------------------------------------


def _small(value: mpf, scale: mpf, threshold: mpf) -> bool:
    return abs(value) <= threshold * scale


def _abscissae(n: int, params: ExtrapolationParams) -> list[mpf]:
    widths = params.widths or list(range(1, n + 1))
    if len(widths) != n:
        raise ExtrapolationError(f"{len(widths)} widths given for {n} terms")
    if any(T <= 0 for T in widths):
        raise ExtrapolationError("widths must be positive for h = 1/T**w")
    w = mpf(params.w)
    return [1 / mpf(T) ** w for T in widths]


def bulirsch_stoer(seq: Sequence[mpf], params: ExtrapolationParams) -> Entries:
    """
    Rational extrapolation in h = 1/T**w.

    With the default ``richardson`` seed the column before the input is
    taken at infinity, so the first step is linear extrapolation in h and
    the table commutes with constant shifts; ``zero`` seeds it with 0.
    """
    n = len(seq)
    h = _abscissae(n, params)
    threshold = mpf(params.threshold)
    scale = max(max(abs(s) for s in seq), mpf(1))
    prev2: list[Optional[mpf]] = [None] * (n + 1)  # None stands for the infinite seed
    if params.seed == "zero":
        prev2 = [mpf(0)] * (n + 1)
    entries: Entries = [list(seq)]
    for k in range(1, n):
        prev = entries[-1]
        column: list[Optional[mpf]] = []
        for i in range(n - k):
            lo, hi = prev[i], prev[i + 1]
            if lo is None or hi is None:
                column.append(None)
                continue
            diff = hi - lo
            if _small(diff, scale, threshold):
                column.append(hi)  # converged
                continue
            below = prev2[i + 1]
            if below is None:
                bracket = mpf(1)
            else:
                inner = hi - below
                if _small(inner, scale, threshold):
                    column.append(None)
                    continue
                bracket = 1 - diff / inner
            denominator = (h[i] / h[i + k]) * bracket - 1
            if _small(denominator, mpf(1), threshold):
                column.append(None)
                continue
            column.append(hi + diff / denominator)
        prev2 = prev
        entries.append(column)
    return entries


def neville(seq: Sequence[mpf], params: ExtrapolationParams) -> Entries:
    """Polynomial extrapolation to h = 0 through successive (h, s) points."""
    n = len(seq)
    h = _abscissae(n, params)
    entries: Entries = [list(seq)]
    for k in range(1, n):
        prev = entries[-1]
        column = []
        for i in range(n - k):
            a, b = prev[i], prev[i + 1]
            if a is None or b is None:
                column.append(None)
                continue
            column.append((h[i] * b - h[i + k] * a) / (h[i] - h[i + k]))
        entries.append(column)
    return entries


def wynn_epsilon(seq: Sequence[mpf], params: ExtrapolationParams) -> Entries:
    """
    Wynn's epsilon algorithm; the even columns are returned.

    Unlike ``mpmath.shanks``, a breakdown marks the affected entries absent
    and the rest of the table is still filled.
    """
    n = len(seq)
    threshold = mpf(params.threshold)
    scale = max(max(abs(s) for s in seq), mpf(1))
    older: list[Optional[mpf]] = [mpf(0)] * (n + 1)
    current: list[Optional[mpf]] = list(seq)
    evens: Entries = [list(seq)]
    for k in range(1, n):
        column: list[Optional[mpf]] = []
        for i in range(n - k):
            a, b, c = current[i], current[i + 1], older[i + 1]
            if a is None or b is None or c is None:
                column.append(None)
                continue
            diff = b - a
            if diff == 0 or _small(diff, scale, threshold):
                column.append(None)
                continue
            column.append(c + 1 / diff)
        older, current = current, column
        if k % 2 == 0:
            evens.append(column)
    return evens


def levin_u(seq: Sequence[mpf], params: ExtrapolationParams) -> Entries:
    """
    Levin's u-transform via ``mpmath.levin`` on the partial sums s_i, s_i+1, ...

    A zero weight (two equal consecutive terms) ends that start's diagonal.
    """
    n = len(seq)
    entries: Entries = [list(seq)] + [[None] * (n - k) for k in range(1, n)]
    for i in range(n - 1):
        transform = mpmath.levin(method="levin", variant="u")
        for k in range(n - i):
            try:
                value, _ = transform.update_psum(list(seq[i:i + k + 1]))
            except (ValueError, ZeroDivisionError):
                break
            if k > 0:
                entries[k][i] = value if mpmath.isfinite(value) else None
    return entries


def brezinski_theta(seq: Sequence[mpf], params: ExtrapolationParams) -> Entries:
    """Brezinski's theta algorithm; the even columns are returned."""
    n = len(seq)
    threshold = mpf(params.threshold)
    scale = max(max(abs(s) for s in seq), mpf(1))
    minus1: list[Optional[mpf]] = [mpf(0)] * (n + 1)
    even: list[Optional[mpf]] = list(seq)
    evens: Entries = [list(seq)]

    def delta(col, i):
        if col[i] is None or col[i + 1] is None:
            return None
        return col[i + 1] - col[i]

    while len(even) >= 4:
        odd: list[Optional[mpf]] = []
        for i in range(len(even) - 1):
            d = delta(even, i)
            if d is None or minus1[i + 1] is None or _small(d, scale, threshold):
                odd.append(None)
            else:
                odd.append(minus1[i + 1] + 1 / d)
        nxt: list[Optional[mpf]] = []
        for i in range(len(even) - 3):
            d_even = delta(even, i + 1)
            d_odd = delta(odd, i + 1)
            if d_even is None or d_odd is None or odd[i] is None:
                nxt.append(None)
                continue
            second = odd[i + 2] - 2 * odd[i + 1] + odd[i]
            if _small(second, scale, threshold):
                nxt.append(None)
                continue
            nxt.append(even[i + 1] + d_even * d_odd / second)
        minus1, even = odd, nxt
        evens.append(nxt)
    return evens


def barber_hamer(seq: Sequence[mpf], params: ExtrapolationParams) -> Entries:
    """
    Iterated Aitken process modified for power-law corrections.

    A step with exponent theta is exact on s + a/T**theta when theta = 1 and
    also removes the next correction at leading order, so iteration k uses
    theta + 2k.
    """
    n = len(seq)
    threshold = mpf(params.threshold)
    scale = max(max(abs(s) for s in seq), mpf(1))
    entries: Entries = [list(seq)]
    k = 0
    while len(entries[-1]) >= 3:
        prev = entries[-1]
        factor = 1 + 1 / (mpf(params.theta) + 2 * k)
        column: list[Optional[mpf]] = []
        for i in range(len(prev) - 2):
            a, b, c = prev[i], prev[i + 1], prev[i + 2]
            if a is None or b is None or c is None:
                column.append(None)
                continue
            left, right = b - a, c - b
            denominator = left - right
            if _small(left, scale, threshold) and _small(right, scale, threshold):
                column.append(c)  # converged
                continue
            if _small(denominator, scale, threshold):
                column.append(None)
                continue
            column.append(b + factor * left * right / denominator)
        entries.append(column)
        k += 1
    return entries


_ALGORITHMS = {
    Algorithm.BULIRSCH_STOER: bulirsch_stoer,
    Algorithm.NEVILLE: neville,
    Algorithm.WYNN_EPSILON: wynn_epsilon,
    Algorithm.LEVIN_U: levin_u,
    Algorithm.BREZINSKI_THETA: brezinski_theta,
    Algorithm.BARBER_HAMER: barber_hamer,
}


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def _summarise(entries: Entries) -> tuple[mpf, mpf, int]:
    """best = last valid entry of the highest column holding one; spread over the final two such columns."""
    valid_columns = [k for k, column in enumerate(entries) if any(v is not None for v in column)]
    if not valid_columns:
        raise ExtrapolationError("every entry of the table is absent")
    top = valid_columns[-1]
    best = [v for v in entries[top] if v is not None][-1]
    pool = [v for k in valid_columns[-2:] for v in entries[k] if v is not None]
    spread = max(pool) - min(pool) if len(pool) > 1 else mpf(0)
    return best, spread, top


def _settle(entries: Entries) -> Optional[tuple[mpf, mpf, int]]:
    """
    Most stable column: among columns k >= 1 whose last two entries are both
    valid, the one where they differ least (ties go to the deeper column).
    Returns (last entry, |last - second last|, k), or None.
    """
    chosen = None
    for k, column in enumerate(entries[1:], start=1):
        if len(column) < 2 or column[-1] is None or column[-2] is None:
            continue
        change = abs(column[-1] - column[-2])
        if chosen is None or change <= chosen[1]:
            chosen = (column[-1], change, k)
    return chosen


def accelerate(
    seq: Sequence,
    algorithm: Algorithm | str = Algorithm.BULIRSCH_STOER,
    params: Optional[ExtrapolationParams] = None,
) -> ExtrapolationTable:
    """
    Build one algorithm's table for a sequence of finite-width estimates.

    Raises:
        ExtrapolationError: fewer than three terms, or no valid entry
    """
    params = params or ExtrapolationParams()
    algorithm = Algorithm(algorithm)
    if len(seq) < 3:
        raise ExtrapolationError(f"need at least 3 terms, got {len(seq)}")
    with mpmath.workdps(params.dps):
        values = [mpf(s) for s in seq]
        entries = _ALGORITHMS[algorithm](values, params)
        best, spread, top = _summarise(entries)
        settled, stability, settled_column = _settle(entries) or (best, spread, top)
    absent = sum(1 for column in entries for v in column if v is None)
    if absent:
        logger.warning(f"{algorithm.value}: {absent} table entries absent (near-zero denominators)")
    logger.debug(
        f"{algorithm.value}: best {mpmath.nstr(best, 15)} from column {top}, "
        f"settled {mpmath.nstr(settled, 15)} in column {settled_column}"
    )
    return ExtrapolationTable(
        algorithm=algorithm,
        entries=entries,
        w=params.w,
        best=best,
        spread=spread,
        best_column=top,
        settled=settled,
        stability=stability,
        settled_column=settled_column,
        absent=absent,
    )


def estimate_limit(
    seq: Sequence,
    algorithms: Optional[Sequence[Algorithm | str]] = None,
    params: Optional[ExtrapolationParams] = None,
) -> ConsensusReport:
    """
    Run several algorithms and report their agreement.

    The consensus is the mean of the per-algorithm settled values weighted by
    1/stability**2, with stabilities floored at ``threshold`` times the
    sequence scale.

    Raises:
        ExtrapolationError: fewer than two algorithms produced a table
    """
    algorithms = [Algorithm(a) for a in (algorithms or list(Algorithm))]
    per_algorithm: dict[str, dict] = {}
    tables: list[ExtrapolationTable] = []
    failed: dict[str, str] = {}
    params = params or ExtrapolationParams()
    for algorithm in algorithms:
        try:
            table = accelerate(seq, algorithm, params)
        except ExtrapolationError as e:
            failed[algorithm.value] = str(e)
            logger.warning(f"{algorithm.value} failed: {e}")
            continue
        tables.append(table)
        per_algorithm[algorithm.value] = {
            "best": mpmath.nstr(table.best, 20),
            "spread": mpmath.nstr(table.spread, 5),
            "best_column": table.best_column,
            "settled": mpmath.nstr(table.settled, 20),
            "stability": mpmath.nstr(table.stability, 5),
            "settled_column": table.settled_column,
        }
    if len(tables) < 2:
        raise ExtrapolationError("fewer than two algorithms produced a valid table")
    with mpmath.workdps(params.dps):
        floor = mpf(params.threshold) * max(max(abs(mpf(s)) for s in seq), mpf(1))
        weights = [1 / max(t.stability, floor) ** 2 for t in tables]
        settled = [t.settled for t in tables]
        consensus = mpmath.fsum(w * s for w, s in zip(weights, settled)) / mpmath.fsum(weights)
        disagreement = max(settled) - min(settled)
    logger.info(
        f"Consensus {mpmath.nstr(consensus, 12)} over {len(tables)} algorithms "
        f"(max disagreement {mpmath.nstr(disagreement, 3)})"
    )
    return ConsensusReport(
        per_algorithm=per_algorithm,
        consensus=consensus,
        max_disagreement=disagreement,
        failed=failed,
    )
