"""
Slow reproductions of published values; run with ``pytest --run-acceptance``.
"""

from functools import lru_cache

import mpmath
import numpy as np
import pytest
from mpmath import mpf

from sawstrip.analysis import reference
from sawstrip.analysis.crossing import crossing_sequence, default_bracket, monotone_direction, solve_level
from sawstrip.analysis.extrapolation import ExtrapolationParams, estimate_limit
from sawstrip.core.geometry import LatticeKind, StripSpec, WeightingMode
from sawstrip.core.transfer import build_A

pytestmark = pytest.mark.acceptance

NARROW_WIDTHS = [1, 2, 3, 4]


@lru_cache(maxsize=None)
def series(lattice, mode, T, L=1000, M=1000):
    return build_A(StripSpec(lattice=lattice, width_T=T, half_length_L=L, mode=mode, trunc_M=M)).A


def crossings(lattice, mode, widths, L=1000, M=1000):
    needed = sorted(set(widths) | {T + 1 for T in widths})
    estimates = crossing_sequence({T: series(lattice, mode, T, L, M) for T in needed}, lattice)
    return {e.T: e for e in estimates}


def window(text: str) -> mpf:
    """Five units of the last quoted digit."""
    decimals = len(text.split(".", 1)[1]) if "." in text else 0
    return 5 * mpf(10) ** -decimals


@pytest.mark.parametrize("T", NARROW_WIDTHS)
@pytest.mark.parametrize("dataset", list(reference.CROSSING_DATASETS))
def test_narrow_strips_match_published_rows(dataset, T):
    lattice, mode = reference.CROSSING_DATASETS[dataset]
    published = {row.T: row for row in reference.crossing_table(dataset)}
    computed = crossings(lattice, mode, [T])[T]
    assert reference.agreeing_digits(computed.y_cross, published[T].y_c) >= 12, dataset
    assert reference.agreeing_digits(computed.A_at_cross, published[T].A) >= 12, dataset


@pytest.mark.parametrize("dataset", list(reference.CROSSING_DATASETS))
def test_crossings_are_monotone(dataset):
    lattice, mode = reference.CROSSING_DATASETS[dataset]
    published = [mpf(row.y_c) for row in reference.crossing_table(dataset)]
    computed = crossings(lattice, mode, NARROW_WIDTHS)
    direction = monotone_direction([computed[T].y_cross for T in NARROW_WIDTHS])
    assert direction in ("increasing", "decreasing")
    assert direction == monotone_direction(published)


@pytest.mark.parametrize("M, L", [(100, 100), (100, 200)])
def test_convergence_cell(M, L):
    published = reference.convergence_cell(M, L)
    T = reference.CONVERGENCE_WIDTH
    computed = crossings(LatticeKind.SQUARE, WeightingMode.ALL_SITE, [T], L=L, M=M)[T]
    assert reference.agreeing_digits(computed.y_cross, published.y_c) >= 10


@pytest.mark.parametrize("T", [0, 1, 2, 3])
def test_alternate_site_strips_solve_the_exact_level(T):
    A = series(LatticeKind.HONEYCOMB, WeightingMode.ALTERNATE_SITE, T)
    level = 1 / mpmath.cos(3 * mpmath.pi / 8)
    y = solve_level(A, level, default_bracket(LatticeKind.HONEYCOMB))
    assert abs(y - (1 + mpmath.sqrt(2))) < mpf("1e-8")


@pytest.mark.parametrize("dataset", list(reference.CROSSING_DATASETS))
def test_published_sequences_extrapolate_to_headline(dataset):
    lattice, mode = reference.CROSSING_DATASETS[dataset]
    rows = reference.crossing_table(dataset)
    params = ExtrapolationParams(widths=[row.T for row in rows])
    report = estimate_limit([mpf(row.y_c) for row in rows], params=params)
    best = reference.headline(lattice, mode)
    assert abs(report.consensus - best.y_c) <= window(best.y_c_text), mpmath.nstr(report.consensus, 12)


def test_honeycomb_amplitude_extrapolates_to_headline():
    rows = reference.crossing_table("honeycomb-all-site")
    params = ExtrapolationParams(widths=[row.T for row in rows])
    report = estimate_limit([mpf(row.A) for row in rows], params=params)
    best = reference.headline(LatticeKind.HONEYCOMB, WeightingMode.ALL_SITE)
    assert abs(report.consensus - best.A) < mpf("5e-4")


def test_wide_strip_is_thread_independent():
    spec = StripSpec(lattice=LatticeKind.SQUARE, width_T=7, half_length_L=100, trunc_M=100)
    one = build_A(spec, threads=1).A
    many = build_A(spec, threads=8).A
    assert np.array_equal(one.hi, many.hi) and np.array_equal(one.lo, many.lo)
