from dataclasses import replace

import mpmath
import pytest
from mpmath import mpf

from sawstrip.analysis.identity import (
    RESIDUAL_TOL,
    HoneycombConstants,
    build_patch,
    build_patch_exhaustive,
    check_edge_site_maps,
    compare_edge_site,
    corollary_residual,
    default_grid,
    identity_residual,
    patch_residual_grid,
    patch_weighted_sites,
)
from sawstrip.core.geometry import LatticeKind, WeightingMode, critical_x
from sawstrip.core.poly import ContactPolynomial
from sawstrip.core.transfer import build_A
from sawstrip.errors import IdentityError

# every patch small enough for depth-first enumeration
SMALL_PATCHES = [(0, 1), (1, 1), (2, 1), (1, 2)]


class TestConstants:
    def test_closed_forms(self):
        deviations = HoneycombConstants.compute().check()
        assert all(d < mpf("1e-45") for d in deviations.values())

    def test_B_weight(self):
        constants = HoneycombConstants.compute()
        assert abs(constants.B_weight(constants.y_star)) < mpf("1e-45")
        assert abs(constants.B_weight(1) - 1) < mpf("1e-45")

    def test_grid(self):
        grid = default_grid(4)
        assert grid == [mpf(3) / 4, mpf(3) / 2, mpf(9) / 4, mpf(3)]


class TestSmallestPatch:
    def test_series(self):
        patch = build_patch_exhaustive(0, 1)
        x2 = critical_x(LatticeKind.HONEYCOMB) ** 2
        assert patch.A.is_zero()
        assert abs(patch.B[1] - 2 * x2) < mpf("1e-30") and patch.B[0] == 0
        assert abs(patch.E[1] - 2 * x2) < mpf("1e-30")
        assert patch_weighted_sites(0, 1) == 2

    @pytest.mark.parametrize("y", ["0.1", "1", "2.4142", "7"])
    def test_identity_holds_everywhere(self, y):
        assert identity_residual(build_patch_exhaustive(0, 1), y) < RESIDUAL_TOL


class TestPatchIdentity:
    @pytest.mark.parametrize("T, L", SMALL_PATCHES)
    def test_exhaustive_patches(self, T, L):
        report = patch_residual_grid(build_patch_exhaustive(T, L))
        assert report.passed, report.max_residual
        assert len(report.rows) == 16

    @pytest.mark.parametrize("T, L", SMALL_PATCHES)
    def test_sweep_matches_enumeration(self, T, L):
        swept = build_patch(T, L, threads=1)
        exhaustive = build_patch_exhaustive(T, L)
        for name in ("A", "B", "E"):
            assert getattr(swept, name).max_deviation(getattr(exhaustive, name)) < mpf("1e-28"), name

    @pytest.mark.parametrize("T, L", [(2, 2), (3, 2), (3, 3), (4, 2)])
    def test_swept_patches(self, T, L):
        patch = build_patch(T, L, threads=1)
        assert patch_residual_grid(patch).passed
        assert corollary_residual(patch) < RESIDUAL_TOL

    def test_off_critical_patch(self):
        patch = build_patch(1, 1, x="0.5", threads=1)
        with pytest.raises(IdentityError):
            identity_residual(patch, 1)
        with pytest.raises(IdentityError):
            corollary_residual(patch)

    @pytest.mark.parametrize("y", [0, -1])
    def test_needs_positive_y(self, y):
        with pytest.raises(IdentityError):
            identity_residual(build_patch_exhaustive(0, 1), y)

    def test_failed_report(self):
        patch = build_patch_exhaustive(1, 1)
        nudge = ContactPolynomial.monomial(0, mpf("1e-5"), patch.B.trunc_M)
        patch = replace(patch, B=patch.B.copy().axpy_shift(nudge, 1))
        report = patch_residual_grid(patch, ys=[1, 2])
        assert not report.passed
        assert [mpf(row.y) for row in report.rows] == [1, 2]


class TestEdgeSiteMaps:
    @pytest.mark.parametrize("T", [0, 1, 2, 3])
    def test_strip_maps_hold(self, T):
        report = check_edge_site_maps(T, half_length_L=12, trunc_M=16, threads=1)
        assert report.passed, (report.A_max_deviation, report.B_max_deviation)
        assert report.trunc_M == 16

    def test_perturbed_series_fail(self, strip):
        alternate = build_A(strip("honeycomb", 1, L=8, mode=WeightingMode.ALTERNATE_SITE, M=10), with_b=True, threads=1)
        edge = build_A(strip("honeycomb", 1, L=8, mode=WeightingMode.EDGE, M=10), with_b=True, threads=1)
        assert compare_edge_site(alternate.A, alternate.B, edge.A, edge.B).passed
        bumped = edge.A.copy().axpy_shift(ContactPolynomial.monomial(4, mpmath.mpf("1e-10"), 10), 1)
        assert not compare_edge_site(alternate.A, alternate.B, bumped, edge.B).passed
