import mpmath
import numpy as np
import pytest
from mpmath import mpf

from sawstrip.core import transfer
from sawstrip.core.geometry import LatticeKind, StripGeometry, WalkClass, WeightingMode, critical_x
from sawstrip.core.oracle import enumerate_classes, enumerate_walks
from sawstrip.core.signature import SlotLayout, encode
from sawstrip.core.transfer import (
    StateMap,
    TransferEngine,
    build_A,
    build_two_variable,
    estimate_cost,
    payload_kind,
    rotate_codes,
    signature_bound,
)
from sawstrip.errors import (
    BudgetExceededError,
    CheckpointError,
    ConfigError,
    CountOverflowError,
    EngineError,
    WidthLimitError,
)

PAIRS = [
    (LatticeKind.HONEYCOMB, WeightingMode.ALTERNATE_SITE),
    (LatticeKind.HONEYCOMB, WeightingMode.ALL_SITE),
    (LatticeKind.HONEYCOMB, WeightingMode.EDGE),
    (LatticeKind.SQUARE, WeightingMode.ALL_SITE),
    (LatticeKind.SQUARE, WeightingMode.EDGE),
    (LatticeKind.TRIANGULAR, WeightingMode.ALL_SITE),
    (LatticeKind.TRIANGULAR, WeightingMode.EDGE),
]

# Oracle cost grows like mu**n; keep each lattice to a few seconds
MAX_STEPS = {LatticeKind.HONEYCOMB: 14, LatticeKind.SQUARE: 12, LatticeKind.TRIANGULAR: 8}


def close(a, b, rel=mpf("1e-28")):
    return abs(mpf(a) - mpf(b)) <= rel * max(abs(mpf(a)), abs(mpf(b)), mpf("1e-300"))


def vertex_count(spec) -> int:
    geometry = StripGeometry(spec)
    return sum(
        1 for l in geometry.column_range for t in range(spec.width_T + 1) if geometry.has_vertex(t, l)
    )


class TestPayload:
    @pytest.mark.parametrize("digits, kind", [(1, "float"), (15, "float"), (16, "dd"), (31, "dd")])
    def test_tiers(self, digits, kind):
        assert payload_kind(digits) == kind

    @pytest.mark.parametrize("digits", [0, 32, 50])
    def test_unavailable(self, digits):
        with pytest.raises(ConfigError):
            payload_kind(digits)

    def test_threads_from_environment(self, monkeypatch):
        monkeypatch.setenv("SAWSTRIP_THREADS", "3")
        assert transfer.default_threads() == 3
        monkeypatch.setenv("SAWSTRIP_THREADS", "many")
        assert transfer.default_threads() >= 1


class TestCostModel:
    def test_signature_bound_small(self):
        assert signature_bound(1) == 2
        assert signature_bound(2) == 5

    def test_estimate_grows_with_width(self, strip):
        narrow = estimate_cost(strip("square", 4))
        wide = estimate_cost(strip("square", 8))
        assert wide["signatures"] > 3 * narrow["signatures"]
        assert narrow["payload"] == "dd"
        assert estimate_cost(strip("square", 4), working_digits=15)["bytes"] * 2 == narrow["bytes"]

    def test_width_limit(self, strip):
        with pytest.raises(WidthLimitError):
            build_A(strip("square", 30))

    def test_budget_refused_before_building(self, strip):
        with pytest.raises(BudgetExceededError) as info:
            build_A(strip("square", 12, M=250), budget_mb=1)
        assert info.value.estimate["signatures"] > 0


class TestWidthZero:
    """The single-row strip, where every walk runs along the surface."""

    def test_honeycomb_alternate_site(self, strip):
        spec = strip("honeycomb", 0, L=20, mode=WeightingMode.ALTERNATE_SITE, M=10)
        result = build_A(spec, with_b=True, threads=1)
        x = critical_x(LatticeKind.HONEYCOMB)
        assert result.A[0] == 0
        for j in range(1, 11):
            assert close(result.A[j], 2 * x ** (2 * j + 1))
            assert close(result.B[j], 2 * x ** (2 * j))
        assert result.E is None

    def test_honeycomb_edge(self, strip):
        spec = strip("honeycomb", 0, L=20, mode=WeightingMode.EDGE, M=12)
        A = build_A(spec, threads=1).A
        x = critical_x(LatticeKind.HONEYCOMB)
        for m in range(13):
            expected = 2 * x ** (m + 1) if m >= 2 and m % 2 == 0 else 0
            assert close(A[m], expected) if expected else A[m] == 0

    def test_square_all_site(self, strip):
        spec = strip("square", 0, L=6, M=10)
        A = build_A(spec, threads=1).A
        x = critical_x(LatticeKind.SQUARE)
        for m in range(11):
            if 2 <= m <= 7:
                assert close(A[m], 2 * x**m)
            else:
                assert A[m] == 0

    def test_exact_counts(self, strip):
        spec = strip("honeycomb", 0, L=10, mode=WeightingMode.ALTERNATE_SITE)
        counts = build_two_variable(spec, 8)
        assert counts[3, 1] == counts[5, 2] == counts[7, 3] == 2
        assert counts.sum() == 6


class TestNormalization:
    def test_square_counts_vertices(self, strip):
        counts = build_two_variable(strip("square", 1, L=4), 2)
        assert counts[2, 0] == 2
        assert counts[:2].sum() == 0

    def test_triangular_counts_bonds(self, strip):
        counts = build_two_variable(strip("triangular", 1, L=4), 3)
        assert counts[1, 0] == 2
        assert counts[0].sum() == 0
        assert np.array_equal(counts, enumerate_walks(strip("triangular", 1, L=4), 3).as_array())

    def test_triangular_series_carries_no_half_step(self, strip):
        spec = strip("triangular", 1, L=4, M=6, x="0.5")
        counts = build_two_variable(spec, vertex_count(spec))
        A = build_A(spec, threads=1).A
        for m in range(7):
            expected = mpmath.fsum(int(counts[n, m]) * mpf("0.5") ** n for n in range(counts.shape[0]))
            assert abs(A[m] - expected) < mpf("1e-28")


class TestAgainstOracle:
    @pytest.mark.parametrize("lattice, mode", PAIRS)
    @pytest.mark.parametrize("T", [0, 1, 2, 3])
    def test_exact_counts_match(self, strip, lattice, mode, T):
        spec = strip(lattice, T, L=4, mode=mode)
        n_max = MAX_STEPS[lattice]
        assert enumerate_walks(spec, n_max) == build_two_variable(spec, n_max)

    @pytest.mark.parametrize("lattice, mode", PAIRS)
    def test_series_match_complete_enumeration(self, strip, lattice, mode):
        T = 2 if lattice == LatticeKind.HONEYCOMB else 1
        spec = strip(lattice, T, L=2, mode=mode, M=12, x="0.5")
        tables = enumerate_classes(spec, vertex_count(spec))
        result = build_A(spec, with_b=True, threads=1)
        for walk_class, series in ((WalkClass.A, result.A), (WalkClass.B, result.B)):
            table = tables[walk_class]
            for m in range(13):
                expected = mpmath.fsum(table[n, m] * mpf("0.5") ** n for n in range(table.n_max + 1))
                assert abs(series[m] - expected) < mpf("1e-28"), (walk_class, m)


class TestDeterminism:
    def test_thread_count_does_not_change_bits(self, strip, monkeypatch):
        monkeypatch.setattr(transfer, "MIN_CHUNK_ROWS", 1)
        spec = strip("square", 4, L=6, M=15)
        one = build_A(spec, threads=1).A
        many = build_A(spec, threads=4).A
        assert np.array_equal(one.hi, many.hi) and np.array_equal(one.lo, many.lo)

    def test_float_tier_agrees(self, strip):
        spec = strip("triangular", 2, L=6, M=10)
        dd = build_A(spec, threads=1).A
        fl = build_A(spec, working_digits=15, threads=1).A
        for m in range(11):
            assert close(fl[m], dd[m], mpf("1e-12"))

    def test_longer_strip_dominates(self, strip):
        short = build_A(strip("square", 2, L=3, M=8), threads=1).A
        long = build_A(strip("square", 2, L=6, M=8), threads=1).A
        assert all(long[m] >= short[m] - mpf("1e-28") for m in range(9))


class TestCheckpoint:
    def _partial(self, spec, path, columns_done):
        engine = TransferEngine(spec, threads=1)
        state = StateMap.initial(spec.trunc_M)
        columns = list(engine.geometry.column_range)
        for index in range(columns_done):
            for move in engine.geometry.column_sites(columns[index]):
                state = engine.sweep_site(state, move)
            state = engine.end_column(state)
        engine.save_checkpoint(path, state, columns_done)

    def test_resume_is_bit_identical(self, strip, tmp_path):
        spec = strip("square", 2, L=5, M=8)
        full = build_A(spec, threads=1)
        path = tmp_path / "run.ckpt"
        self._partial(spec, path, 6)
        resumed = build_A(spec, threads=1, checkpoint=path)
        assert resumed.A == full.A

    def test_checkpoint_for_other_build(self, strip, tmp_path):
        path = tmp_path / "run.ckpt"
        self._partial(strip("square", 2, L=5, M=8), path, 2)
        with pytest.raises(CheckpointError):
            build_A(strip("square", 2, L=5, M=9), threads=1, checkpoint=path)

    def test_not_a_checkpoint(self, strip, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"nothing to see")
        with pytest.raises(CheckpointError):
            build_A(strip("square", 1, L=3), threads=1, checkpoint=path)


class TestHelpers:
    def test_rotate_codes(self):
        layout = SlotLayout(4, 2)
        codes = np.array([encode([1, 2, 0, 0], 1, 4)], dtype=np.int64)
        assert rotate_codes(codes, layout)[0] == encode([0, 1, 2, 0], 1, 4)
        with pytest.raises(EngineError):
            rotate_codes(np.array([encode([0, 0, 1, 2], 0, 4)], dtype=np.int64), layout)

    def test_states_can_all_exceed_n_max(self, strip):
        counts = build_two_variable(strip("square", 1, L=4), 4)
        assert counts[2, 0] == counts[3, 0] == counts[4, 0] == counts[4, 2] == 2
        assert counts[4, 1] == 0
        assert build_two_variable(strip("square", 3, L=6), 1).sum() == 0

    def test_count_overflow_guard(self, strip):
        with pytest.raises(CountOverflowError):
            build_two_variable(strip("triangular", 1), 40)

    def test_series_csv(self, strip, tmp_path):
        result = build_A(strip("honeycomb", 0, L=6, mode="alternate-site", M=3), with_b=True, threads=1)
        text = result.to_csv(tmp_path / "series.csv")
        lines = text.splitlines()
        assert lines[0] == "index,A,B"
        assert len(lines) == 5
        assert (tmp_path / "series.csv").read_text() == text

    def test_state_map_prune(self):
        state = StateMap(
            np.array([1, 2], dtype=np.int64), np.array([[0.0, 0.0], [1.0, 0.0]]), np.zeros((2, 2))
        )
        assert state.prune() == 1
        assert state.codes.tolist() == [2]
        assert state.polynomial(2)[0] == 1
        assert state.polynomial(5).is_zero()
