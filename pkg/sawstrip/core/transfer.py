"""
Transfer-matrix engine.

The boundary line is swept through the strip (or patch) one site at a time.
A StateMap holds every live signature with its ContactPolynomial; the rows
of one site step are compiled once into index arrays and reused for every
column that presents the same site descriptor to the same signature set, so
the steady state of a long strip runs entirely in numpy.

Accumulation order is fixed: contributions to one target are added in
increasing source order, one "round" per rank, and thread chunks within a
round write disjoint rows. Results are bit-identical for any thread count.
"""

import hashlib
import json
import logging
import math
import os
import struct
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from ..errors import (
    BudgetExceededError,
    CheckpointError,
    ConfigError,
    CountOverflowError,
    EngineError,
)
from .geometry import LatticeKind, Shape, SiteMove, StripGeometry, StripSpec, WalkClass
from .poly import ContactPolynomial, dd_add, dd_mul, dd_powers, dd_sum_rows
from .signature import COMPLETED, SlotLayout, Transition, is_valid, decode, site_transitions

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SAWSTRIP-CKPT\n"
CHECKPOINT_VERSION = 1

# Rows per thread chunk; smaller rounds run inline
MIN_CHUNK_ROWS = 4096
COMPILE_CACHE_SIZE = 256

# Per-step growth bound on walk counts, used for the integer overflow guard
_COUNT_GROWTH = {
    LatticeKind.HONEYCOMB: 2,
    LatticeKind.SQUARE: 3,
    LatticeKind.TRIANGULAR: 5,
}


def payload_kind(working_digits: int) -> str:
    """'float' up to 15 digits, 'dd' up to 31."""
    if working_digits < 1:
        raise ConfigError(f"working digits must be positive, got {working_digits}")
    if working_digits <= 15:
        return "float"
    if working_digits <= 31:
        return "dd"
    raise ConfigError(
        f"working precision of {working_digits} digits is not available "
        "(double-double carries 31)"
    )


def default_threads() -> int:
    env = os.getenv("SAWSTRIP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning(f"Ignoring non-integer SAWSTRIP_THREADS={env!r}")
    return os.cpu_count() or 1


def rotate_codes(codes: np.ndarray, layout: SlotLayout) -> np.ndarray:
    """Vectorised ``signature.rotate`` over an int64 code array."""
    shift = 2 * layout.step
    mask = np.int64(layout.slot_mask)
    top = (codes >> np.int64(2 * layout.n_slots - shift)) & np.int64((1 << shift) - 1)
    if np.any(top):
        raise EngineError("occupied slot pushed past the strip edge at column end")
    return ((codes << np.int64(shift)) & mask) | (codes & ~mask)


# ---------------------------------------------------------------------------
# State containers
# ---------------------------------------------------------------------------


@dataclass
class StateMap:
    """Signature -> ContactPolynomial, as sorted codes plus hi/lo coefficient rows."""

    codes: np.ndarray
    hi: np.ndarray
    lo: np.ndarray

    @classmethod
    def initial(cls, trunc_M: int) -> "StateMap":
        hi = np.zeros((1, trunc_M + 1))
        hi[0, 0] = 1.0
        return cls(np.zeros(1, dtype=np.int64), hi, np.zeros_like(hi))

    def __len__(self) -> int:
        return len(self.codes)

    @property
    def nbytes(self) -> int:
        return self.codes.nbytes + self.hi.nbytes + self.lo.nbytes

    def polynomial(self, code: int) -> ContactPolynomial:
        idx = int(np.searchsorted(self.codes, code))
        if idx >= len(self.codes) or self.codes[idx] != code:
            return ContactPolynomial.zeros(self.hi.shape[1] - 1)
        return ContactPolynomial(self.hi[idx].copy(), self.lo[idx].copy())

    def digest(self) -> bytes:
        return hashlib.blake2b(self.codes.tobytes(), digest_size=16).digest()

    def prune(self) -> int:
        """Drop signatures whose polynomial is identically zero; returns the count dropped."""
        keep = np.any(self.hi != 0, axis=1) | np.any(self.lo != 0, axis=1)
        dropped = int(len(keep) - keep.sum())
        if dropped:
            self.codes, self.hi, self.lo = self.codes[keep], self.hi[keep], self.lo[keep]
        return dropped


@dataclass
class CompiledStep:
    """Index form of one site step for a fixed input signature set."""

    out_codes: np.ndarray
    rounds: list  # [(src, tgt, n_class, m_shift)] with unique tgt per round
    completions: Dict[int, tuple]  # walk class -> (src, n_class, m_shift)
    n_transitions: int


@dataclass
class SeriesResult:
    """Generating functions of one build, immutable once returned."""

    spec: StripSpec
    A: ContactPolynomial
    B: Optional[ContactPolynomial] = None
    E: Optional[ContactPolynomial] = None
    stats: dict = field(default_factory=dict)

    def to_csv(self, target: Optional[Path | str] = None) -> str:
        columns = [("A", self.A)]
        if self.B is not None:
            columns.append(("B", self.B))
        if self.E is not None:
            columns.append(("E", self.E))
        lines = ["index," + ",".join(name for name, _ in columns)]
        per_column = [poly.to_csv().splitlines()[1:] for _, poly in columns]
        for k in range(len(self.A)):
            values = [rows[k].split(",", 1)[1] for rows in per_column]
            lines.append(f"{k}," + ",".join(values))
        text = "\n".join(lines) + "\n"
        if target is not None:
            Path(target).write_text(text)
        return text


# ---------------------------------------------------------------------------
# Cost model
# ---------------------------------------------------------------------------


def signature_bound(n_slots: int) -> int:
    """Number of slot strings with balanced arcs and at most two free ends."""
    ways = Counter({(0, 0): 1})
    for _ in range(n_slots):
        nxt: Counter = Counter()
        for (depth, free), count in ways.items():
            nxt[(depth, free)] += count
            nxt[(depth + 1, free)] += count
            if depth:
                nxt[(depth - 1, free)] += count
            if free < 2:
                nxt[(depth, free + 1)] += count
        ways = nxt
    return sum(count for (depth, _), count in ways.items() if depth == 0)


def estimate_cost(spec: StripSpec, working_digits: int = 31, with_b: bool = False) -> dict:
    """
    Upper estimate of live signatures and payload memory for one build.

    Grows like 3**T (4**T on the triangular lattice) through the slot count.
    """
    geometry = StripGeometry(spec)
    layout = SlotLayout(geometry.n_slots, geometry.slot_width)
    classes = _walk_classes(spec, with_b)
    signatures = signature_bound(layout.n_slots) * (1 + len(classes))
    words = 2 if payload_kind(working_digits) == "dd" else 1
    # source and target maps plus one gathered round
    payload = 3 * signatures * (spec.trunc_M + 1) * 8 * words
    return {
        "spec": spec.describe(),
        "n_slots": layout.n_slots,
        "signatures": signatures,
        "bytes": payload,
        "megabytes": round(payload / 2**20, 1),
        "payload": payload_kind(working_digits),
    }


def _walk_classes(spec: StripSpec, with_b: bool) -> frozenset[int]:
    if spec.shape == Shape.PATCH:
        return frozenset({WalkClass.A, WalkClass.B, WalkClass.E})
    if with_b:
        return frozenset({WalkClass.A, WalkClass.B})
    return frozenset({WalkClass.A})


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class TransferEngine:
    """
    One sweep of the boundary line through a strip or patch.

    Exclusive-use while ``run`` executes; the returned SeriesResult is
    independent of the engine.
    """

    def __init__(
        self,
        spec: StripSpec,
        with_b: bool = False,
        threads: Optional[int] = None,
        working_digits: int = 31,
        budget_mb: Optional[float] = None,
        validate: bool = False,
    ):
        self.spec = spec
        self.geometry = StripGeometry(spec)
        self.layout = SlotLayout(self.geometry.n_slots, self.geometry.slot_width)
        self.classes = _walk_classes(spec, with_b)
        self.with_b = with_b
        self.threads = threads or default_threads()
        self.payload = payload_kind(working_digits)
        self.working_digits = working_digits
        self.budget_mb = budget_mb
        self.validate = validate

        M = spec.trunc_M
        powers = dd_powers(spec.step_fugacity, 3)
        self._xpow_hi = np.array([p[0] for p in powers])
        self._xpow_lo = np.array([p[1] for p in powers]) if self.payload == "dd" else np.zeros(3)
        self._results = {c: (np.zeros(M + 1), np.zeros(M + 1)) for c in self.classes}

        self._transitions: Dict[SiteMove, Dict[int, list[Transition]]] = {}
        self._compiled: Dict[tuple, CompiledStep] = {}
        self._executor: Optional[ThreadPoolExecutor] = None
        self.stats = {"peak_signatures": 1, "compiles": 0, "pruned": 0}

    # -- arithmetic in the active payload ----------------------------------

    def _add(self, ahi, alo, bhi, blo):
        if self.payload == "dd":
            return dd_add(ahi, alo, bhi, blo)
        return ahi + bhi, alo

    def _mul(self, hi, lo, shi, slo):
        if self.payload == "dd":
            return dd_mul(hi, lo, shi, slo)
        return hi * shi, lo

    # -- compilation ---------------------------------------------------------

    def _site_transitions(self, move: SiteMove, code: int) -> list[Transition]:
        table = self._transitions.setdefault(move, {})
        found = table.get(code)
        if found is None:
            found = site_transitions(code, move, self.layout, self.classes)
            if self.validate:
                for tr in found:
                    if tr.target != COMPLETED and not is_valid(*decode(tr.target, self.layout.n_slots)):
                        raise EngineError(f"invalid signature {tr.target:#x} produced from {code:#x}")
            table[code] = found
        return found

    def compile_step(self, state: StateMap, move: SiteMove) -> CompiledStep:
        key = (move, len(state), state.digest())
        step = self._compiled.get(key)
        if step is not None:
            return step

        src, tgt_codes, n_cls, m_sh = [], [], [], []
        done: Dict[int, list] = {}
        for i, code in enumerate(state.codes.tolist()):
            for tr in self._site_transitions(move, code):
                if tr.target == COMPLETED:
                    done.setdefault(tr.walk_class, []).append((i, tr.event.new_edges, tr.event.new_contacts))
                else:
                    src.append(i)
                    tgt_codes.append(tr.target)
                    n_cls.append(tr.event.new_edges)
                    m_sh.append(tr.event.new_contacts)

        src_arr = np.array(src, dtype=np.int64)
        out_codes, tgt = np.unique(np.array(tgt_codes, dtype=np.int64), return_inverse=True)
        tgt = tgt.astype(np.int64).ravel()
        n_arr = np.array(n_cls, dtype=np.int64)
        m_arr = np.array(m_sh, dtype=np.int64)

        rounds = []
        if len(src_arr):
            order = np.lexsort((src_arr, tgt))
            tgt_sorted = tgt[order]
            positions = np.arange(len(order))
            starts = np.r_[True, tgt_sorted[1:] != tgt_sorted[:-1]]
            rank = positions - np.maximum.accumulate(np.where(starts, positions, 0))
            for r in range(int(rank.max()) + 1):
                sel = order[rank == r]
                rounds.append((src_arr[sel], tgt[sel], n_arr[sel], m_arr[sel]))

        completions = {
            cls: tuple(np.array(col, dtype=np.int64) for col in zip(*rows))
            for cls, rows in sorted(done.items())
        }
        step = CompiledStep(out_codes, rounds, completions, len(src_arr))

        if len(self._compiled) >= COMPILE_CACHE_SIZE:
            self._compiled.pop(next(iter(self._compiled)))
        self._compiled[key] = step
        self.stats["compiles"] += 1
        logger.debug(
            f"Compiled site t={move.t}: {len(state)} -> {len(out_codes)} signatures, "
            f"{len(src_arr)} transitions in {len(rounds)} rounds"
        )
        return step

    # -- application ---------------------------------------------------------

    def _contributions(self, hi, lo, src, n_cls, m_sh):
        rows_hi, rows_lo = self._mul(
            hi[src], lo[src], self._xpow_hi[n_cls][:, None], self._xpow_lo[n_cls][:, None]
        )
        shifted = m_sh == 1
        if shifted.any():
            rows_hi[shifted, 1:] = rows_hi[shifted, :-1].copy()
            rows_hi[shifted, 0] = 0.0
            rows_lo[shifted, 1:] = rows_lo[shifted, :-1].copy()
            rows_lo[shifted, 0] = 0.0
        return rows_hi, rows_lo

    def _apply_chunk(self, state: StateMap, new_hi, new_lo, src, tgt, n_cls, m_sh) -> None:
        add_hi, add_lo = self._contributions(state.hi, state.lo, src, n_cls, m_sh)
        new_hi[tgt], new_lo[tgt] = self._add(new_hi[tgt], new_lo[tgt], add_hi, add_lo)

    def sweep_site(self, state: StateMap, move: SiteMove) -> StateMap:
        """
        Apply every legal local continuation at one site.

        Completed walks are added to the engine's A/B/E accumulators.
        """
        step = self.compile_step(state, move)
        width = state.hi.shape[1]
        new_hi = np.zeros((len(step.out_codes), width))
        new_lo = np.zeros_like(new_hi)

        for src, tgt, n_cls, m_sh in step.rounds:
            if self.threads > 1 and len(src) >= 2 * MIN_CHUNK_ROWS:
                bounds = np.linspace(0, len(src), self.threads + 1).astype(int)
                futures = [
                    self._pool().submit(
                        self._apply_chunk, state, new_hi, new_lo,
                        src[a:b], tgt[a:b], n_cls[a:b], m_sh[a:b],
                    )
                    for a, b in zip(bounds[:-1], bounds[1:])
                    if b > a
                ]
                for future in futures:
                    future.result()
            else:
                self._apply_chunk(state, new_hi, new_lo, src, tgt, n_cls, m_sh)

        for cls, (src, n_cls, m_sh) in step.completions.items():
            rows_hi, rows_lo = self._contributions(state.hi, state.lo, src, n_cls, m_sh)
            if self.payload == "dd":
                sum_hi, sum_lo = dd_sum_rows(rows_hi, rows_lo)
            else:
                sum_hi, sum_lo = dd_sum_rows(rows_hi, np.zeros_like(rows_hi))
                sum_lo = np.zeros_like(sum_lo)
            acc_hi, acc_lo = self._results[cls]
            self._results[cls] = self._add(acc_hi, acc_lo, sum_hi, sum_lo)

        return StateMap(step.out_codes, new_hi, new_lo)

    def _pool(self) -> ThreadPoolExecutor:
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.threads)
        return self._executor

    def end_column(self, state: StateMap) -> StateMap:
        """Shift the line to the next column and drop zero signatures."""
        rotated = rotate_codes(state.codes, self.layout)
        order = np.argsort(rotated, kind="stable")
        out = StateMap(rotated[order], state.hi[order], state.lo[order])
        dropped = out.prune()
        if dropped:
            self.stats["pruned"] += dropped
            logger.debug(f"Pruned {dropped} zero signatures")
        return out

    def _check_budget(self, state: StateMap) -> None:
        if self.budget_mb is None:
            return
        used = 3 * state.nbytes / 2**20
        if used > self.budget_mb:
            raise BudgetExceededError(
                f"live state needs ~{used:.0f} MB, budget is {self.budget_mb:.0f} MB",
                estimate={"signatures": len(state), "megabytes": round(used, 1)},
            )

    # -- driver ----------------------------------------------------------------

    def run(
        self,
        checkpoint: Optional[Path] = None,
        checkpoint_every: int = 1,
    ) -> SeriesResult:
        spec = self.spec
        started = time.perf_counter()
        logger.info(f"Building {spec.describe()} ({self.payload}, {self.threads} threads)")

        columns = list(self.geometry.column_range)
        state = StateMap.initial(spec.trunc_M)
        first = 0
        if checkpoint is not None and Path(checkpoint).exists():
            state, first = self.load_checkpoint(Path(checkpoint))
            logger.info(f"Resuming from {checkpoint} at column {columns[first] if first < len(columns) else 'end'}")

        try:
            for index in range(first, len(columns)):
                l = columns[index]
                for move in self.geometry.column_sites(l):
                    state = self.sweep_site(state, move)
                    self.stats["peak_signatures"] = max(self.stats["peak_signatures"], len(state))
                state = self.end_column(state)
                self._check_budget(state)
                logger.debug(f"Column {l}: {len(state)} signatures")
                if checkpoint is not None and (index + 1) % checkpoint_every == 0:
                    self.save_checkpoint(Path(checkpoint), state, index + 1)
        finally:
            if self._executor is not None:
                self._executor.shutdown()
                self._executor = None

        elapsed = time.perf_counter() - started
        self.stats["wall_time_s"] = round(elapsed, 3)
        self.stats["columns"] = len(columns)
        logger.info(
            f"Finished {spec.describe()} in {elapsed:.2f}s, "
            f"peak {self.stats['peak_signatures']} signatures"
        )
        return self._result()

    def _result(self) -> SeriesResult:
        def poly(cls):
            if cls not in self._results:
                return None
            hi, lo = self._results[cls]
            return ContactPolynomial(hi.copy(), lo.copy())

        return SeriesResult(
            spec=self.spec,
            A=poly(WalkClass.A),
            B=poly(WalkClass.B),
            E=poly(WalkClass.E),
            stats=dict(self.stats),
        )

    # -- checkpoints -----------------------------------------------------------

    def _header(self, state: StateMap, next_column: int) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "spec": self.spec.key(),
            "with_b": self.with_b,
            "payload": self.payload,
            "next_column": next_column,
            "n_states": len(state),
            "classes": sorted(int(c) for c in self.classes),
            "stats": self.stats,
        }

    def save_checkpoint(self, path: Path, state: StateMap, next_column: int) -> None:
        """Versioned header plus little-endian arrays; written atomically."""
        header = json.dumps(self._header(state, next_column)).encode()
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(state.codes.astype("<i8").tobytes())
            fh.write(state.hi.astype("<f8").tobytes())
            fh.write(state.lo.astype("<f8").tobytes())
            for cls in sorted(self._results):
                hi, lo = self._results[cls]
                fh.write(hi.astype("<f8").tobytes())
                fh.write(lo.astype("<f8").tobytes())
        os.replace(tmp, path)
        logger.debug(f"Checkpoint written to {path} (next column index {next_column})")

    def load_checkpoint(self, path: Path) -> tuple[StateMap, int]:
        data = path.read_bytes()
        if not data.startswith(CHECKPOINT_MAGIC):
            raise CheckpointError(f"{path} is not a sawstrip checkpoint")
        pos = len(CHECKPOINT_MAGIC)
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        try:
            header = json.loads(data[pos:pos + length])
        except json.JSONDecodeError as e:
            raise CheckpointError(f"corrupt checkpoint header in {path}: {e}")
        pos += length

        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"checkpoint version {header.get('version')} not supported")
        expected = self._header(StateMap.initial(self.spec.trunc_M), 0)
        for name in ("spec", "with_b", "payload", "classes"):
            if header.get(name) != expected[name]:
                raise CheckpointError(f"checkpoint {path} was written for a different build ({name})")

        n = header["n_states"]
        width = self.spec.trunc_M + 1

        def take(dtype, count):
            nonlocal pos
            size = np.dtype(dtype).itemsize * count
            if pos + size > len(data):
                raise CheckpointError(f"checkpoint {path} is truncated")
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos).copy()
            pos += size
            return arr

        codes = take("<i8", n).astype(np.int64)
        hi = take("<f8", n * width).reshape(n, width).astype(np.float64)
        lo = take("<f8", n * width).reshape(n, width).astype(np.float64)
        for cls in sorted(self._results):
            self._results[cls] = (take("<f8", width).astype(np.float64), take("<f8", width).astype(np.float64))
        self.stats.update(header.get("stats", {}))
        return StateMap(codes, hi, lo), header["next_column"]


def build_A(
    spec: StripSpec,
    with_b: bool = False,
    threads: Optional[int] = None,
    working_digits: int = 31,
    budget_mb: Optional[float] = None,
    checkpoint: Optional[Path] = None,
    validate: bool = False,
) -> SeriesResult:
    """
    A_T(x, y) of a strip truncated at y-degree trunc_M.

    Sums x**(steps) * y**(contacts) over walks from the origin half-edge to
    another half-edge of the origin boundary. ``with_b`` also collects the
    walks ending on the weighted boundary; a patch spec returns A, B and E.

    Raises:
        WidthLimitError: the strip needs more slots than a packed signature holds
        BudgetExceededError: estimated or live memory above ``budget_mb``
    """
    if budget_mb is not None:
        estimate = estimate_cost(spec, working_digits, with_b)
        if estimate["megabytes"] > budget_mb:
            raise BudgetExceededError(
                f"{spec.describe()} is estimated at {estimate['megabytes']} MB "
                f"({estimate['signatures']} signatures), above the {budget_mb} MB budget",
                estimate=estimate,
            )
    engine = TransferEngine(
        spec,
        with_b=with_b,
        threads=threads,
        working_digits=working_digits,
        budget_mb=budget_mb,
        validate=validate,
    )
    return engine.run(checkpoint=checkpoint)


def build_two_variable(spec: StripSpec, n_max: int, validate: bool = True) -> np.ndarray:
    """
    Exact counts c[n][m] of strip walks with n steps and m contacts.

    Uses the same signature moves as ``build_A`` with an int64 payload
    indexed by (n, m). Only the A class is counted.

    Raises:
        CountOverflowError: counts for n_max could exceed int64
    """
    if n_max < 0:
        raise ConfigError("n_max must be non-negative")
    growth = _COUNT_GROWTH[spec.lattice]
    if n_max * math.log2(growth) + 2 > 62:
        raise CountOverflowError(
            f"walk counts up to n={n_max} may exceed 64-bit integers on the {spec.lattice.value} lattice"
        )

    engine = TransferEngine(spec, with_b=False, threads=1, validate=validate)
    shape = (n_max + 1, n_max + 1)
    codes = np.zeros(1, dtype=np.int64)
    counts = np.zeros((1,) + shape, dtype=np.int64)
    counts[0, 0, 0] = 1
    table = np.zeros(shape, dtype=np.int64)

    def shifted(rows: np.ndarray, dn: int, dm: int) -> np.ndarray:
        out = np.zeros_like(rows)
        out[:, dn:, dm:] = rows[:, : n_max + 1 - dn, : n_max + 1 - dm]
        return out

    for l in engine.geometry.column_range:
        for move in engine.geometry.column_sites(l):
            state = StateMap(codes, np.zeros((len(codes), 1)), np.zeros((len(codes), 1)))
            step = engine.compile_step(state, move)
            new = np.zeros((len(step.out_codes),) + shape, dtype=np.int64)
            for src, tgt, n_cls, m_sh in step.rounds:
                for dn in range(3):
                    for dm in range(2):
                        sel = (n_cls == dn) & (m_sh == dm)
                        if sel.any() and dn <= n_max and dm <= n_max:
                            np.add.at(new, tgt[sel], shifted(counts[src[sel]], dn, dm))
            done = step.completions.get(WalkClass.A)
            if done is not None:
                src, n_cls, m_sh = done
                for i, dn, dm in zip(src.tolist(), n_cls.tolist(), m_sh.tolist()):
                    if dn <= n_max and dm <= n_max:
                        table += shifted(counts[i:i + 1], dn, dm)[0]
            codes, counts = step.out_codes, new

        rotated = rotate_codes(codes, engine.layout)
        order = np.argsort(rotated, kind="stable")
        codes, counts = rotated[order], counts[order]
        keep = counts.any(axis=(1, 2))
        codes, counts = codes[keep], counts[keep]

    return table
