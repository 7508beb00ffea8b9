"""
Brute-force walk enumeration and surface observables.

Depth-first search over self-avoiding walks in the same StripGeometry the
transfer-matrix sweep uses; ground truth for the engine on small strips.
"""

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import mpmath
import numpy as np
from mpmath import mpf

from ..errors import ConfigError, DensityUndefinedError
from .geometry import ORIGIN_STEPS, StripGeometry, StripSpec, WalkClass, WeightingMode

logger = logging.getLogger(__name__)

# Exponential cost; beyond this the TM two-variable mode is the tool
MAX_ORACLE_STEPS = 22


@dataclass
class CountTable:
    """c[n][m]: number of walks with n steps and m surface contacts."""

    counts: np.ndarray

    @classmethod
    def empty(cls, n_max: int) -> "CountTable":
        return cls(np.zeros((n_max + 1, n_max + 1), dtype=np.int64))

    @property
    def n_max(self) -> int:
        return self.counts.shape[0] - 1

    def __getitem__(self, nm: tuple[int, int]) -> int:
        n, m = nm
        if n > self.n_max or m > self.n_max or n < 0 or m < 0:
            return 0
        return int(self.counts[n, m])

    def __eq__(self, other) -> bool:
        if isinstance(other, CountTable):
            other = other.counts
        other = np.asarray(other)
        return self.counts.shape == other.shape and bool(np.array_equal(self.counts, other))

    def as_array(self) -> np.ndarray:
        return self.counts.copy()

    def total(self, n: int) -> int:
        """Plain count of n-step walks (y = 1)."""
        return int(self.counts[n].sum()) if n <= self.n_max else 0

    def nonzero(self) -> list[tuple[int, int, int]]:
        return [(int(n), int(m), int(self.counts[n, m])) for n, m in zip(*np.nonzero(self.counts))]

    def to_csv(self, target: Optional[Path | str] = None) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["n", "m", "count"])
        for row in self.nonzero():
            writer.writerow(row)
        text = buffer.getvalue()
        if target is not None:
            Path(target).write_text(text)
        return text


def enumerate_classes(spec: StripSpec, n_max: int) -> Dict[WalkClass, CountTable]:
    """
    Walks from the origin half-edge, split by the boundary they end on.

    A strip yields A (origin boundary) and B (weighted boundary) tables, a
    patch also E (top and bottom boundaries).
    """
    if n_max > MAX_ORACLE_STEPS:
        raise ConfigError(f"oracle enumeration is limited to n <= {MAX_ORACLE_STEPS}")
    geometry = StripGeometry(spec)
    tables = {c: CountTable.empty(n_max) for c in WalkClass}
    origin = (0, 0)
    if n_max < 1 or not geometry.has_vertex(*origin):
        return tables

    edge_mode = spec.mode == WeightingMode.EDGE
    visited = {origin}

    def search(v: tuple[int, int], n: int, m: int) -> None:
        for walk_class in geometry.exits(*v):
            tables[walk_class].counts[n, m] += 1
        if n == n_max:
            return
        for u in geometry.neighbours(*v):
            if u in visited:
                continue
            gain = geometry.bond_weighted(v, u) if edge_mode else geometry.site_weighted(*u)
            visited.add(u)
            search(u, n + 1, m + int(gain))
            visited.discard(u)

    start_contacts = 0 if edge_mode else int(geometry.site_weighted(*origin))
    search(origin, ORIGIN_STEPS[spec.lattice], start_contacts)
    logger.debug(
        f"Oracle {spec.describe()} n<={n_max}: "
        + ", ".join(f"{c.name}={int(t.counts.sum())}" for c, t in tables.items())
    )
    return tables


def enumerate_walks(spec: StripSpec, n_max: int) -> CountTable:
    """Exact counts of origin-to-origin-boundary walks (the A class)."""
    return enumerate_classes(spec, n_max)[WalkClass.A]


def partition_function(table: CountTable, y, n: int) -> mpf:
    """Z_n(y) = sum_m c[n][m] y**m."""
    if n < 0 or n > table.n_max:
        raise ConfigError(f"n={n} outside the table (n_max={table.n_max})")
    y = mpf(y)
    if y <= 0:
        raise ConfigError("surface fugacity must be positive")
    return mpmath.fsum(int(c) * y**m for m, c in enumerate(table.counts[n]) if c)


def mean_contact_density(table: CountTable, y, n: int) -> mpf:
    """rho_n(y) = (1/n) <m>_n, the mean fraction of steps touching the surface."""
    z = partition_function(table, y, n)
    if z == 0:
        raise DensityUndefinedError(f"no {n}-step walks in the table: Z_n vanishes")
    y = mpf(y)
    first = mpmath.fsum(m * int(c) * y**m for m, c in enumerate(table.counts[n]) if c)
    return first / (n * z)
